#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lvst {

/// Targets with |x| below this are left out of MAPE.
inline constexpr double kMapeFloor = 1.0;

struct ErrorStats {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // fraction; NaN when every target was excluded
  std::size_t count = 0;
  std::size_t mape_excluded = 0;
};

class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t horizons = 1);

  void add(double predicted, double actual, std::size_t horizon = 0);
  ErrorStats overall() const;
  ErrorStats horizon(std::size_t h) const;
  std::size_t horizons() const { return sums_.size(); }

 private:
  struct Sums {
    double abs = 0.0, sq = 0.0, pct = 0.0;
    std::size_t n = 0, pct_n = 0;
  };
  static ErrorStats finish(const Sums& s);
  std::vector<Sums> sums_;
};

ErrorStats compute_metrics(std::span<const double> predicted, std::span<const double> actual);

struct MetricsReport {
  std::string model;
  std::string split;
  std::size_t windows = 0;
  ErrorStats overall;
  std::vector<ErrorStats> per_horizon;
  int interval_minutes = 5;
};

nlohmann::json to_json(const ErrorStats& s);
nlohmann::json to_json(const MetricsReport& r);

}  // namespace lvst

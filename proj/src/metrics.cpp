#include "lvst/metrics.hpp"

#include <cmath>
#include <limits>

#include "lvst/tensor.hpp"

namespace lvst {

MetricAccumulator::MetricAccumulator(std::size_t horizons) : sums_(horizons) {}

void MetricAccumulator::add(double predicted, double actual, std::size_t horizon) {
  Sums& s = sums_.at(horizon);
  const double err = predicted - actual;
  s.abs += std::abs(err);
  s.sq += err * err;
  ++s.n;
  if (std::abs(actual) >= kMapeFloor) {
    s.pct += std::abs(err / actual);
    ++s.pct_n;
  }
}

ErrorStats MetricAccumulator::finish(const Sums& s) {
  ErrorStats e;
  e.count = s.n;
  e.mape_excluded = s.n - s.pct_n;
  if (s.n == 0) {
    e.mae = e.rmse = e.mape = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  const double n = static_cast<double>(s.n);
  e.mae = s.abs / n;
  e.rmse = std::sqrt(s.sq / n);
  e.mape = s.pct_n ? s.pct / static_cast<double>(s.pct_n) : std::numeric_limits<double>::quiet_NaN();
  return e;
}

ErrorStats MetricAccumulator::overall() const {
  Sums total;
  for (const Sums& s : sums_) {
    total.abs += s.abs;
    total.sq += s.sq;
    total.pct += s.pct;
    total.n += s.n;
    total.pct_n += s.pct_n;
  }
  return finish(total);
}

ErrorStats MetricAccumulator::horizon(std::size_t h) const { return finish(sums_.at(h)); }

ErrorStats compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw DimensionError("metric inputs differ in length");
  if (predicted.empty()) throw InputError("metrics over an empty set");
  MetricAccumulator acc;
  for (std::size_t i = 0; i < predicted.size(); ++i) acc.add(predicted[i], actual[i]);
  return acc.overall();
}

nlohmann::json to_json(const ErrorStats& s) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"mae", num(s.mae)},
          {"rmse", num(s.rmse)},
          {"mape_pct", num(100.0 * s.mape)},
          {"count", s.count},
          {"mape_excluded", s.mape_excluded}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json horizons = nlohmann::json::array();
  for (std::size_t h = 0; h < r.per_horizon.size(); ++h) {
    nlohmann::json e = to_json(r.per_horizon[h]);
    e["step"] = h + 1;
    e["minutes_ahead"] = static_cast<int>(h + 1) * r.interval_minutes;
    horizons.push_back(std::move(e));
  }
  return {{"model", r.model},
          {"split", r.split},
          {"windows", r.windows},
          {"overall", to_json(r.overall)},
          {"per_horizon", std::move(horizons)},
          {"mape_floor", kMapeFloor}};
}

}  // namespace lvst

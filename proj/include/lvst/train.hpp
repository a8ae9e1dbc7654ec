#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lvst/data.hpp"
#include "lvst/metrics.hpp"
#include "lvst/model.hpp"
#include "lvst/params.hpp"

namespace lvst {

/// Views from the training period only, plus the Laplacian basis.
struct Preprocessed {
  ViewMasks masks;
  LaplacianBasis basis;
};
Preprocessed preprocess(const RoadGraph& g, const WindowedDataset& data, const ViewConfig& views,
                        std::size_t k_eigen);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  std::size_t patience = 15;  // epochs without validation improvement; 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;   // optimizer-step cap, 0 = none
  double max_seconds = 0.0;    // wall-clock budget, 0 = none; no epoch starts that would overrun it
  std::size_t eval_batch = 64;

  void validate() const;
};

class Adam {
 public:
  Adam(const ParamStore& params, const TrainConfig& cfg);
  void step(ParamStore& params, const std::vector<Tensor>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch MAE, normalized units
  double val_mae = 0.0;     // raw units; NaN without validation windows
  std::size_t steps = 0;    // cumulative optimizer steps
  double seconds = 0.0;
};

struct TrainResult {
  ParamStore params;  // best-validation weights (last weights without validation)
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t steps = 0;
};

/// One optimizer step on a batch; returns the batch loss (normalized MAE).
double train_step(ParamStore& params, Adam& opt, const ModelConfig& cfg, const SpatialContext& ctx,
                  const Batch& batch, std::mt19937_64& rng);

/// Mini-batch Adam on MAE. Shuffle order and dropout are derived from cfg.seed.
/// Throws NumericError naming the epoch and batch if the loss is not finite.
TrainResult train(ParamStore init, const ModelConfig& model_cfg, const SpatialContext& ctx,
                  const WindowedDataset& data, std::span<const std::size_t> train_windows,
                  std::span<const std::size_t> val_windows, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

TrainResult train(ParamStore init, const ModelConfig& model_cfg, const SpatialContext& ctx,
                  const WindowedDataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// De-normalized forecasts [B, T', N] in inference mode.
Tensor predict(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
               const WindowedDataset& data, std::span<const std::size_t> starts,
               AttentionCapture* capture = nullptr);

MetricsReport evaluate(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                       const WindowedDataset& data, std::span<const std::size_t> windows,
                       std::size_t batch = 64);
MetricsReport evaluate(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                       const WindowedDataset& data, Split split, std::size_t batch = 64);

/// Mean normalized MAE on windows, inference mode.
double normalized_mae(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                      const WindowedDataset& data, std::span<const std::size_t> windows);

/// Per-slot training mean. Uses (day-of-week, time-of-day) slots when the
/// training split spans a full week, time-of-day slots otherwise.
class HistoricalAverage {
 public:
  explicit HistoricalAverage(const WindowedDataset& data);
  bool weekly() const { return weekly_; }
  /// Forecast for one absolute step index, N values.
  std::span<const double> predict(std::size_t step) const;

 private:
  std::size_t slot(std::size_t step) const;
  const WindowedDataset* data_;
  bool weekly_ = false;
  std::size_t n_ = 0;
  std::vector<double> means_;  // [slots, N]
};

MetricsReport ha_evaluate(const WindowedDataset& data, std::span<const std::size_t> windows);
MetricsReport ha_evaluate(const WindowedDataset& data, Split split);

}  // namespace lvst

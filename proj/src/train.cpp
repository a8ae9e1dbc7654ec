#include "lvst/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lvst {

Preprocessed preprocess(const RoadGraph& g, const WindowedDataset& data, const ViewConfig& views,
                        std::size_t k_eigen) {
  if (g.n_nodes != data.n_nodes())
    throw InputError("graph has " + std::to_string(g.n_nodes) + " nodes but readings have " +
                     std::to_string(data.n_nodes()));
  Preprocessed p;
  p.masks = build_views(g, slice_steps(data.raw, data.splits.train), views);
  p.basis = laplacian_basis(g, k_eigen);
  return p;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs == 0) throw ConfigError("max epochs must be positive");
  if (patience > max_epochs) throw ConfigError("patience exceeds max epochs");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (max_seconds < 0.0) throw ConfigError("max seconds must be >= 0");
  if (eval_batch == 0) throw ConfigError("eval batch must be positive");
}

Adam::Adam(const ParamStore& params, const TrainConfig& cfg)
    : lr_(cfg.lr), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.tensor(i).shape(), 0.0);
    v_.emplace_back(params.tensor(i).shape(), 0.0);
  }
}

void Adam::step(ParamStore& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw DimensionError("gradient count does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params.tensor(i).data();
    const double* g = grads[i].data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const std::size_t n = params.tensor(i).size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double train_step(ParamStore& params, Adam& opt, const ModelConfig& cfg, const SpatialContext& ctx,
                  const Batch& batch, std::mt19937_64& rng) {
  Tape tape;
  ParamBinding p(tape, params, true);
  ForwardOptions opts;
  opts.rng = &rng;
  Var pred = model_forward(p, batch.x, batch.cal, ctx, cfg, opts);
  Var loss = ag::mean_abs_error(pred, batch.y);
  const double value = loss.value().item();
  tape.backward(loss);
  opt.step(params, p.grads());
  return value;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

TrainResult train(ParamStore init, const ModelConfig& model_cfg, const SpatialContext& ctx,
                  const WindowedDataset& data, std::span<const std::size_t> train_windows,
                  std::span<const std::size_t> val_windows, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (train_windows.empty()) throw InputError("no training windows");

  const auto t0 = Clock::now();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_windows.begin(), train_windows.end());

  TrainResult result;
  result.params = init;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  ParamStore& params = init;
  Adam opt(params, cfg);
  std::size_t since_best = 0;
  bool stop = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const Batch batch = assemble_batch(data, std::span(order).subspan(b0, b1 - b0));
      double loss = 0.0;
      try {
        loss = train_step(params, opt, model_cfg, ctx, batch, rng);
      } catch (const NumericError& e) {
        throw NumericError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1));
      loss_sum += loss;
      ++batches;
      if (cfg.max_steps && opt.steps() >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.steps = opt.steps();
    if (!val_windows.empty()) {
      log.val_mae = evaluate(params, model_cfg, ctx, data, val_windows, cfg.eval_batch).overall.mae;
      if (log.val_mae < result.best_val_mae) {
        result.best_val_mae = log.val_mae;
        result.best_epoch = epoch;
        result.params = params;
        since_best = 0;
      } else if (cfg.patience && ++since_best >= cfg.patience) {
        stop = true;
      }
    } else {
      log.val_mae = std::numeric_limits<double>::quiet_NaN();
      result.best_epoch = epoch;
      result.params = params;
    }
    log.seconds = seconds_since(t0);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    // Stop when another epoch as long as this one would overrun the budget.
    const double last = log.seconds - (result.log.size() > 1 ? result.log[result.log.size() - 2].seconds : 0.0);
    if (cfg.max_seconds > 0.0 && log.seconds + last > cfg.max_seconds) stop = true;
  }
  if (val_windows.empty()) result.best_val_mae = std::numeric_limits<double>::quiet_NaN();
  result.steps = opt.steps();
  return result;
}

TrainResult train(ParamStore init, const ModelConfig& model_cfg, const SpatialContext& ctx,
                  const WindowedDataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  return train(std::move(init), model_cfg, ctx, data, data.train_windows, data.val_windows, cfg, on_epoch);
}

Tensor predict(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
               const WindowedDataset& data, std::span<const std::size_t> starts,
               AttentionCapture* capture) {
  if (starts.empty()) throw InputError("no windows to predict");
  const Batch batch = assemble_batch(data, starts);
  Tape tape;
  ParamBinding p(tape, params, false);
  ForwardOptions opts;
  opts.capture = capture;
  Tensor out = model_forward(p, batch.x, batch.cal, ctx, cfg, opts).value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data.normalizer.invert(out[i]);
  return out;
}

MetricsReport evaluate(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                       const WindowedDataset& data, std::span<const std::size_t> windows,
                       std::size_t batch) {
  if (windows.empty()) throw InputError("evaluation over an empty split");
  if (batch == 0) throw ConfigError("eval batch must be positive");
  const std::size_t h = data.output_len, n = data.n_nodes();
  MetricAccumulator acc(h);
  for (std::size_t b0 = 0; b0 < windows.size(); b0 += batch) {
    const auto chunk = windows.subspan(b0, std::min(batch, windows.size() - b0));
    const Tensor pred = predict(params, cfg, ctx, data, chunk);
    const Tensor truth = raw_targets(data, chunk);
    for (std::size_t w = 0; w < chunk.size(); ++w)
      for (std::size_t k = 0; k < h; ++k)
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = (w * h + k) * n + i;
          acc.add(pred[idx], truth[idx], k);
        }
  }
  MetricsReport r;
  r.model = "lvst";
  r.windows = windows.size();
  r.interval_minutes = static_cast<int>(1440 / data.steps_per_day);
  r.overall = acc.overall();
  for (std::size_t k = 0; k < h; ++k) r.per_horizon.push_back(acc.horizon(k));
  return r;
}

MetricsReport evaluate(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                       const WindowedDataset& data, Split split, std::size_t batch) {
  MetricsReport r = evaluate(params, cfg, ctx, data, data.windows(split), batch);
  r.split = split_name(split);
  return r;
}

double normalized_mae(const ParamStore& params, const ModelConfig& cfg, const SpatialContext& ctx,
                      const WindowedDataset& data, std::span<const std::size_t> windows) {
  if (windows.empty()) throw InputError("no windows");
  const Batch batch = assemble_batch(data, windows);
  Tape tape;
  ParamBinding p(tape, params, false);
  const Tensor pred = model_forward(p, batch.x, batch.cal, ctx, cfg).value();
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - batch.y[i]);
  return s / static_cast<double>(pred.size());
}

HistoricalAverage::HistoricalAverage(const WindowedDataset& data) : data_(&data), n_(data.n_nodes()) {
  const StepRange& tr = data.splits.train;
  const std::size_t spd = data.steps_per_day;
  weekly_ = tr.size() >= 7 * spd;
  const std::size_t slots = weekly_ ? 7 * spd : spd;

  std::vector<double> sum(slots * n_, 0.0), tod_sum(spd * n_, 0.0), total(n_, 0.0);
  std::vector<std::size_t> cnt(slots, 0), tod_cnt(spd, 0);
  for (std::size_t s = tr.begin; s < tr.end; ++s) {
    const std::size_t sl = slot(s), tod = data.calendar.tod[s];
    ++cnt[sl];
    ++tod_cnt[tod];
    for (std::size_t i = 0; i < n_; ++i) {
      const double x = data.raw(s, i);
      sum[sl * n_ + i] += x;
      tod_sum[tod * n_ + i] += x;
      total[i] += x;
    }
  }
  means_.assign(slots * n_, 0.0);
  for (std::size_t sl = 0; sl < slots; ++sl) {
    const std::size_t tod = sl % spd;
    for (std::size_t i = 0; i < n_; ++i) {
      if (cnt[sl])
        means_[sl * n_ + i] = sum[sl * n_ + i] / static_cast<double>(cnt[sl]);
      else if (tod_cnt[tod])
        means_[sl * n_ + i] = tod_sum[tod * n_ + i] / static_cast<double>(tod_cnt[tod]);
      else
        means_[sl * n_ + i] = total[i] / static_cast<double>(tr.size());
    }
  }
}

std::size_t HistoricalAverage::slot(std::size_t step) const {
  const std::size_t tod = data_->calendar.tod.at(step);
  return weekly_ ? data_->calendar.dow[step] * data_->steps_per_day + tod : tod;
}

std::span<const double> HistoricalAverage::predict(std::size_t step) const {
  return std::span<const double>(means_).subspan(slot(step) * n_, n_);
}

MetricsReport ha_evaluate(const WindowedDataset& data, std::span<const std::size_t> windows) {
  if (windows.empty()) throw InputError("evaluation over an empty split");
  const HistoricalAverage ha(data);
  const std::size_t h = data.output_len, n = data.n_nodes();
  MetricAccumulator acc(h);
  for (std::size_t w : windows)
    for (std::size_t k = 0; k < h; ++k) {
      const std::size_t step = w + data.input_len + k;
      const auto pred = ha.predict(step);
      for (std::size_t i = 0; i < n; ++i) acc.add(pred[i], data.raw(step, i), k);
    }
  MetricsReport r;
  r.model = "historical_average";
  r.windows = windows.size();
  r.interval_minutes = static_cast<int>(1440 / data.steps_per_day);
  r.overall = acc.overall();
  for (std::size_t k = 0; k < h; ++k) r.per_horizon.push_back(acc.horizon(k));
  return r;
}

MetricsReport ha_evaluate(const WindowedDataset& data, Split split) {
  MetricsReport r = ha_evaluate(data, data.windows(split));
  r.split = split_name(split);
  return r;
}

}  // namespace lvst

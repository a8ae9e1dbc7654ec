#pragma once

// Multi-level spatio-temporal transformer. Each encoder layer runs, on
// Z [B, T, N, d]:
//   three masked spatial attentions (local / global / pivotal views), per t
//   a tanh*sigmoid gated filter followed by temporal attention, per node
//   concat(4 branches) -> linear -> +Z -> LN -> MLP(fc, gelu, fc, STCB) -> + -> LN
// A regression head maps the last layer to [B, T', N].

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lvst/autograd.hpp"
#include "lvst/embedding.hpp"
#include "lvst/graph_views.hpp"
#include "lvst/params.hpp"

namespace lvst {

using kernels::MaskMode;

struct ModelConfig {
  std::size_t n_nodes = 0;
  std::size_t input_len = 12;
  std::size_t output_len = 12;
  std::size_t d = 64;
  std::size_t k_eigen = 8;
  std::size_t layers = 6;
  std::size_t heads_spatial = 4;
  std::size_t heads_temporal = 4;
  std::size_t steps_per_day = 288;
  double dropout = 0.1;
  MaskMode mask_mode = MaskMode::kHard;
  bool use_stcb = true;

  EmbedConfig embed() const { return {d, k_eigen, input_len, steps_per_day, 7}; }
  /// Throws ConfigError for non-positive sizes or head counts that do not divide d.
  void validate() const;
};

ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Masks and basis as consumed by the encoder. The pivotal view is divided by
/// its largest positive entry so weights lie in (0, 1].
struct SpatialContext {
  Tensor local;
  Tensor global;
  Tensor pivotal;
  Tensor basis;  // [N, k]
};

Tensor rescale_pivotal(const Tensor& pivotal);
SpatialContext make_context(const ViewMasks& masks, const LaplacianBasis& basis);

/// Attention weights captured during a forward pass, one entry per layer,
/// each [groups, heads, len, len].
struct AttentionCapture {
  std::vector<Tensor> local, global, pivotal, temporal;
};

struct ForwardOptions {
  std::mt19937_64* rng = nullptr;  // enables dropout when set
  AttentionCapture* capture = nullptr;
};

struct BranchOutputs {
  Var local, global, pivotal;
};

/// One masked multi-head attention branch over tokens on axis rank-2:
/// z [..., N, d] -> [..., N, d]. Parameters are `<prefix>.wq/.wk/.wv/.wo`.
Var masked_spatial_attention(const ParamBinding& p, const std::string& prefix, const Var& z,
                             const Tensor& mask, std::size_t heads, MaskMode mode, double dropout,
                             const ForwardOptions& opts, Tensor* probs = nullptr);

BranchOutputs mvsa(const ParamBinding& p, const std::string& layer, const Var& z,
                   const SpatialContext& ctx, const ModelConfig& cfg, const ForwardOptions& opts);

Var gated_filter(const ParamBinding& p, const std::string& layer, const Var& z);

/// Per-node unmasked attention across the T axis of z [B, T, N, d].
Var temporal_attention(const ParamBinding& p, const std::string& layer, const Var& zbar,
                       const ModelConfig& cfg, const ForwardOptions& opts);

Var fuse_and_ffn(const ParamBinding& p, const std::string& layer, const BranchOutputs& spatial,
                 const Var& h_temporal, const Var& z_in, const ModelConfig& cfg,
                 const ForwardOptions& opts);

Var encoder_layer(const ParamBinding& p, std::size_t index, const Var& z, const SpatialContext& ctx,
                  const ModelConfig& cfg, const ForwardOptions& opts);
Var encoder_forward(const ParamBinding& p, const Var& z, const SpatialContext& ctx,
                    const ModelConfig& cfg, const ForwardOptions& opts);

/// [B, T, N, d] -> [B, T', N].
Var regression_head(const ParamBinding& p, const Var& zhat, const ModelConfig& cfg);

/// Full model: normalized windows x [B, T, N] -> normalized forecast [B, T', N].
Var model_forward(const ParamBinding& p, const Tensor& x, const CalendarBatch& cal,
                  const SpatialContext& ctx, const ModelConfig& cfg, const ForwardOptions& opts = {});

std::string layer_prefix(std::size_t index);

}  // namespace lvst

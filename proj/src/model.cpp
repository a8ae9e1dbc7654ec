#include "lvst/model.hpp"

#include <algorithm>
#include <cmath>

namespace lvst {

namespace {

constexpr const char* kBranches[] = {"local", "global", "pivotal", "temporal"};

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void add_linear(ParamStore& s, const std::string& name, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
  s.add(name, uniform_tensor({in, out}, fan_in_bound(in), rng));
}

}  // namespace

std::string layer_prefix(std::size_t index) { return "layer" + std::to_string(index); }

void ModelConfig::validate() const {
  if (n_nodes == 0 || input_len == 0 || output_len == 0 || d == 0 || layers == 0 || k_eigen == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (d < 2) throw ConfigError("hidden width d must be >= 2");
  if (heads_spatial == 0 || d % heads_spatial != 0) {
    throw ConfigError("d=" + std::to_string(d) + " not divisible by spatial heads " +
                      std::to_string(heads_spatial));
  }
  if (heads_temporal == 0 || d % heads_temporal != 0) {
    throw ConfigError("d=" + std::to_string(d) + " not divisible by temporal heads " +
                      std::to_string(heads_temporal));
  }
  if (k_eigen + 1 > n_nodes) {
    throw ConfigError("k_eigen=" + std::to_string(k_eigen) + " needs at least k+1 nodes");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore s;
  init_embedding_params(s, cfg.embed(), rng);
  const std::size_t d = cfg.d;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string L = layer_prefix(l);
    for (const char* br : kBranches) {
      const std::string b = L + "." + br;
      add_linear(s, b + ".wq", d, d, rng);
      add_linear(s, b + ".wk", d, d, rng);
      add_linear(s, b + ".wv", d, d, rng);
      add_linear(s, b + ".wo", d, d, rng);
    }
    add_linear(s, L + ".gate.filter_w", d, d, rng);
    s.add(L + ".gate.filter_b", Tensor({d}));
    add_linear(s, L + ".gate.gate_w", d, d, rng);
    s.add(L + ".gate.gate_b", Tensor({d}));
    add_linear(s, L + ".fuse.w", 4 * d, d, rng);
    s.add(L + ".fuse.b", Tensor({d}));
    add_linear(s, L + ".ffn.w1", d, 4 * d, rng);
    s.add(L + ".ffn.b1", Tensor({4 * d}));
    add_linear(s, L + ".ffn.w2", 4 * d, d, rng);
    s.add(L + ".ffn.b2", Tensor({d}));
    s.add(L + ".ln1.gain", Tensor({d}, 1.0));
    s.add(L + ".ln1.bias", Tensor({d}));
    s.add(L + ".ln2.gain", Tensor({d}, 1.0));
    s.add(L + ".ln2.bias", Tensor({d}));
  }
  add_linear(s, "head.w1", d, d, rng);
  s.add("head.b1", Tensor({d}));
  add_linear(s, "head.w2", cfg.input_len * d, cfg.output_len, rng);
  s.add("head.b2", Tensor({cfg.output_len}));
  return s;
}

Tensor rescale_pivotal(const Tensor& pivotal) {
  double mx = 0.0;
  for (double v : pivotal.values()) mx = std::max(mx, v);
  Tensor out = pivotal;
  if (mx > 0.0)
    for (double& v : out.values()) v = v > 0.0 ? v / mx : 0.0;
  return out;
}

SpatialContext make_context(const ViewMasks& masks, const LaplacianBasis& basis) {
  return {masks.local, masks.global, rescale_pivotal(masks.pivotal), basis.vectors};
}

Var masked_spatial_attention(const ParamBinding& p, const std::string& prefix, const Var& z,
                             const Tensor& mask, std::size_t heads, MaskMode mode, double dropout,
                             const ForwardOptions& opts, Tensor* probs) {
  for (double m : mask.values()) {
    if (m < 0.0) throw InputError("attention mask entries must be nonnegative");
  }
  const Var q = ag::linear(z, p[prefix + ".wq"]);
  const Var k = ag::linear(z, p[prefix + ".wk"]);
  const Var v = ag::linear(z, p[prefix + ".wv"]);
  ag::AttentionSpec spec{heads, &mask, mode, dropout, opts.rng};
  return ag::linear(ag::attention(q, k, v, spec, probs), p[prefix + ".wo"]);
}

BranchOutputs mvsa(const ParamBinding& p, const std::string& layer, const Var& z,
                   const SpatialContext& ctx, const ModelConfig& cfg, const ForwardOptions& opts) {
  const std::size_t n = z.shape().at(z.shape().size() - 2);
  for (const Tensor* m : {&ctx.local, &ctx.global, &ctx.pivotal}) {
    if (m->rank() != 2 || m->dim(0) != n || m->dim(1) != n) {
      throw DimensionError("view mask " + shape_str(m->shape()) + " for " + std::to_string(n) + " nodes");
    }
  }
  AttentionCapture* cap = opts.capture;
  Tensor pl, pg, pp;
  BranchOutputs out{
      masked_spatial_attention(p, layer + ".local", z, ctx.local, cfg.heads_spatial, cfg.mask_mode,
                               cfg.dropout, opts, cap ? &pl : nullptr),
      masked_spatial_attention(p, layer + ".global", z, ctx.global, cfg.heads_spatial, cfg.mask_mode,
                               cfg.dropout, opts, cap ? &pg : nullptr),
      masked_spatial_attention(p, layer + ".pivotal", z, ctx.pivotal, cfg.heads_spatial,
                               cfg.mask_mode, cfg.dropout, opts, cap ? &pp : nullptr),
  };
  if (cap) {
    cap->local.push_back(std::move(pl));
    cap->global.push_back(std::move(pg));
    cap->pivotal.push_back(std::move(pp));
  }
  return out;
}

Var gated_filter(const ParamBinding& p, const std::string& layer, const Var& z) {
  const Var filter = ag::tanh(ag::linear(z, p[layer + ".gate.filter_w"], p[layer + ".gate.filter_b"]));
  const Var gate = ag::sigmoid(ag::linear(z, p[layer + ".gate.gate_w"], p[layer + ".gate.gate_b"]));
  return ag::mul(filter, gate);
}

Var temporal_attention(const ParamBinding& p, const std::string& layer, const Var& zbar,
                       const ModelConfig& cfg, const ForwardOptions& opts) {
  if (zbar.shape().size() != 4) {
    throw DimensionError("temporal attention expects [B, T, N, d], got " + shape_str(zbar.shape()));
  }
  const std::string b = layer + ".temporal";
  // [B, T, N, d] -> [B, N, T, d]: each node's series becomes one attention group.
  const Var by_node = ag::permute(zbar, {0, 2, 1, 3});
  const Var q = ag::linear(by_node, p[b + ".wq"]);
  const Var k = ag::linear(by_node, p[b + ".wk"]);
  const Var v = ag::linear(by_node, p[b + ".wv"]);
  Tensor probs;
  ag::AttentionSpec spec{cfg.heads_temporal, nullptr, MaskMode::kNone, cfg.dropout, opts.rng};
  const Var att = ag::attention(q, k, v, spec, opts.capture ? &probs : nullptr);
  if (opts.capture) opts.capture->temporal.push_back(std::move(probs));
  return ag::permute(ag::linear(att, p[b + ".wo"]), {0, 2, 1, 3});
}

Var fuse_and_ffn(const ParamBinding& p, const std::string& layer, const BranchOutputs& spatial,
                 const Var& h_temporal, const Var& z_in, const ModelConfig& cfg,
                 const ForwardOptions& opts) {
  const Var parts[] = {spatial.local, spatial.global, spatial.pivotal, h_temporal};
  const Var fused = ag::linear(ag::concat_lastdim(parts), p[layer + ".fuse.w"], p[layer + ".fuse.b"]);
  const Var x1 = ag::layer_norm(ag::add(z_in, fused), p[layer + ".ln1.gain"], p[layer + ".ln1.bias"]);
  Var mlp = ag::linear(ag::gelu(ag::linear(x1, p[layer + ".ffn.w1"], p[layer + ".ffn.b1"])),
                       p[layer + ".ffn.w2"], p[layer + ".ffn.b2"]);
  if (cfg.use_stcb) mlp = ag::stcb(mlp);
  mlp = ag::dropout(mlp, cfg.dropout, opts.rng);
  return ag::layer_norm(ag::add(x1, mlp), p[layer + ".ln2.gain"], p[layer + ".ln2.bias"]);
}

Var encoder_layer(const ParamBinding& p, std::size_t index, const Var& z, const SpatialContext& ctx,
                  const ModelConfig& cfg, const ForwardOptions& opts) {
  const std::string layer = layer_prefix(index);
  const BranchOutputs spatial = mvsa(p, layer, z, ctx, cfg, opts);
  const Var h_t = temporal_attention(p, layer, gated_filter(p, layer, z), cfg, opts);
  return fuse_and_ffn(p, layer, spatial, h_t, z, cfg, opts);
}

Var encoder_forward(const ParamBinding& p, const Var& z, const SpatialContext& ctx,
                    const ModelConfig& cfg, const ForwardOptions& opts) {
  Var h = z;
  for (std::size_t l = 0; l < cfg.layers; ++l) h = encoder_layer(p, l, h, ctx, cfg, opts);
  return h;
}

Var regression_head(const ParamBinding& p, const Var& zhat, const ModelConfig& cfg) {
  const Shape& s = zhat.shape();
  if (s.size() != 4 || s[1] != cfg.input_len || s[3] != cfg.d) {
    throw DimensionError("regression head expects [B, " + std::to_string(cfg.input_len) + ", N, " +
                         std::to_string(cfg.d) + "], got " + shape_str(s));
  }
  const std::size_t b = s[0], t = s[1], n = s[2], d = s[3];
  const Var h = ag::gelu(ag::linear(zhat, p["head.w1"], p["head.b1"]));
  const Var per_node = ag::reshape(ag::permute(h, {0, 2, 1, 3}), {b, n, t * d});
  const Var y = ag::linear(per_node, p["head.w2"], p["head.b2"]);  // [B, N, T']
  return ag::permute(y, {0, 2, 1});
}

Var model_forward(const ParamBinding& p, const Tensor& x, const CalendarBatch& cal,
                  const SpatialContext& ctx, const ModelConfig& cfg, const ForwardOptions& opts) {
  if (x.rank() != 3 || x.dim(2) != cfg.n_nodes) {
    throw DimensionError("model input must be [B, T, " + std::to_string(cfg.n_nodes) + "], got " +
                         shape_str(x.shape()));
  }
  const Var z = embed(p, cfg.embed(), p.tape().constant(x), cal, ctx.basis);
  return regression_head(p, encoder_forward(p, z, ctx, cfg, opts), cfg);
}

}  // namespace lvst

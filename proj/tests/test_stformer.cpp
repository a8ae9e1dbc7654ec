#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lvst/linalg.hpp"
#include "lvst/model.hpp"

using namespace lvst;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

Tensor random_mask(std::size_t n, std::mt19937_64& rng, bool weighted) {
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (uniform01(rng) < 0.5) continue;
      m(i, j) = weighted ? 0.1 + uniform01(rng) : 1.0;
    }
  for (std::size_t i = 0; i < n; ++i) m(i, i) = weighted ? 0.5 : 1.0;
  return m;
}

ModelConfig tiny(std::size_t n, std::size_t layers = 1) {
  ModelConfig c;
  c.n_nodes = n;
  c.input_len = 3;
  c.output_len = 2;
  c.d = 8;
  c.k_eigen = 2;
  c.layers = layers;
  c.heads_spatial = 2;
  c.heads_temporal = 2;
  c.steps_per_day = 24;
  c.dropout = 0.0;
  return c;
}

SpatialContext random_context(std::size_t n, std::mt19937_64& rng) {
  return {random_mask(n, rng, false), random_mask(n, rng, false), random_mask(n, rng, true),
          random_tensor({n, 2}, rng)};
}

// One-branch store with every projection set to `w`.
ParamStore branch_store(const Tensor& w) {
  ParamStore s;
  for (const char* k : {"a.wq", "a.wk", "a.wv", "a.wo"}) s.add(k, w);
  return s;
}

Tensor permute_nodes(const Tensor& z, const std::vector<std::size_t>& perm) {
  // z: [B, T, N, d]
  const Shape& s = z.shape();
  Tensor out(s);
  const std::size_t n = s[2], d = s[3];
  for (std::size_t bt = 0; bt < s[0] * s[1]; ++bt)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) out[(bt * n + perm[i]) * d + c] = z[(bt * n + i) * d + c];
  return out;
}

Tensor permute_square(const Tensor& m, const std::vector<std::size_t>& perm) {
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j) out(perm[i], perm[j]) = m(i, j);
  return out;
}

}  // namespace

TEST(MaskedAttention, UniformWeightsWhenQueriesAreZero) {
  std::mt19937_64 rng(1);
  ParamStore s = branch_store(Tensor::identity(4));
  s.at("a.wq") = Tensor({4, 4}, 0.0);
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor z = random_tensor({3, 4}, rng);
  Tensor probs;
  const Tensor out = masked_spatial_attention(p, "a", tape.constant(z), Tensor({3, 3}, 1.0), 2, MaskMode::kHard,
                                              0.0, {}, &probs)
                         .value();
  for (double v : probs.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  for (std::size_t c = 0; c < 4; ++c) {
    const double mean = (z(0, c) + z(1, c) + z(2, c)) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out(i, c), mean, 1e-15);
  }
}

TEST(MaskedAttention, IdentityMaskAttendsToSelf) {
  std::mt19937_64 rng(2);
  const ParamStore s = branch_store(random_tensor({4, 4}, rng));
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor z = random_tensor({5, 4}, rng);
  const Tensor out =
      masked_spatial_attention(p, "a", tape.constant(z), Tensor::identity(5), 2, MaskMode::kHard, 0.0, {}).value();
  const Tensor want = matmul_plain(matmul_plain(z, s.at("a.wv")), s.at("a.wo"));
  EXPECT_LE(max_abs_diff(out, want), 1e-14);
}

TEST(MaskedAttention, LargerPivotalWeightRaisesAttention) {
  std::mt19937_64 rng(3);
  const ParamStore s = branch_store(Tensor::identity(2));
  Tape tape;
  ParamBinding p(tape, s);
  const Var z = tape.constant(Tensor::from_rows({{1.0, 0.5}, {0.8, 1.2}, {0.3, -0.2}}));
  Tensor ones_probs, piv_probs;
  Tensor piv({3, 3}, 1.0);
  piv(0, 1) = 2.0;
  masked_spatial_attention(p, "a", z, Tensor({3, 3}, 1.0), 1, MaskMode::kHard, 0.0, {}, &ones_probs);
  masked_spatial_attention(p, "a", z, piv, 1, MaskMode::kHard, 0.0, {}, &piv_probs);
  EXPECT_GT(piv_probs[1], ones_probs[1]);
}

TEST(MaskedAttention, EmptyMaskRowAttendsToItselfWithoutNan) {
  std::mt19937_64 rng(4);
  const ParamStore s = branch_store(random_tensor({4, 4}, rng));
  Tape tape;
  ParamBinding p(tape, s);
  Tensor mask({3, 3}, 1.0);
  for (std::size_t j = 0; j < 3; ++j) mask(1, j) = 0.0;
  Tensor probs;
  const Tensor out = masked_spatial_attention(p, "a", tape.constant(random_tensor({3, 4}, rng)), mask, 2,
                                              MaskMode::kHard, 0.0, {}, &probs)
                         .value();
  EXPECT_TRUE(out.all_finite());
  for (std::size_t h = 0; h < 2; ++h) {
    EXPECT_EQ(probs[h * 9 + 3 + 1], 1.0);
    EXPECT_EQ(probs[h * 9 + 3 + 0], 0.0);
  }
  EXPECT_THROW(masked_spatial_attention(p, "a", tape.constant(random_tensor({3, 4}, rng)), Tensor({3, 3}, -1.0),
                                        2, MaskMode::kHard, 0.0, {}),
               InputError);
}

TEST(Mvsa, WeightsVanishOffMaskAndRowsSumToOne) {
  std::mt19937_64 rng(5);
  const std::size_t n = 10;
  ModelConfig cfg = tiny(n);
  const ParamStore s = init_model(cfg, 5);
  for (int rep = 0; rep < 5; ++rep) {
    const SpatialContext ctx = random_context(n, rng);
    Tape tape;
    ParamBinding p(tape, s);
    AttentionCapture cap;
    ForwardOptions opts;
    opts.capture = &cap;
    mvsa(p, "layer0", tape.constant(random_tensor({2, 3, n, 8}, rng)), ctx, cfg, opts);
    const Tensor* masks[] = {&ctx.local, &ctx.global, &ctx.pivotal};
    const Tensor* probs[] = {&cap.local[0], &cap.global[0], &cap.pivotal[0]};
    for (int b = 0; b < 3; ++b) {
      const Tensor& pr = *probs[b];
      ASSERT_EQ(pr.shape(), (Shape{6, 2, n, n}));
      for (std::size_t row = 0; row < pr.size() / n; ++row) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double w = pr[row * n + j];
          if ((*masks[b])(row % n, j) == 0.0) {
            EXPECT_EQ(w, 0.0);
          }
          total += w;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Mvsa, SingleStepAndSharedParameters) {
  std::mt19937_64 rng(6);
  const std::size_t n = 5;
  ModelConfig cfg = tiny(n);
  ParamStore s = init_model(cfg, 6);
  const SpatialContext ctx = random_context(n, rng);
  const Tensor slice = random_tensor({1, 1, n, 8}, rng);
  Tensor twice({1, 2, n, 8});
  for (std::size_t i = 0; i < slice.size(); ++i) twice[i] = twice[slice.size() + i] = slice[i];

  Tape tape;
  ParamBinding p(tape, s);
  const BranchOutputs one = mvsa(p, "layer0", tape.constant(slice), ctx, cfg, {});
  const Tensor direct = masked_spatial_attention(p, "layer0.local", tape.constant(slice), ctx.local, 2,
                                                 cfg.mask_mode, 0.0, {})
                            .value();
  EXPECT_EQ(one.local.value().storage(), direct.storage());
  const BranchOutputs two = mvsa(p, "layer0", tape.constant(twice), ctx, cfg, {});
  const Tensor& g = two.global.value();
  for (std::size_t i = 0; i < slice.size(); ++i) EXPECT_EQ(g[i], g[slice.size() + i]);

  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) s.at(std::string("layer0.global") + w) = s.at(std::string("layer0.local") + w);
  SpatialContext swapped = ctx;
  std::swap(swapped.local, swapped.global);
  Tape t2;
  ParamBinding p2(t2, s);
  const BranchOutputs a = mvsa(p2, "layer0", t2.constant(twice), ctx, cfg, {});
  const BranchOutputs b = mvsa(p2, "layer0", t2.constant(twice), swapped, cfg, {});
  EXPECT_EQ(a.local.value().storage(), b.global.value().storage());
  EXPECT_EQ(a.global.value().storage(), b.local.value().storage());
}

TEST(GatedFilter, HandCasesAndRange) {
  std::mt19937_64 rng(7);
  ModelConfig cfg = tiny(4);
  ParamStore s = init_model(cfg, 7);
  {
    Tape tape;
    ParamBinding p(tape, s);
    EXPECT_EQ(max_abs(gated_filter(p, "layer0", tape.constant(Tensor({1, 3, 4, 8}, 0.0))).value()), 0.0);
    const Tensor out = gated_filter(p, "layer0", tape.constant(random_tensor({1, 3, 4, 8}, rng, 3.0))).value();
    for (double v : out.values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
  s.at("layer0.gate.gate_b") = Tensor({8}, -20.0);
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor closed = gated_filter(p, "layer0", tape.constant(random_tensor({1, 3, 4, 8}, rng, 0.1))).value();
  EXPECT_LT(max_abs(closed), 1e-8);
}

TEST(TemporalAttention, SingleStepPassesProjectedValues) {
  std::mt19937_64 rng(8);
  ModelConfig cfg = tiny(3);
  cfg.input_len = 1;
  const ParamStore s = init_model(cfg, 8);
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor z = random_tensor({2, 1, 3, 8}, rng);
  const Tensor out = temporal_attention(p, "layer0", tape.constant(z), cfg, {}).value();
  const Tensor flat = z.reshaped({6, 8});
  const Tensor want = matmul_plain(matmul_plain(flat, s.at("layer0.temporal.wv")), s.at("layer0.temporal.wo"));
  EXPECT_LE(max_abs_diff(out.reshaped({6, 8}), want), 1e-14);
}

TEST(TemporalAttention, NodesAreIndependentAndRowsSumToOne) {
  std::mt19937_64 rng(9);
  ModelConfig cfg = tiny(3);
  const ParamStore s = init_model(cfg, 9);
  Tensor z = random_tensor({1, 3, 3, 8}, rng);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 8; ++c) z[(t * 3 + 2) * 8 + c] = z[(t * 3 + 0) * 8 + c];
  Tape tape;
  ParamBinding p(tape, s);
  AttentionCapture cap;
  ForwardOptions opts;
  opts.capture = &cap;
  const Tensor out = temporal_attention(p, "layer0", tape.constant(z), cfg, opts).value();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out[(t * 3 + 2) * 8 + c], out[(t * 3 + 0) * 8 + c]);
  const Tensor& pr = cap.temporal.at(0);
  ASSERT_EQ(pr.shape(), (Shape{3, 2, 3, 3}));
  for (std::size_t row = 0; row < pr.size() / 3; ++row)
    EXPECT_NEAR(pr[row * 3] + pr[row * 3 + 1] + pr[row * 3 + 2], 1.0, 1e-12);
}

TEST(Stcb, HandCasesAndMeanPreservation) {
  Tape tape;
  const Tensor two = ag::stcb(tape.constant(Tensor({2, 1}, std::vector<double>{0.0, 2.0}))).value();
  EXPECT_EQ(two[0], 0.5);
  EXPECT_EQ(two[1], 1.5);
  const Tensor same({3, 4, 2}, 1.75);
  EXPECT_EQ(ag::stcb(tape.constant(same)).value().storage(), same.storage());

  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({4, 6, 5}, rng);  // T x N x d
  const Tensor y = ag::stcb(tape.constant(x)).value();
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 5; ++c) {
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        mx += x[(t * 6 + i) * 5 + c];
        my += y[(t * 6 + i) * 5 + c];
      }
      EXPECT_NEAR(my / 6.0, mx / 6.0, 1e-12);
    }
  const Tensor yy = ag::stcb(tape.constant(y)).value();
  EXPECT_GT(max_abs_diff(yy, y), 1e-3);
}

TEST(FuseAndFfn, ShapeAndStcbMatters) {
  std::mt19937_64 rng(11);
  ModelConfig cfg = tiny(4);
  const ParamStore s = init_model(cfg, 11);
  const Tensor z = random_tensor({2, 3, 4, 8}, rng);
  const SpatialContext ctx = random_context(4, rng);
  auto run = [&](bool stcb) {
    ModelConfig c = cfg;
    c.use_stcb = stcb;
    Tape tape;
    ParamBinding p(tape, s);
    return encoder_layer(p, 0, tape.constant(z), ctx, c, {}).value();
  };
  const Tensor with = run(true), without = run(false);
  EXPECT_EQ(with.shape(), z.shape());
  EXPECT_TRUE(with.all_finite());
  EXPECT_GT(max_abs_diff(with, without), 1e-6);

  Tape tape;
  ParamBinding p(tape, s);
  const Var zero = tape.constant(Tensor(z.shape(), 0.0));
  const Tensor plain = fuse_and_ffn(p, "layer0", {zero, zero, zero}, zero, tape.constant(z), cfg, {}).value();
  EXPECT_EQ(plain.shape(), z.shape());
  EXPECT_TRUE(plain.all_finite());
}

TEST(Encoder, TwoLayersEqualChainedSingleLayers) {
  std::mt19937_64 rng(12);
  const ModelConfig cfg = tiny(5, 2);
  const ParamStore s = init_model(cfg, 12);
  const SpatialContext ctx = random_context(5, rng);
  const Tensor z = random_tensor({1, 3, 5, 8}, rng);
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor both = encoder_forward(p, tape.constant(z), ctx, cfg, {}).value();
  const Var h0 = encoder_layer(p, 0, tape.constant(z), ctx, cfg, {});
  const Tensor chained = encoder_layer(p, 1, h0, ctx, cfg, {}).value();
  EXPECT_EQ(both.storage(), chained.storage());
}

TEST(Encoder, SixLayersStayFinite) {
  std::mt19937_64 rng(13);
  const ModelConfig cfg = tiny(5, 6);
  const ParamStore s = init_model(cfg, 13);
  Tape tape;
  ParamBinding p(tape, s);
  const Tensor out =
      encoder_forward(p, tape.constant(random_tensor({2, 3, 5, 8}, rng, 3.0)), random_context(5, rng), cfg, {}).value();
  EXPECT_TRUE(out.all_finite());
}

TEST(Encoder, LayerCommutesWithNodePermutation) {
  std::mt19937_64 rng(14);
  const std::size_t n = 7;
  const ModelConfig cfg = tiny(n);
  const ParamStore s = init_model(cfg, 14);
  const SpatialContext ctx = random_context(n, rng);
  const Tensor z = random_tensor({2, 3, n, 8}, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  SpatialContext pctx = ctx;
  pctx.local = permute_square(ctx.local, perm);
  pctx.global = permute_square(ctx.global, perm);
  pctx.pivotal = permute_square(ctx.pivotal, perm);

  Tape tape;
  ParamBinding p(tape, s);
  const Tensor out = encoder_layer(p, 0, tape.constant(z), ctx, cfg, {}).value();
  const Tensor pout = encoder_layer(p, 0, tape.constant(permute_nodes(z, perm)), pctx, cfg, {}).value();
  EXPECT_LE(max_abs_diff(pout, permute_nodes(out, perm)), 1e-10);
}

TEST(RegressionHead, ZeroInputShapeAndGradient) {
  std::mt19937_64 rng(15);
  const ModelConfig cfg = tiny(4);
  const ParamStore s = init_model(cfg, 15);
  {
    Tape tape;
    ParamBinding p(tape, s);
    const Tensor y = regression_head(p, tape.constant(Tensor({2, 3, 4, 8}, 0.0)), cfg).value();
    EXPECT_EQ(y.shape(), (Shape{2, 2, 4}));
    EXPECT_EQ(max_abs(y), 0.0);
    EXPECT_THROW(regression_head(p, tape.constant(Tensor({2, 4, 4, 8})), cfg), DimensionError);
  }
  const Tensor zhat = random_tensor({2, 3, 4, 8}, rng);
  const Tensor w = random_tensor({2, 2, 4}, rng);
  auto loss = [&](const ParamStore& store, bool grad) {
    Tape tape;
    ParamBinding p(tape, store, grad);
    const Var l = ag::sum(ag::mul(regression_head(p, tape.constant(zhat), cfg), tape.constant(w)));
    if (!grad) return std::pair{l.value().item(), std::vector<Tensor>{}};
    tape.backward(l);
    return std::pair{l.value().item(), p.grads()};
  };
  const auto grads = loss(s, true).second;
  for (const char* name : {"head.w1", "head.b1", "head.w2", "head.b2"}) {
    const std::size_t idx = s.index_of(name);
    auto f = [&](const std::vector<double>& v) {
      ParamStore c = s;
      c.tensor(idx) = Tensor(s.tensor(idx).shape(), v);
      return loss(c, false).first;
    };
    const auto num = finite_diff_grad(f, s.tensor(idx).storage());
    for (std::size_t e = 0; e < num.size(); ++e) {
      const double a = grads[idx][e];
      EXPECT_LE(std::abs(a - num[e]) / std::max({std::abs(a), std::abs(num[e]), 1e-6}), 1e-4) << name << e;
    }
  }
}

TEST(ModelConfig, RejectsBadHeadCounts) {
  ModelConfig c = tiny(4);
  c.heads_spatial = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(4);
  c.k_eigen = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Context, PivotalRescaledToUnitMax) {
  const Tensor r = rescale_pivotal(Tensor::from_rows({{0, 4}, {2, 0}}));
  EXPECT_EQ(r(0, 1), 1.0);
  EXPECT_EQ(r(1, 0), 0.5);
  EXPECT_EQ(r(0, 0), 0.0);
}

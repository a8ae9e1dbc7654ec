#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lvst/autograd.hpp"
#include "lvst/linalg.hpp"
#include "lvst/params.hpp"
#include "lvst/tensor.hpp"

using namespace lvst;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)}, 0.0);
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.dim(1); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

// Checks backward() of a scalar function of one input against central differences.
void expect_grad_matches(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x0, double tol = 1e-6) {
  Tape tape;
  Var x = tape.leaf(x0);
  tape.backward(f(tape, x));
  const Tensor g = tape.grad(x);
  auto scalar = [&](const std::vector<double>& v) {
    Tape t;
    return f(t, t.leaf(Tensor(x0.shape(), v), false)).value().item();
  };
  const auto num = finite_diff_grad(scalar, x0.storage());
  for (std::size_t i = 0; i < num.size(); ++i) {
    const double scale = std::max({std::abs(g[i]), std::abs(num[i]), 1e-6});
    EXPECT_LE(std::abs(g[i] - num[i]) / scale, tol) << "element " << i;
  }
}

}  // namespace

TEST(Tensor, RejectsInconsistentConstruction) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::from_rows({{1, 2}, {3}}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).dim(0), 3u);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, CsvRoundTripKeepsShapeAndValues) {
  std::mt19937_64 rng(1);
  const Tensor t = random_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor_csv(ss, t);
  EXPECT_EQ(ss.str().substr(0, 14), "# shape 2x3x4\n");
  const Tensor back = read_tensor_csv(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(max_abs_diff(back, t), 0.0);
}

TEST(Matmul, IdentityAndProjector) {
  Tape tape;
  const Var id = tape.constant(Tensor::identity(2));
  const Var m = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(max_abs_diff(ag::matmul(id, m).value(), m.value()), 0.0);
  const Var p = tape.constant(Tensor::from_rows({{1, 0}, {0, 0}}));
  const Var v = tape.constant(Tensor::from_rows({{5}, {7}}));
  EXPECT_EQ(max_abs_diff(ag::matmul(p, v).value(), Tensor::from_rows({{5}, {0}})), 0.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({3, 2}, rng);
    Tape tape;
    const Tensor c = ag::matmul(tape.constant(a), tape.constant(b)).value();
    EXPECT_LE(max_abs_diff(c, triple_loop(a, b)), 1e-14);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    ag::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, HandCases) {
  Tape tape;
  auto sm = [&](Tensor t) { return ag::softmax_lastdim(tape.constant(std::move(t))).value(); };
  const Tensor a = sm(Tensor::vector({0, 0}));
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  const Tensor b = sm(Tensor::vector({std::log(2.0), 0}));
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0 / 3.0, 1e-15);
  const Tensor c = sm(Tensor::vector({1000, 0}));
  EXPECT_NEAR(c[0], 1.0, 1e-12);
  EXPECT_NEAR(c[1], 0.0, 1e-12);
}

TEST(Softmax, RowsSumToOneForLargeInputs) {
  std::mt19937_64 rng(3);
  Tape tape;
  const Tensor p = ag::softmax_lastdim(tape.constant(random_tensor({7, 5}, rng, 1e3))).value();
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_GE(p(r, j), 0.0);
      s += p(r, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, GradientOfSumIsZero) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.3, -1.2, 2.0}));
  tape.backward(ag::sum(ag::softmax_lastdim(x)));
  EXPECT_LE(max_abs(tape.grad(x)), 1e-15);
}

TEST(LayerNorm, HandCasesAndMoments) {
  Tape tape;
  auto ln = [&](Tensor x) {
    const std::size_t d = x.shape().back();
    return ag::layer_norm(tape.constant(std::move(x)), tape.constant(Tensor({d}, 1.0)), tape.constant(Tensor({d}, 0.0)))
        .value();
  };
  EXPECT_EQ(max_abs(ln(Tensor::vector({1, 1, 1}))), 0.0);
  const Tensor pair = ln(Tensor::vector({-1, 1}));
  EXPECT_NEAR(pair[0], -1.0, 1e-4);
  EXPECT_NEAR(pair[1], 1.0, 1e-4);

  std::mt19937_64 rng(4);
  const Tensor y = ln(random_tensor({1, 16}, rng, 3.0));
  double mean = 0.0, var = 0.0;
  for (double v : y.values()) mean += v;
  mean /= 16.0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= 16.0;
  EXPECT_LT(std::abs(mean), 1e-10);
  EXPECT_NEAR(var, 1.0, 1e-4);
}

TEST(Activations, HandCases) {
  Tape tape;
  auto one = [&](Var (*op)(const Var&), double x) { return op(tape.constant(Tensor::scalar(x))).value().item(); };
  EXPECT_DOUBLE_EQ(one(ag::sigmoid, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(one(ag::tanh, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(one(ag::gelu, 0.0), 0.0);
  EXPECT_NEAR(one(ag::gelu, 1.3) - one(ag::gelu, -1.3), 1.3, 1e-15);
  const Tensor prod = ag::mul(tape.constant(Tensor::vector({2, -3})), tape.constant(Tensor::vector({4, 5}))).value();
  EXPECT_EQ(prod[0], 8.0);
  EXPECT_EQ(prod[1], -15.0);
}

TEST(Backward, SquareAtThree) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(ag::mul(x, x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

TEST(Backward, UnreachedLeafGetsZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1, 2}));
  Var unused = tape.leaf(Tensor::vector({3, 4, 5}));
  tape.backward(ag::sum(x));
  const Tensor g = tape.grad(unused);
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(max_abs(g), 0.0);
}

TEST(Backward, NonFiniteForwardValueIsAnError) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1e308, 1e308}));
  EXPECT_THROW(ag::scale(x, 10.0), NumericError);
}

TEST(Backward, EveryDifferentiableOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor other = random_tensor({2, 3, 4}, rng);

  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::linear(v, t.constant(w)), ag::linear(v, t.constant(w)))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::sub(v, t.constant(other)), ag::add(v, v))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::tanh(v), t.constant(other))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::sigmoid(v), t.constant(other))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::gelu(v), t.constant(other))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::softmax_lastdim(v), t.constant(other))); }, x);
  expect_grad_matches([&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::stcb(v), t.constant(other))); }, x);
  expect_grad_matches(
      [&](Tape& t, const Var& v) {
        return ag::sum(ag::mul(ag::permute(v, {2, 0, 1}), t.constant(ag::permute(t.constant(other), {2, 0, 1}).value())));
      },
      x);
  expect_grad_matches(
      [&](Tape& t, const Var& v) {
        const Var g = t.constant(Tensor::vector({0.5, 1.5, -1.0, 2.0}));
        const Var b = t.constant(Tensor::vector({0.1, 0.2, 0.3, 0.4}));
        return ag::sum(ag::mul(ag::layer_norm(v, g, b), t.constant(other)));
      },
      x, 1e-5);
  expect_grad_matches(
      [&](Tape&, const Var& v) {
        const Var parts[] = {v, ag::scale(v, 2.0)};
        const Var c = ag::concat_lastdim(parts);
        return ag::sum(ag::mul(c, c));
      },
      x);
  const Tensor row = random_tensor({1, 4}, rng);
  const Tensor spread = random_tensor({3, 4}, rng);
  expect_grad_matches(
      [&](Tape& t, const Var& v) { return ag::sum(ag::mul(ag::broadcast_to(v, {3, 4}), t.constant(spread))); }, row);
  const std::size_t idx[] = {2, 0, 2};
  expect_grad_matches(
      [&](Tape&, const Var& v) {
        const Var g = ag::gather_rows(v, idx);
        return ag::sum(ag::mul(g, g));
      },
      random_tensor({3, 4}, rng));
}

TEST(Backward, AttentionMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const std::size_t len = 4, width = 6;
  const Tensor k0 = random_tensor({2, len, width}, rng), v0 = random_tensor({2, len, width}, rng);
  const Tensor wts = random_tensor({2, len, width}, rng);
  Tensor mask({len, len}, 0.0);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j)
      if ((i + j) % 3 != 1) mask(i, j) = 0.5 + uniform01(rng);
  for (auto mode : {kernels::MaskMode::kNone, kernels::MaskMode::kHard, kernels::MaskMode::kLiteral}) {
    expect_grad_matches(
        [&](Tape& t, const Var& q) {
          ag::AttentionSpec spec{2, mode == kernels::MaskMode::kNone ? nullptr : &mask, mode, 0.0, nullptr};
          const Var out = ag::attention(q, ag::scale(q, 0.7), ag::add(q, t.constant(v0)), spec);
          return ag::sum(ag::mul(out, t.constant(wts)));
        },
        k0);
  }
}

TEST(Backward, IsDeterministic) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({5, 5}, rng);
  auto run = [&] {
    Tape tape;
    Var v = tape.leaf(x);
    tape.backward(ag::sum(ag::gelu(ag::matmul(v, v))));
    return tape.grad(v);
  };
  EXPECT_EQ(run().storage(), run().storage());
}

TEST(Backward, InjectedFaultChangesGradient) {
  auto grad = [](bool fault) {
    Tape tape;
    if (fault) tape.inject_fault("tanh", 2.0);
    Var x = tape.leaf(Tensor::scalar(0.4));
    tape.backward(ag::tanh(x));
    return tape.grad(x).item();
  };
  EXPECT_NEAR(grad(true), 2.0 * grad(false), 1e-15);
}

TEST(SymEig, HandCases) {
  const SymEig a = sym_eig(Tensor::from_rows({{1, -1}, {-1, 1}}));
  EXPECT_NEAR(a.values[0], 0.0, 1e-12);
  EXPECT_NEAR(a.values[1], 2.0, 1e-12);
  const SymEig b = sym_eig(Tensor::identity(3));
  for (double v : b.values) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_THROW(sym_eig(Tensor({2, 3})), DimensionError);
}

TEST(SymEig, ReconstructionOrthonormalityAndSign) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor m = random_tensor({6, 6}, rng);
    m = Tensor(m.shape(), [&] {
      std::vector<double> s(36);
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) s[i * 6 + j] = 0.5 * (m(i, j) + m(j, i));
      return s;
    }());
    const SymEig e = sym_eig(m);
    const Tensor& u = e.vectors;
    double norm_m = max_abs(m);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double rec = 0.0, gram = 0.0;
        for (std::size_t k = 0; k < 6; ++k) {
          rec += u(i, k) * e.values[k] * u(j, k);
          gram += u(k, i) * u(k, j);
        }
        EXPECT_LE(std::abs(rec - m(i, j)), 1e-8 * norm_m);
        EXPECT_LE(std::abs(gram - (i == j ? 1.0 : 0.0)), 1e-8);
      }
    for (std::size_t k = 0; k + 1 < 6; ++k) EXPECT_LE(e.values[k], e.values[k + 1]);
    for (std::size_t k = 0; k < 6; ++k) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < 6; ++i)
        if (std::abs(u(i, k)) > std::abs(u(best, k))) best = i;
      EXPECT_GT(u(best, k), 0.0);
    }
  }
}

TEST(FiniteDiff, HandCases) {
  const auto sq = finite_diff_grad([](const std::vector<double>& x) { return x[0] * x[0]; }, {3.0});
  EXPECT_NEAR(sq[0], 6.0, 1e-7);
  const auto sn = finite_diff_grad([](const std::vector<double>& x) { return std::sin(x[0]); }, {0.0});
  EXPECT_NEAR(sn[0], 1.0, 1e-8);
}

TEST(Params, UniformInitIsBoundedAndSeeded) {
  std::mt19937_64 a(42), b(42);
  const Tensor x = uniform_tensor({100}, 0.25, a), y = uniform_tensor({100}, 0.25, b);
  EXPECT_EQ(x.storage(), y.storage());
  EXPECT_LE(max_abs(x), 0.25);
}

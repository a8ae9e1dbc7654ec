#include "lvst/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace lvst {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error(std::string("op '") + op + "' mixes tapes");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& buf = grad_buffer(id);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::logic_error("backward on a foreign tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    if (!fault_op_.empty() && fault_op_ == n.op) {
      Tensor scaled = n.grad;
      for (double& g : scaled.values()) g *= fault_factor_;
      n.backward(*this, scaled);
    } else {
      n.backward(*this, n.grad);
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

namespace ag {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename F, typename G>
Var unary(const char* op, const Var& a, F forward, G derivative) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(op, std::move(y), {a}, [ia, derivative](Tape& t, const Tensor& g) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * derivative(x[i]);
  });
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t a = s.size(); a-- > 1;) st[a - 1] = st[a] * s[a];
  return st;
}

// out[i] = in[src[i]]; backward scatters.
Var gather_by_index(const char* op, const Var& x, Shape out_shape, std::vector<std::size_t> src) {
  const Tensor& in = x.value();
  Tensor y(std::move(out_shape));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[src[i]];
  const std::size_t ix = x.id();
  return x.tape()->record(op, std::move(y), {x},
                          [ix, src = std::move(src)](Tape& t, const Tensor& g) {
                            Tensor& gx = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
                          });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::parallel::gemm(false, false, m, n, k, a.value().data(), b.value().data(), c.data(),
                          false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(c), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia))
      kernels::parallel::gemm(false, true, m, k, n, g.data(), t.value(ib).data(),
                              t.grad_buffer(ia).data(), true);
    if (t.requires_grad(ib))
      kernels::parallel::gemm(true, false, k, n, m, t.value(ia).data(), g.data(),
                              t.grad_buffer(ib).data(), true);
  });
}

namespace {

Var linear_impl(const Var& x, const Var& w, const Var* b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    throw DimensionError("linear shape mismatch: " + shape_str(xv.shape()) + " x " +
                         shape_str(wv.shape()));
  }
  const std::size_t in = wv.dim(0), out = wv.dim(1), rows = xv.size() / in;
  if (b && (b->value().rank() != 1 || b->dim(0) != out)) {
    throw DimensionError("linear bias shape " + shape_str(b->shape()) + " for output width " +
                         std::to_string(out));
  }
  Shape ys = xv.shape();
  ys.back() = out;
  Tensor y(ys);
  if (b) {
    const double* bv = b->value().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv, bv + out, y.data() + r * out);
  }
  kernels::parallel::gemm(false, false, rows, out, in, xv.data(), wv.data(), y.data(), b != nullptr);
  const std::size_t ix = x.id(), iw = w.id();
  const std::size_t ib = b ? b->id() : 0;
  const bool has_bias = b != nullptr;
  auto back = [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(ix))
      kernels::parallel::gemm(false, true, rows, in, out, g.data(), t.value(iw).data(),
                              t.grad_buffer(ix).data(), true);
    if (t.requires_grad(iw))
      kernels::parallel::gemm(true, false, in, out, rows, t.value(ix).data(), g.data(),
                              t.grad_buffer(iw).data(), true);
    if (has_bias && t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out; ++c) gb[c] += g[r * out + c];
    }
  };
  if (b) return x.tape()->record("linear", std::move(y), {x, w, *b}, back);
  return x.tape()->record("linear", std::move(y), {x, w}, back);
}

}  // namespace

Var linear(const Var& x, const Var& w) { return linear_impl(x, w, nullptr); }
Var linear(const Var& x, const Var& w, const Var& b) { return linear_impl(x, w, &b); }

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(y), {a, b}, [=](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(y), {a, b}, [=](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(y), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var sigmoid(const Var& a) {
  auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return unary("sigmoid", a, s, [s](double x) {
    const double y = s(x);
    return y * (1.0 - y);
  });
}

Var gelu(const Var& a) {
  return unary(
      "gelu", a, [](double x) { return x * normal_cdf(x); },
      [](double x) { return normal_cdf(x) + x * normal_pdf(x); });
}

Var softmax_lastdim(const Var& a) {
  const Tensor& x = a.value();
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      s += yr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= s;
  }
  const std::size_t ia = a.id();
  Tensor saved = y;
  return a.tape()->record("softmax", std::move(y), {a},
                          [ia, rows, cols, saved = std::move(saved)](Tape& t, const Tensor& g) {
                            Tensor& gx = t.grad_buffer(ia);
                            for (std::size_t r = 0; r < rows; ++r) {
                              const double* yr = saved.data() + r * cols;
                              const double* gr = g.data() + r * cols;
                              double dot = 0.0;
                              for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                              for (std::size_t c = 0; c < cols; ++c)
                                gx[r * cols + c] += yr[c] * (gr[c] - dot);
                            }
                          });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.shape().back();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm affine width mismatch for input " + shape_str(xv.shape()));
  }
  const std::size_t rows = xv.size() / cols;
  Tensor y(xv.shape()), xhat(xv.shape()), inv_std({rows});
  kernels::parallel::layer_norm_forward(rows, cols, xv.data(), gain.value().data(),
                                        bias.value().data(), eps, y.data(), xhat.data(),
                                        inv_std.data());
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(
      "layer_norm", std::move(y), {x, gain, bias},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const double* gv = t.value(ig).data();
        if (t.requires_grad(ix)) {
          Tensor& gx = t.grad_buffer(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dxh = g[r * cols + c] * gv[c];
              s1 += dxh;
              s2 += dxh * xhat[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const double dxh = g[r * cols + c] * gv[c];
              gx[r * cols + c] += inv_std[r] / n * (n * dxh - s1 - xhat[r * cols + c] * s2);
            }
          }
        }
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * xhat[r * cols + c];
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape()->record("reshape", std::move(y), {x},
                          [ix](Tape& t, const Tensor& g) { t.accumulate(ix, g); });
}

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) {
    throw DimensionError("permute of rank " + std::to_string(perm.size()) + " on " + shape_str(in));
  }
  Shape out(in.size());
  for (std::size_t a = 0; a < in.size(); ++a) out[a] = in.at(perm[a]);
  const auto in_st = strides_of(in);
  const auto out_st = strides_of(out);
  std::vector<std::size_t> src(numel(out));
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::size_t rem = i, s = 0;
    for (std::size_t a = 0; a < out.size(); ++a) {
      const std::size_t o = rem / out_st[a];
      rem %= out_st[a];
      s += o * in_st[perm[a]];
    }
    src[i] = s;
  }
  return gather_by_index("permute", x, std::move(out), std::move(src));
}

Var broadcast_to(const Var& x, const Shape& shape) {
  const Shape& in = x.shape();
  if (in.size() != shape.size()) {
    throw DimensionError("broadcast " + shape_str(in) + " to " + shape_str(shape));
  }
  for (std::size_t a = 0; a < in.size(); ++a) {
    if (in[a] != shape[a] && in[a] != 1) {
      throw DimensionError("broadcast " + shape_str(in) + " to " + shape_str(shape));
    }
  }
  const auto in_st = strides_of(in);
  const auto out_st = strides_of(shape);
  std::vector<std::size_t> src(numel(shape));
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::size_t rem = i, s = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) {
      const std::size_t o = rem / out_st[a];
      rem %= out_st[a];
      if (in[a] != 1) s += o * in_st[a];
    }
    src[i] = s;
  }
  return gather_by_index("broadcast", x, shape, std::move(src));
}

Var concat_lastdim(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    Shape l = p.shape();
    widths.push_back(l.back());
    total += l.back();
    l.pop_back();
    if (l != lead) {
      throw DimensionError("concat leading-shape mismatch: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
  }
  Shape out = lead;
  out.push_back(total);
  const std::size_t rows = numel(out) / total;
  Tensor y(out);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * widths[k], v.data() + (r + 1) * widths[k],
                y.data() + r * total + off);
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record("concat", std::move(y), parts, [=](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gk = t.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows needs a 2-D table, got " + shape_str(tv.shape()));
  const std::size_t rows = tv.dim(0), cols = tv.dim(1);
  std::vector<std::size_t> src;
  src.reserve(indices.size() * cols);
  for (std::size_t idx : indices) {
    if (idx >= rows) {
      throw InputError("lookup index " + std::to_string(idx) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
    for (std::size_t c = 0; c < cols; ++c) src.push_back(idx * cols + c);
  }
  return gather_by_index("gather_rows", table, {indices.size(), cols}, std::move(src));
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec, Tensor* probs) {
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const Shape& s = q.shape();
  if (s.size() < 2) throw DimensionError("attention input needs rank >= 2, got " + shape_str(s));
  const std::size_t len = s[s.size() - 2], width = s.back();
  if (spec.heads == 0 || width % spec.heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " +
                      std::to_string(spec.heads) + " heads");
  }
  if (spec.mask && (spec.mask->rank() != 2 || spec.mask->dim(0) != len || spec.mask->dim(1) != len)) {
    throw DimensionError("attention mask " + shape_str(spec.mask->shape()) + " for " +
                         std::to_string(len) + " tokens");
  }
  kernels::AttentionArgs args;
  args.dims = {q.value().size() / (len * width), len, spec.heads, width / spec.heads};
  args.mode = spec.mask ? spec.mode : kernels::MaskMode::kNone;

  const std::size_t n_probs = args.dims.groups * spec.heads * len * len;
  Tensor keep;
  if (spec.rng && spec.dropout > 0.0) {
    keep = Tensor({n_probs});
    const double kept = 1.0 / (1.0 - spec.dropout);
    for (double& kv : keep.values()) kv = uniform01(*spec.rng) < spec.dropout ? 0.0 : kept;
  }
  Tensor mask = spec.mask ? *spec.mask : Tensor();
  args.q = q.value().data();
  args.k = k.value().data();
  args.v = v.value().data();
  args.mask = spec.mask ? mask.data() : nullptr;
  args.keep = keep.empty() ? nullptr : keep.data();

  Tensor p({args.dims.groups, spec.heads, len, len});
  Tensor out(s);
  kernels::parallel::attention_forward(args, p.data(), out.data());
  if (probs) *probs = p;

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(
      "attention", std::move(out), {q, k, v},
      [=, p = std::move(p), keep = std::move(keep), mask = std::move(mask)](Tape& t,
                                                                          const Tensor& g) {
        kernels::AttentionArgs a = args;
        a.q = t.value(iq).data();
        a.k = t.value(ik).data();
        a.v = t.value(iv).data();
        a.mask = mask.empty() ? nullptr : mask.data();
        a.keep = keep.empty() ? nullptr : keep.data();
        Tensor gq(t.value(iq).shape()), gk(gq.shape()), gv(gq.shape());
        kernels::parallel::attention_backward(a, p.data(), g.data(), gq.data(), gk.data(),
                                              gv.data());
        t.accumulate(iq, gq);
        t.accumulate(ik, gk);
        t.accumulate(iv, gv);
      });
}

Var stcb(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("stcb input needs rank >= 2, got " + shape_str(s));
  const std::size_t tokens = s[s.size() - 2], width = s.back();
  const std::size_t outer = x.value().size() / (tokens * width);
  const double inv_n = 1.0 / static_cast<double>(tokens);
  const Tensor& xv = x.value();
  Tensor y(s);
  std::vector<double> m(width);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* xo = xv.data() + o * tokens * width;
    double* yo = y.data() + o * tokens * width;
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t c = 0; c < width; ++c) m[c] += xo[i * width + c];
    for (double& mc : m) mc *= inv_n;
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t c = 0; c < width; ++c) yo[i * width + c] = (xo[i * width + c] + m[c]) * 0.5;
  }
  const std::size_t ix = x.id();
  return x.tape()->record("stcb", std::move(y), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    std::vector<double> gs(width);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* go = g.data() + o * tokens * width;
      double* gxo = gx.data() + o * tokens * width;
      std::fill(gs.begin(), gs.end(), 0.0);
      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t c = 0; c < width; ++c) gs[c] += go[i * width + c];
      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t c = 0; c < width; ++c)
          gxo[i * width + c] += 0.5 * go[i * width + c] + 0.5 * inv_n * gs[c];
    }
  });
}

Var dropout(const Var& x, double p, std::mt19937_64* rng) {
  if (!rng || p <= 0.0) return x;
  const double kept = 1.0 / (1.0 - p);
  Tensor keep(x.shape());
  for (double& kv : keep.values()) kv = uniform01(*rng) < p ? 0.0 : kept;
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= keep[i];
  const std::size_t ix = x.id();
  return x.tape()->record("dropout", std::move(y), {x},
                          [ix, keep = std::move(keep)](Tape& t, const Tensor& g) {
                            Tensor& gx = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * keep[i];
                          });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t ix = x.id();
  return x.tape()->record("sum", Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    for (double& v : gx.values()) v += g[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mean_abs_error(const Var& pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (p.shape() != target.shape()) {
    throw DimensionError("mean_abs_error shape mismatch: " + shape_str(p.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - target[i]);
  const double n = static_cast<double>(p.size());
  const std::size_t ip = pred.id();
  return pred.tape()->record("mae", Tensor::scalar(s / n), {pred},
                             [ip, n, target](Tape& t, const Tensor& g) {
                               const Tensor& p = t.value(ip);
                               Tensor& gp = t.grad_buffer(ip);
                               for (std::size_t i = 0; i < p.size(); ++i) {
                                 const double r = p[i] - target[i];
                                 const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                                 gp[i] += g[0] * sgn / n;
                               }
                             });
}

}  // namespace ag
}  // namespace lvst

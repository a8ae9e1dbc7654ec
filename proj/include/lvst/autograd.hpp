#pragma once

// Define-by-run reverse-mode differentiation. A Tape records every op applied
// to its Vars in execution order; backward() walks the record in reverse.
// A tape is rebuilt for every forward pass and is not thread-safe; separate
// tapes share nothing.

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lvst/kernels.hpp"
#include "lvst/tensor.hpp"

namespace lvst {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op node. The value must be finite; `backward` is dropped when
  /// no input requires a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of a node, zero-initialized on first access.
  Tensor& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  /// reverse order. Loss must be a single-element tensor on this tape.
  void backward(const Var& loss);

  /// Gradient of the last backward() w.r.t. v; zeros if v was not reached.
  Tensor grad(const Var& v) const;

  /// Test hook: multiplies the incoming gradient of every node whose op
  /// equals `op` by `factor` during backward.
  void inject_fault(std::string op, double factor) {
    fault_op_ = std::move(op);
    fault_factor_ = factor;
  }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
  std::string fault_op_;
  double fault_factor_ = 1.0;
};

namespace ag {

Var matmul(const Var& a, const Var& b);
/// x[..., in] * w[in, out] (+ b[out]).
Var linear(const Var& x, const Var& w);
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// Exact form x * Phi(x).
Var gelu(const Var& a);

Var softmax_lastdim(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);
/// Expands axes of extent 1 to the target extents; ranks must match.
Var broadcast_to(const Var& x, const Shape& shape);
Var concat_lastdim(std::span<const Var> parts);
/// Rows of a 2-D table; output [indices.size(), cols].
Var gather_rows(const Var& table, std::span<const std::size_t> indices);

struct AttentionSpec {
  std::size_t heads = 1;
  const Tensor* mask = nullptr;  // [len, len], shared by every group
  kernels::MaskMode mode = kernels::MaskMode::kNone;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // dropout active only when set and dropout > 0
};

/// Multi-head scaled dot-product attention. q, k, v: [..., len, heads*head_dim];
/// leading axes index independent groups. When `probs` is non-null it receives
/// the pre-dropout weights [groups, heads, len, len].
Var attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec,
              Tensor* probs = nullptr);

/// Token mixing with the spatial mean: x[..., i, :] <- (x[..., i, :] + mean_j x[..., j, :]) / 2
/// where tokens run along axis rank-2.
Var stcb(const Var& x);

Var dropout(const Var& x, double p, std::mt19937_64* rng);

Var sum(const Var& x);
Var mean(const Var& x);
Var mean_abs_error(const Var& pred, const Tensor& target);

}  // namespace ag
}  // namespace lvst

#pragma once

// Hot loops used by the model and the graph views. Each kernel has a plain
// serial reference and an OpenMP version. The parallel versions split work
// only over independent output rows/groups, so every output element is
// reduced in the same order as in the serial reference and results agree
// bitwise regardless of thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lvst::kernels {

enum class MaskMode : std::uint8_t {
  kNone,     // unmasked attention
  kHard,     // mask 0 -> excluded from softmax, mask m>0 -> logit scaled by m
  kLiteral,  // logit multiplied by mask everywhere (mask 0 -> logit 0)
};

struct AttentionDims {
  std::size_t groups = 1;    // independent attention problems
  std::size_t len = 1;       // tokens per group
  std::size_t heads = 1;
  std::size_t head_dim = 1;  // model width = heads * head_dim
  std::size_t width() const { return heads * head_dim; }
};

/// Attention inputs. q/k/v are [groups, len, heads*head_dim]; mask is [len, len]
/// (shared by all groups) or empty; keep is the dropout multiplier per
/// probability [groups, heads, len, len] (already scaled by 1/(1-p)) or empty.
struct AttentionArgs {
  AttentionDims dims;
  const double* q = nullptr;
  const double* k = nullptr;
  const double* v = nullptr;
  const double* mask = nullptr;
  MaskMode mode = MaskMode::kNone;
  const double* keep = nullptr;
};

namespace serial {

// C[m,n] (+)= op(A)[m,k] * op(B)[k,n]. A is stored [k,m] when trans_a, B is
// stored [n,k] when trans_b.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

/// probs: [groups, heads, len, len] softmax weights (before dropout);
/// out: [groups, len, width].
void attention_forward(const AttentionArgs& args, double* probs, double* out);
void attention_backward(const AttentionArgs& args, const double* probs, const double* grad_out,
                        double* grad_q, double* grad_k, double* grad_v);

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gain,
                        const double* bias, double eps, double* y, double* xhat, double* inv_std);

/// In-place all-pairs shortest paths on an n*n row-major matrix (inf = no path).
void floyd_warshall(std::size_t n, double* dist);

/// Symmetric matrix of DTW distances between the rows of series [n, len].
std::vector<double> dtw_matrix(std::size_t n, std::size_t len, const double* series);

}  // namespace serial

namespace parallel {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
void attention_forward(const AttentionArgs& args, double* probs, double* out);
void attention_backward(const AttentionArgs& args, const double* probs, const double* grad_out,
                        double* grad_q, double* grad_k, double* grad_v);
void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gain,
                        const double* bias, double eps, double* y, double* xhat, double* inv_std);
void floyd_warshall(std::size_t n, double* dist);
std::vector<double> dtw_matrix(std::size_t n, std::size_t len, const double* series);

}  // namespace parallel

/// Classic DTW with |a-b| local cost over the full table.
double dtw(std::span<const double> a, std::span<const double> b);

/// Caps OpenMP worker count; 0 restores the runtime default.
void set_num_threads(int n);
int max_threads();

}  // namespace lvst::kernels

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lvst/kernels.hpp"
#include "attention_block.hpp"

namespace lvst::kernels {

double dtw(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double cost = std::abs(a[i] - b[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      cur[j] = cost + best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void attention_forward(const AttentionArgs& args, double* probs, double* out) {
  const auto& d = args.dims;
  const std::vector<char> support = detail::row_support(args);
  std::vector<double> scratch(2 * d.len);
  for (std::size_t g = 0; g < d.groups; ++g)
    for (std::size_t h = 0; h < d.heads; ++h)
      detail::attention_forward_block(args, g, h, support, scratch.data(), probs, out);
}

void attention_backward(const AttentionArgs& args, const double* probs, const double* grad_out,
                        double* grad_q, double* grad_k, double* grad_v) {
  const auto& d = args.dims;
  const std::vector<char> support = detail::row_support(args);
  std::vector<double> scratch(d.len);
  for (std::size_t g = 0; g < d.groups; ++g)
    for (std::size_t h = 0; h < d.heads; ++h)
      detail::attention_backward_block(args, g, h, support, scratch.data(), probs, grad_out,
                                       grad_q, grad_k, grad_v);
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gain,
                        const double* bias, double eps, double* y, double* xhat, double* inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xh = (xr[c] - mean) * is;
      xhat[r * cols + c] = xh;
      y[r * cols + c] = gain[c] * xh + bias[c];
    }
  }
}

void floyd_warshall(std::size_t n, double* dist) {
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double via = dist[i * n + k] + dist[k * n + j];
        if (via < dist[i * n + j]) dist[i * n + j] = via;
      }
}

std::vector<double> dtw_matrix(std::size_t n, std::size_t len, const double* series) {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw({series + i * len, len}, {series + j * len, len});
      out[i * n + j] = d;
      out[j * n + i] = d;
    }
  return out;
}

}  // namespace serial
}  // namespace lvst::kernels

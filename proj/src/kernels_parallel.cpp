#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "attention_block.hpp"
#include "lvst/kernels.hpp"

namespace lvst::kernels {

void set_num_threads(int n) {
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
}

int max_threads() { return omp_get_max_threads(); }

namespace parallel {

namespace {

// Row blocks below this many multiply-adds stay on the calling thread.
constexpr std::size_t kMinParallelWork = 1 << 15;

bool worth_parallel(std::size_t work) { return work >= kMinParallelWork && omp_get_max_threads() > 1; }

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  // B^T is packed once so every case runs i-p-j with a contiguous inner loop.
  // Each c(i, j) still sums its k products in ascending p.
  std::vector<double> packed;
  if (trans_b) {
    packed.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * k + p];
    b = packed.data();
  }
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * k))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void attention_forward(const AttentionArgs& args, double* probs, double* out) {
  const auto& d = args.dims;
  const std::vector<char> support = detail::row_support(args);
  const auto blocks = static_cast<std::int64_t>(d.groups * d.heads);
#pragma omp parallel if (worth_parallel(d.groups * d.heads * d.len * d.len * d.head_dim))
  {
    std::vector<double> scratch(2 * d.len);
#pragma omp for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) {
      const auto g = static_cast<std::size_t>(b) / d.heads;
      const auto h = static_cast<std::size_t>(b) % d.heads;
      detail::attention_forward_block(args, g, h, support, scratch.data(), probs, out);
    }
  }
}

void attention_backward(const AttentionArgs& args, const double* probs, const double* grad_out,
                        double* grad_q, double* grad_k, double* grad_v) {
  const auto& d = args.dims;
  const std::vector<char> support = detail::row_support(args);
  const auto blocks = static_cast<std::int64_t>(d.groups * d.heads);
#pragma omp parallel if (worth_parallel(d.groups * d.heads * d.len * d.len * d.head_dim))
  {
    std::vector<double> scratch(d.len);
#pragma omp for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) {
      const auto g = static_cast<std::size_t>(b) / d.heads;
      const auto h = static_cast<std::size_t>(b) % d.heads;
      detail::attention_backward_block(args, g, h, support, scratch.data(), probs, grad_out,
                                       grad_q, grad_k, grad_v);
    }
  }
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gain,
                        const double* bias, double eps, double* y, double* xhat, double* inv_std) {
  const auto n_rows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows * cols * 8))
  for (std::int64_t rr = 0; rr < n_rows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
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
  const auto rows = static_cast<std::int64_t>(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Row k and column k do not change during pass k, so rows are independent.
    const double* dk = dist + k * n;
#pragma omp parallel for schedule(static) if (worth_parallel(n * n))
    for (std::int64_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double* di = dist + i * n;
      const double dik = di[k];
      for (std::size_t j = 0; j < n; ++j) {
        const double via = dik + dk[j];
        if (via < di[j]) di[j] = via;
      }
    }
  }
}

std::vector<double> dtw_matrix(std::size_t n, std::size_t len, const double* series) {
  std::vector<double> out(n * n, 0.0);
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) if (worth_parallel(n * n * len * len / 2))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw({series + i * len, len}, {series + j * len, len});
      out[i * n + j] = d;
      out[j * n + i] = d;
    }
  }
  return out;
}

}  // namespace parallel
}  // namespace lvst::kernels

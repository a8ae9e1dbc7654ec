#pragma once

// One (group, head) slice of masked multi-head attention, shared by the serial
// and OpenMP drivers. A block writes only to its own probability slab and to
// its own head columns of the output/gradient buffers.

#include <cmath>
#include <limits>
#include <vector>

#include "lvst/kernels.hpp"

namespace lvst::kernels::detail {

/// support[i] == 0 means row i has no positive mask entry under kHard; such a
/// row attends only to itself with logit 0.
inline std::vector<char> row_support(const AttentionArgs& args) {
  const std::size_t len = args.dims.len;
  std::vector<char> support(len, 1);
  if (args.mode != MaskMode::kHard || args.mask == nullptr) return support;
  for (std::size_t i = 0; i < len; ++i) {
    char any = 0;
    for (std::size_t j = 0; j < len; ++j)
      if (args.mask[i * len + j] > 0.0) any = 1;
    support[i] = any;
  }
  return support;
}

// d(logit)/d(score) for entry (i, j).
inline double logit_slope(const AttentionArgs& args, std::size_t i, std::size_t j, bool supported) {
  if (args.mask == nullptr || args.mode == MaskMode::kNone) return 1.0;
  const double m = args.mask[i * args.dims.len + j];
  if (args.mode == MaskMode::kLiteral) return m;
  return supported && m > 0.0 ? m : 0.0;
}

inline void attention_forward_block(const AttentionArgs& args, std::size_t g, std::size_t h,
                                    const std::vector<char>& support, double* scratch,
                                    double* probs, double* out) {
  const auto& d = args.dims;
  const std::size_t w = d.width();
  const std::size_t c0 = h * d.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  const bool masked = args.mask != nullptr && args.mode != MaskMode::kNone;
  const double* q = args.q + g * d.len * w;
  const double* k = args.k + g * d.len * w;
  const double* v = args.v + g * d.len * w;
  double* o = out + g * d.len * w;
  double* logits = scratch;
  double* included = scratch + d.len;

  for (std::size_t i = 0; i < d.len; ++i) {
    const bool supported = support[i] != 0;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d.len; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d.head_dim; ++c) s += q[i * w + c0 + c] * k[j * w + c0 + c];
      s *= scale;
      bool inc = true;
      if (masked) {
        const double m = args.mask[i * d.len + j];
        if (args.mode == MaskMode::kLiteral) {
          s *= m;
        } else if (!supported) {
          s = 0.0;
          inc = i == j;
        } else if (m > 0.0) {
          s *= m;
        } else {
          inc = false;
        }
      }
      logits[j] = s;
      included[j] = inc ? 1.0 : 0.0;
      if (inc && s > mx) mx = s;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < d.len; ++j) {
      logits[j] = included[j] != 0.0 ? std::exp(logits[j] - mx) : 0.0;
      sum += logits[j];
    }
    const std::size_t row = ((g * d.heads + h) * d.len + i) * d.len;
    double* p = probs + row;
    const double* keep = args.keep ? args.keep + row : nullptr;
    for (std::size_t j = 0; j < d.len; ++j) p[j] = logits[j] / sum;
    for (std::size_t c = 0; c < d.head_dim; ++c) o[i * w + c0 + c] = 0.0;
    for (std::size_t j = 0; j < d.len; ++j) {
      const double pj = keep ? p[j] * keep[j] : p[j];
      if (pj == 0.0) continue;
      for (std::size_t c = 0; c < d.head_dim; ++c) o[i * w + c0 + c] += pj * v[j * w + c0 + c];
    }
  }
}

inline void attention_backward_block(const AttentionArgs& args, std::size_t g, std::size_t h,
                                     const std::vector<char>& support, double* scratch,
                                     const double* probs, const double* grad_out, double* grad_q,
                                     double* grad_k, double* grad_v) {
  const auto& d = args.dims;
  const std::size_t w = d.width();
  const std::size_t c0 = h * d.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  const std::size_t base = g * d.len * w;
  const double* q = args.q + base;
  const double* k = args.k + base;
  const double* v = args.v + base;
  const double* go = grad_out + base;
  double* gq = grad_q + base;
  double* gk = grad_k + base;
  double* gv = grad_v + base;
  double* dp = scratch;

  for (std::size_t i = 0; i < d.len; ++i) {
    const bool supported = support[i] != 0;
    const std::size_t row = ((g * d.heads + h) * d.len + i) * d.len;
    const double* p = probs + row;
    const double* keep = args.keep ? args.keep + row : nullptr;
    for (std::size_t j = 0; j < d.len; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d.head_dim; ++c) s += go[i * w + c0 + c] * v[j * w + c0 + c];
      const double kj = keep ? keep[j] : 1.0;
      const double pj = p[j] * kj;
      if (pj != 0.0)
        for (std::size_t c = 0; c < d.head_dim; ++c) gv[j * w + c0 + c] += pj * go[i * w + c0 + c];
      dp[j] = s * kj;
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < d.len; ++j) dot += p[j] * dp[j];
    for (std::size_t j = 0; j < d.len; ++j) {
      const double ds = p[j] * (dp[j] - dot) * logit_slope(args, i, j, supported) * scale;
      if (ds == 0.0) continue;
      for (std::size_t c = 0; c < d.head_dim; ++c) {
        gq[i * w + c0 + c] += ds * k[j * w + c0 + c];
        gk[j * w + c0 + c] += ds * q[i * w + c0 + c];
      }
    }
  }
}

}  // namespace lvst::kernels::detail

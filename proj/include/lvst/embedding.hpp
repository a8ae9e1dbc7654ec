#pragma once

// Spatio-temporal input embedding. A batch of normalized windows [B, T, N] is
// lifted to [B, T, N, d] by concatenating four signals along channels and
// projecting back to width d:
//   raw       per-scalar affine map                         [B, T, N, d]
//   periodic  learned time-of-day | day-of-week tables      [B, T, d]
//   spatial   projected Laplacian eigenvectors              [N, d]
//   position  fixed sinusoidal encoding                     [T, d]

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "lvst/autograd.hpp"
#include "lvst/params.hpp"

namespace lvst {

struct EmbedConfig {
  std::size_t d = 64;
  std::size_t k = 8;
  std::size_t input_len = 12;
  std::size_t steps_per_day = 288;
  std::size_t days_per_week = 7;

  std::size_t tod_width() const { return (d + 1) / 2; }
  std::size_t dow_width() const { return d - tod_width(); }
};

/// Adds embed.* parameters; tables and projections uniform in +-1/sqrt(d).
void init_embedding_params(ParamStore& store, const EmbedConfig& cfg, std::mt19937_64& rng);

/// x: [B, T, N] -> [B, T, N, d].
Var embed_raw(const ParamBinding& p, const Var& x);

/// tod/dow hold one entry per (batch, step), row-major [B, T]. Returns [B, T, d].
Var embed_periodic(const ParamBinding& p, const EmbedConfig& cfg, std::size_t batch,
                   std::span<const std::size_t> tod, std::span<const std::size_t> dow);

/// PE(p, i) = sin(p / 10000^(i/d)) for even i, cos(p / 10000^((i-1)/d)) for odd i.
Tensor positional_encoding(std::size_t len, std::size_t d);

/// basis: [N, k] -> [N, d].
Var embed_spatial(const ParamBinding& p, const Var& basis);

/// Broadcast e_p over nodes, e_s over batch and time, e_tpe over batch and
/// nodes; concatenate to 4d channels and project to d.
Var fuse_embeddings(const ParamBinding& p, const Var& e_f, const Var& e_p, const Var& e_s,
                    const Var& e_tpe);

struct CalendarBatch {
  std::vector<std::size_t> tod;
  std::vector<std::size_t> dow;
};

/// Full embedding of a batch: returns Z [B, T, N, d].
Var embed(const ParamBinding& p, const EmbedConfig& cfg, const Var& x, const CalendarBatch& cal,
          const Tensor& basis);

}  // namespace lvst

#include "lvst/embedding.hpp"

#include <cmath>

namespace lvst {

void init_embedding_params(ParamStore& store, const EmbedConfig& cfg, std::mt19937_64& rng) {
  if (cfg.d < 2 || cfg.k == 0 || cfg.input_len == 0) {
    throw ConfigError("embedding needs d >= 2, k >= 1 and T >= 1");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  store.add("embed.raw.w", uniform_tensor({1, cfg.d}, bound, rng));
  store.add("embed.raw.b", Tensor({cfg.d}));
  store.add("embed.tod", uniform_tensor({cfg.steps_per_day, cfg.tod_width()}, bound, rng));
  store.add("embed.dow", uniform_tensor({cfg.days_per_week, cfg.dow_width()}, bound, rng));
  store.add("embed.spatial.w", uniform_tensor({cfg.k, cfg.d}, bound, rng));
  store.add("embed.fuse.w", uniform_tensor({4 * cfg.d, cfg.d}, bound, rng));
}

Var embed_raw(const ParamBinding& p, const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw DimensionError("raw embedding expects [B, T, N], got " + shape_str(s));
  return ag::linear(ag::reshape(x, {s[0], s[1], s[2], 1}), p["embed.raw.w"], p["embed.raw.b"]);
}

Var embed_periodic(const ParamBinding& p, const EmbedConfig& cfg, std::size_t batch,
                   std::span<const std::size_t> tod, std::span<const std::size_t> dow) {
  if (tod.size() != batch * cfg.input_len || dow.size() != tod.size()) {
    throw DimensionError("calendar covers " + std::to_string(tod.size()) + " steps, expected " +
                         std::to_string(batch * cfg.input_len));
  }
  for (std::size_t i = 0; i < tod.size(); ++i) {
    if (tod[i] >= cfg.steps_per_day) {
      throw InputError("time-of-day slot " + std::to_string(tod[i]) + " outside [0, " +
                       std::to_string(cfg.steps_per_day) + ")");
    }
    if (dow[i] >= cfg.days_per_week) {
      throw InputError("day-of-week " + std::to_string(dow[i]) + " outside [0, " +
                       std::to_string(cfg.days_per_week) + ")");
    }
  }
  const Var parts[] = {ag::gather_rows(p["embed.tod"], tod), ag::gather_rows(p["embed.dow"], dow)};
  return ag::reshape(ag::concat_lastdim(parts), {batch, cfg.input_len, cfg.d});
}

Tensor positional_encoding(std::size_t len, std::size_t d) {
  if (d < 2) throw ConfigError("positional encoding needs d >= 2");
  Tensor pe({len, d});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t even = i - (i % 2);
      const double freq = std::pow(10000.0, static_cast<double>(even) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / freq;
      pe(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Var embed_spatial(const ParamBinding& p, const Var& basis) {
  const Var& w = p["embed.spatial.w"];
  if (basis.value().rank() != 2 || basis.dim(1) != w.dim(0)) {
    throw DimensionError("Laplacian basis " + shape_str(basis.shape()) + " does not match k=" +
                         std::to_string(w.dim(0)));
  }
  return ag::linear(basis, w);
}

Var fuse_embeddings(const ParamBinding& p, const Var& e_f, const Var& e_p, const Var& e_s,
                    const Var& e_tpe) {
  const Shape& s = e_f.shape();
  if (s.size() != 4) throw DimensionError("raw embedding must be [B, T, N, d], got " + shape_str(s));
  const std::size_t b = s[0], t = s[1], n = s[2], d = s[3];
  if (e_p.shape() != Shape{b, t, d} || e_s.shape() != Shape{n, d} || e_tpe.shape() != Shape{t, d}) {
    throw DimensionError("embedding parts do not align: " + shape_str(s) + ", " + shape_str(e_p.shape()) +
                         ", " + shape_str(e_s.shape()) + ", " + shape_str(e_tpe.shape()));
  }
  const Var parts[] = {
      e_f,
      ag::broadcast_to(ag::reshape(e_p, {b, t, 1, d}), s),
      ag::broadcast_to(ag::reshape(e_s, {1, 1, n, d}), s),
      ag::broadcast_to(ag::reshape(e_tpe, {1, t, 1, d}), s),
  };
  return ag::linear(ag::concat_lastdim(parts), p["embed.fuse.w"]);
}

Var embed(const ParamBinding& p, const EmbedConfig& cfg, const Var& x, const CalendarBatch& cal,
          const Tensor& basis) {
  const std::size_t batch = x.dim(0);
  if (x.dim(1) != cfg.input_len) {
    throw DimensionError("window length " + std::to_string(x.dim(1)) + " but model expects " +
                         std::to_string(cfg.input_len));
  }
  Tape& tape = p.tape();
  const Var e_f = embed_raw(p, x);
  const Var e_p = embed_periodic(p, cfg, batch, cal.tod, cal.dow);
  const Var e_s = embed_spatial(p, tape.constant(basis));
  const Var e_tpe = tape.constant(positional_encoding(cfg.input_len, cfg.d));
  return fuse_embeddings(p, e_f, e_p, e_s, e_tpe);
}

}  // namespace lvst

#include "lvst/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "lvst/params.hpp"

namespace lvst {
namespace {

double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double bump(double hour, double centre, double width) {
  const double z = (hour - centre) / width;
  return std::exp(-0.5 * z * z);
}

// Points in a square of side `side`; edges are a Euclidean minimum spanning
// tree plus every pair closer than `radius`.
RoadGraph geometric_graph(std::size_t n, std::mt19937_64& rng) {
  const double side = 5.0;
  std::vector<double> px(n), py(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = uniform(rng, 0.0, side);
    py[i] = uniform(rng, 0.0, side);
  }
  auto dist = [&](std::size_t i, std::size_t j) { return std::hypot(px[i] - px[j], py[i] - py[j]); };

  RoadGraph g;
  g.n_nodes = n;
  g.adjacency = Tensor({n, n}, 0.0);
  Tensor d({n, n}, kUnreachable);
  auto link = [&](std::size_t i, std::size_t j) {
    g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    d(i, j) = d(j, i) = dist(i, j);
  };

  std::vector<char> in_tree(n, 0);
  std::vector<double> best(n, kUnreachable);
  std::vector<std::size_t> parent(n, 0);
  best[0] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v)
      if (!in_tree[v] && (u == n || best[v] < best[u])) u = v;
    in_tree[u] = 1;
    if (it > 0) link(parent[u], u);
    for (std::size_t v = 0; v < n; ++v)
      if (!in_tree[v] && dist(u, v) < best[v]) {
        best[v] = dist(u, v);
        parent[v] = u;
      }
  }

  const double radius = side * std::sqrt(2.0 * std::log(static_cast<double>(n)) /
                                         (std::numbers::pi * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (dist(i, j) < radius) link(i, j);
  g.edge_dist = std::move(d);
  return g;
}

// Smooth zero-mean unit-variance series: white noise through three cascaded
// exponential filters.
std::vector<double> smooth_noise(std::size_t len, double tau, std::mt19937_64& rng) {
  const std::size_t warm = static_cast<std::size_t>(8.0 * tau);
  const double a = 1.0 / tau;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::vector<double> out;
  out.reserve(len);
  for (std::size_t t = 0; t < len + warm; ++t) {
    s1 += a * (normal(rng) - s1);
    s2 += a * (s1 - s2);
    s3 += a * (s2 - s3);
    if (t >= warm) out.push_back(s3);
  }
  double mean = 0.0, var = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(len);
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(len));
  for (double& v : out) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return out;
}

}  // namespace

SynthData synth_generate(std::size_t n_nodes, std::size_t n_days, std::uint64_t seed,
                         const SynthOptions& opts) {
  if (n_nodes < 4) throw ConfigError("synthetic data needs at least 4 nodes");
  if (n_days == 0) throw ConfigError("synthetic data needs at least one day");

  std::mt19937_64 rng(seed);
  SynthData out;
  out.graph = geometric_graph(n_nodes, rng);

  ReadingsTable& r = out.readings;
  r.n_nodes = n_nodes;
  r.interval_minutes = opts.interval_minutes;
  r.start = opts.start;
  const std::size_t spd = r.steps_per_day();
  const std::size_t steps = n_days * spd;
  const CalendarIndex cal = [&] {
    ReadingsTable probe = r;
    probe.values = Tensor({steps, n_nodes}, 0.0);
    return calendar_for(probe);
  }();

  struct NodeShape {
    double base, amp, am, pm, am_hour, pm_hour, drift, noise;
  };
  std::vector<NodeShape> shape(n_nodes);
  for (auto& s : shape) {
    s.base = uniform(rng, 120.0, 320.0);
    s.amp = uniform(rng, 0.3, 0.6) * s.base;
    s.am = uniform(rng, 0.2, 1.0);
    s.pm = uniform(rng, 0.2, 1.0);
    s.am_hour = uniform(rng, 7.0, 9.0);
    s.pm_hour = uniform(rng, 16.5, 18.5);
    s.drift = uniform(rng, 0.8, 1.2) * s.amp;
    s.noise = 0.0005 * s.base;
  }

  // Drift: independent multi-day swells, then two rounds of neighbour averaging.
  std::vector<std::vector<double>> drift(n_nodes);
  for (auto& series : drift) series = smooth_noise(steps, 2.0 * static_cast<double>(spd), rng);
  const Tensor& adj = out.graph.adjacency;
  for (int round = 0; round < 2; ++round) {
    std::vector<std::vector<double>> next = drift;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      double deg = 0.0;
      for (std::size_t j = 0; j < n_nodes; ++j) deg += adj(i, j);
      for (std::size_t t = 0; t < steps; ++t) {
        double nb = 0.0;
        for (std::size_t j = 0; j < n_nodes; ++j)
          if (adj(i, j) != 0.0) nb += drift[j][t];
        next[i][t] = 0.6 * drift[i][t] + 0.4 * (deg > 0.0 ? nb / deg : drift[i][t]);
      }
    }
    drift = std::move(next);
  }

  // Congestion dips: raised-cosine troughs lasting one to two hours.
  std::vector<std::vector<double>> dips(n_nodes, std::vector<double>(steps, 0.0));
  const double dip_rate = 1.0 / (7.0 * static_cast<double>(spd));
  for (std::size_t i = 0; i < n_nodes; ++i)
    for (std::size_t t = 0; t < steps; ++t) {
      if (uniform01(rng) >= dip_rate) continue;
      const double depth = uniform(rng, 0.05, 0.15);
      const auto len = static_cast<std::size_t>(uniform(rng, 1.0, 2.0) * static_cast<double>(spd) / 24.0);
      for (std::size_t k = 0; k < len && t + k < steps; ++k) {
        const double phase = static_cast<double>(k) / static_cast<double>(len);
        dips[i][t + k] = std::max(dips[i][t + k], depth * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase)));
      }
    }

  r.values = Tensor({steps, n_nodes}, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double hour = 24.0 * static_cast<double>(cal.tod[t]) / static_cast<double>(spd);
    const bool weekend = cal.dow[t] >= 5;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      const NodeShape& s = shape[i];
      const double diurnal = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 3.0) / 24.0));
      const double rush = (weekend ? 0.3 : 1.0) * (s.am * bump(hour, s.am_hour, 1.0) + s.pm * bump(hour, s.pm_hour, 1.3));
      double v = s.base + s.amp * (diurnal + rush - 0.6) + s.drift * drift[i][t];
      v *= 1.0 - dips[i][t];
      v += s.noise * normal(rng);
      r.values(t, i) = std::max(v, 0.0);
    }
  }
  return out;
}

}  // namespace lvst

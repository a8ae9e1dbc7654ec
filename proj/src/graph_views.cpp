#include "lvst/graph_views.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lvst/kernels.hpp"
#include "lvst/linalg.hpp"

namespace lvst {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw InputError("graph file line " + std::to_string(line) + ": " + what);
}

std::size_t parse_node(std::istringstream& ss, std::size_t n, std::size_t line) {
  long long v = -1;
  if (!(ss >> v)) parse_fail(line, "expected node id");
  if (v < 0 || static_cast<std::size_t>(v) >= n) {
    parse_fail(line, "node id " + std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
  }
  return static_cast<std::size_t>(v);
}

// Indices of the k best entries of `keys` under `better`, ties to lower index.
template <typename Better>
std::vector<std::size_t> top_k(std::size_t n, std::size_t k, Better better) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), better);
  idx.resize(std::min(k, n));
  return idx;
}

}  // namespace

void RoadGraph::validate() const {
  if (adjacency.rank() != 2 || adjacency.dim(0) != n_nodes || adjacency.dim(1) != n_nodes) {
    throw InputError("adjacency must be " + std::to_string(n_nodes) + "x" + std::to_string(n_nodes));
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (adjacency(i, i) != 0.0) throw InputError("self-loop on node " + std::to_string(i));
    for (std::size_t j = 0; j < n_nodes; ++j) {
      const double a = adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw InputError("adjacency entries must be 0 or 1");
      if (edge_dist) {
        const double d = (*edge_dist)(i, j);
        if (std::isfinite(d) != (a == 1.0)) {
          throw InputError("edge distance present without edge (or vice versa) at (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
        }
        if (d < 0.0) throw InputError("negative edge distance");
      }
      if (od_matrix && (*od_matrix)(i, j) < 0.0) throw InputError("negative OD weight");
    }
  }
}

RoadGraph parse_graph(std::istream& in) {
  RoadGraph g;
  bool have_n = false;
  int dist_mode = -1;  // -1 unknown, 0 no distances, 1 distances
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ss(raw);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "N") {
      long long n = 0;
      if (have_n) parse_fail(line, "duplicate N header");
      if (!(ss >> n) || n <= 0) parse_fail(line, "N must be a positive count");
      g.n_nodes = static_cast<std::size_t>(n);
      g.adjacency = Tensor({g.n_nodes, g.n_nodes});
      have_n = true;
      continue;
    }
    if (!have_n) parse_fail(line, "N header must come first");
    const std::size_t n = g.n_nodes;
    if (tag == "E") {
      const std::size_t i = parse_node(ss, n, line);
      const std::size_t j = parse_node(ss, n, line);
      if (i == j) parse_fail(line, "self-loop");
      double d = 0.0;
      const bool has_d = static_cast<bool>(ss >> d);
      if (dist_mode == -1) {
        dist_mode = has_d ? 1 : 0;
        if (has_d) g.edge_dist = Tensor({n, n}, kUnreachable);
      } else if (dist_mode != (has_d ? 1 : 0)) {
        parse_fail(line, "mixing edges with and without distances");
      }
      if (has_d) {
        if (!std::isfinite(d) || d < 0.0) parse_fail(line, "edge distance must be finite and >= 0");
        auto& ed = *g.edge_dist;
        ed(i, j) = std::min(ed(i, j), d);
        ed(j, i) = ed(i, j);
      }
      g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    } else if (tag == "OD") {
      const std::size_t i = parse_node(ss, n, line);
      const std::size_t j = parse_node(ss, n, line);
      double w = 0.0;
      if (!(ss >> w) || !std::isfinite(w) || w < 0.0) parse_fail(line, "OD weight must be >= 0");
      if (!g.od_matrix) g.od_matrix = Tensor({n, n});
      (*g.od_matrix)(i, j) += w;
    } else {
      parse_fail(line, "unknown record '" + tag + "'");
    }
  }
  if (!have_n) throw InputError("graph file has no N header");
  g.validate();
  return g;
}

RoadGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open graph file " + path);
  return parse_graph(in);
}

void write_graph(std::ostream& out, const RoadGraph& g) {
  out << "N " << g.n_nodes << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < g.n_nodes; ++i)
    for (std::size_t j = i + 1; j < g.n_nodes; ++j) {
      if (g.adjacency(i, j) == 0.0) continue;
      out << "E " << i << ' ' << j;
      if (g.edge_dist) out << ' ' << (*g.edge_dist)(i, j);
      out << '\n';
    }
  if (g.od_matrix) {
    for (std::size_t i = 0; i < g.n_nodes; ++i)
      for (std::size_t j = 0; j < g.n_nodes; ++j)
        if ((*g.od_matrix)(i, j) != 0.0) out << "OD " << i << ' ' << j << ' ' << (*g.od_matrix)(i, j) << '\n';
  }
}

ViewConfig ViewConfig::resolved(std::size_t n) const {
  ViewConfig c = *this;
  if (c.k_global == 0) c.k_global = (n + 19) / 20;
  if (c.k_pivotal == 0) c.k_pivotal = (n + 9) / 10;
  if (!(c.local_threshold > 0.0)) throw ConfigError("local threshold must be > 0");
  if (c.k_global >= n) {
    throw ConfigError("k_global (" + std::to_string(c.k_global) + ") must be < N (" +
                      std::to_string(n) + ")");
  }
  if (c.k_pivotal > n) {
    throw ConfigError("k_pivotal (" + std::to_string(c.k_pivotal) + ") must be <= N (" +
                      std::to_string(n) + ")");
  }
  if (c.steps_per_day == 0) throw ConfigError("steps_per_day must be > 0");
  return c;
}

Tensor shortest_paths(const RoadGraph& g) {
  const std::size_t n = g.n_nodes;
  Tensor d({n, n}, kUnreachable);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (g.adjacency(i, j) == 0.0) continue;
      const double w = g.edge_dist ? (*g.edge_dist)(i, j) : 1.0;
      if (w < 0.0) throw InputError("negative edge weight between " + std::to_string(i) + " and " + std::to_string(j));
      d(i, j) = w;
    }
    d(i, i) = 0.0;
  }
  kernels::parallel::floyd_warshall(n, d.data());
  return d;
}

Tensor build_local_mask(const Tensor& dist, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("local threshold must be > 0");
  Tensor m(dist.shape());
  for (std::size_t i = 0; i < dist.size(); ++i) m[i] = dist[i] < threshold ? 1.0 : 0.0;
  return m;
}

Tensor daily_average(const Tensor& history, std::size_t steps_per_day) {
  if (history.rank() != 2) throw DimensionError("history must be [steps, nodes]");
  const std::size_t steps = history.dim(0), n = history.dim(1);
  if (steps_per_day == 0 || steps < steps_per_day) {
    throw InputError("daily average needs at least one full day (" + std::to_string(steps_per_day) +
                     " steps), got " + std::to_string(steps));
  }
  const std::size_t days = steps / steps_per_day;
  Tensor avg({n, steps_per_day});
  for (std::size_t d = 0; d < days; ++d)
    for (std::size_t s = 0; s < steps_per_day; ++s)
      for (std::size_t i = 0; i < n; ++i) avg(i, s) += history(d * steps_per_day + s, i);
  for (double& v : avg.values()) v /= static_cast<double>(days);
  return avg;
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("DTW needs non-empty series");
  return kernels::dtw(a, b);
}

Tensor mutual_top_k(const Tensor& dist, std::size_t k) {
  const std::size_t n = dist.dim(0);
  if (n < 2) throw InputError("global view needs at least 2 nodes");
  if (k >= n) throw ConfigError("k_global must be < N");
  std::vector<std::vector<char>> member(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return dist(i, a) < dist(i, b); });
    for (std::size_t r = 0; r < k; ++r) member[i][others[r]] = 1;
  }
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = member[i][j] && member[j][i] ? 1.0 : 0.0;
  return m;
}

Tensor build_global_mask(const Tensor& profiles, std::size_t k_global) {
  if (profiles.rank() != 2) throw DimensionError("profiles must be [N, L]");
  const std::size_t n = profiles.dim(0), len = profiles.dim(1);
  if (len == 0) throw InputError("DTW needs non-empty series");
  Tensor dist({n, n}, kernels::parallel::dtw_matrix(n, len, profiles.data()));
  return mutual_top_k(dist, k_global);
}

std::vector<double> node_scores(const Tensor& od) {
  const std::size_t n = od.dim(0);
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[i] += od(i, j) + od(j, i);
  return s;
}

Tensor build_pivotal_mask(std::span<const double> scores, std::size_t k_pivotal) {
  const std::size_t n = scores.size();
  if (k_pivotal > n) throw ConfigError("k_pivotal must be <= N");
  const auto top = top_k(n, k_pivotal, [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<char> pivotal(n, 0);
  for (std::size_t i : top) pivotal[i] = 1;
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (pivotal[i] || pivotal[j]) m(i, j) = scores[i] + scores[j];
  return m;
}

const Tensor& od_or_adjacency(const RoadGraph& g) { return g.od_matrix ? *g.od_matrix : g.adjacency; }

Tensor normalized_laplacian(const Tensor& adj) {
  const std::size_t n = adj.dim(0);
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += adj(i, j);
    inv_sqrt_deg[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Tensor l({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      l(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt_deg[i] * adj(i, j) * inv_sqrt_deg[j];
  return l;
}

std::size_t connected_components(const Tensor& adj) {
  const std::size_t n = adj.dim(0);
  std::vector<char> seen(n, 0);
  std::size_t count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++count;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v)
        if (!seen[v] && (adj(u, v) != 0.0 || adj(v, u) != 0.0)) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  return count;
}

LaplacianBasis laplacian_basis(const RoadGraph& g, std::size_t k) {
  constexpr double kTrivial = 1e-8;
  const SymEig eig = sym_eig(normalized_laplacian(g.adjacency));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < eig.values.size() && keep.size() < k; ++i)
    if (eig.values[i] >= kTrivial) keep.push_back(i);
  if (keep.size() < k) {
    throw InputError("graph has " + std::to_string(keep.size()) + " non-trivial Laplacian eigenvalues, " +
                     std::to_string(k) + " requested (" + std::to_string(connected_components(g.adjacency)) +
                     " connected components)");
  }
  LaplacianBasis b;
  b.vectors = Tensor({g.n_nodes, k});
  for (std::size_t c = 0; c < k; ++c) {
    b.eigenvalues.push_back(eig.values[keep[c]]);
    for (std::size_t i = 0; i < g.n_nodes; ++i) b.vectors(i, c) = eig.vectors(i, keep[c]);
  }
  return b;
}

ViewMasks build_views(const RoadGraph& g, const Tensor& train_history, const ViewConfig& cfg_in) {
  const ViewConfig cfg = cfg_in.resolved(g.n_nodes);
  if (train_history.rank() != 2 || train_history.dim(1) != g.n_nodes) {
    throw InputError("history has " + std::to_string(train_history.rank() == 2 ? train_history.dim(1) : 0) +
                     " nodes, graph has " + std::to_string(g.n_nodes));
  }
  ViewMasks v;
  v.local = build_local_mask(shortest_paths(g), cfg.local_threshold);
  v.global = build_global_mask(daily_average(train_history, cfg.steps_per_day), cfg.k_global);
  v.pivotal = build_pivotal_mask(node_scores(od_or_adjacency(g)), cfg.k_pivotal);
  return v;
}

void write_mask_csv(std::ostream& out, const std::string& name, const Tensor& mask) {
  const std::size_t n = mask.dim(0);
  out << "# mask " << name << " N=" << n << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j) out << ',';
      out << mask(i, j);
    }
    out << '\n';
  }
}

Tensor read_mask_csv(std::istream& in, const std::string& expected_name) {
  std::string header;
  if (!std::getline(in, header)) throw InputError("empty mask file");
  std::istringstream hs(header);
  std::string hash, kw, name, nfield;
  hs >> hash >> kw >> name >> nfield;
  if (hash != "#" || kw != "mask" || nfield.rfind("N=", 0) != 0) {
    throw InputError("bad mask header: '" + header + "'");
  }
  if (!expected_name.empty() && name != expected_name) {
    throw InputError("mask file holds '" + name + "', expected '" + expected_name + "'");
  }
  const std::size_t n = std::stoul(nfield.substr(2));
  Tensor m({n, n});
  std::string row;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, row)) throw InputError("mask '" + name + "' truncated at row " + std::to_string(i));
    std::istringstream rs(row);
    std::string cell;
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::getline(rs, cell, ',')) {
        throw InputError("mask '" + name + "' row " + std::to_string(i) + " has too few columns");
      }
      m(i, j) = std::stod(cell);
    }
  }
  return m;
}

void save_mask(const std::string& path, const std::string& name, const Tensor& mask) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_mask_csv(out, name, mask);
}

Tensor load_mask(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mask file " + path);
  return read_mask_csv(in, name);
}

}  // namespace lvst

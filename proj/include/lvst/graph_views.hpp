#pragma once

// Road graph I/O and the three spatial views used to mask attention:
//  - local:   node pairs closer than a shortest-path threshold
//  - global:  mutual top-K neighbours by DTW distance of daily profiles
//  - pivotal: pairs touching a high-score hub, weighted by summed scores
// plus the normalized-Laplacian eigenvector basis for spatial embeddings.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lvst/tensor.hpp"

namespace lvst {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct RoadGraph {
  std::size_t n_nodes = 0;
  Tensor adjacency;                 // N x N, entries 0/1, zero diagonal, symmetric
  std::optional<Tensor> edge_dist;  // N x N, +inf where there is no edge
  std::optional<Tensor> od_matrix;  // N x N, nonnegative

  /// Throws InputError when an invariant is violated.
  void validate() const;
};

/// Line format:
///   N <count>
///   E <i> <j> [dist]     undirected edge, 0-based node ids
///   OD <i> <j> <w>       origin-destination weight (repeats accumulate)
/// Blank lines and lines starting with '#' are ignored. Either every edge
/// carries a distance or none does.
RoadGraph parse_graph(std::istream& in);
RoadGraph load_graph(const std::string& path);
void write_graph(std::ostream& out, const RoadGraph& g);

struct ViewConfig {
  double local_threshold = 3.0;
  std::size_t k_global = 0;   // 0 -> ceil(N / 20)
  std::size_t k_pivotal = 0;  // 0 -> ceil(N / 10)
  std::size_t steps_per_day = 288;

  /// Fills zero knobs with their N-dependent defaults and checks ranges.
  ViewConfig resolved(std::size_t n_nodes) const;
};

struct ViewMasks {
  Tensor local;    // binary
  Tensor global;   // binary, symmetric
  Tensor pivotal;  // raw Score(i) + Score(j) weights
};

struct LaplacianBasis {
  Tensor vectors;                    // N x k
  std::vector<double> eigenvalues;  // k, ascending
};

/// All-pairs shortest paths (Floyd-Warshall). Uses edge_dist when present and
/// unit weights otherwise; unreachable pairs hold kUnreachable.
Tensor shortest_paths(const RoadGraph& g);

Tensor build_local_mask(const Tensor& dist, double threshold);

/// history: [T_hist, N] (one row per step). Returns [N, steps_per_day]; the
/// trailing partial day is dropped.
Tensor daily_average(const Tensor& history, std::size_t steps_per_day);

double dtw_distance(std::span<const double> a, std::span<const double> b);

/// profiles: [N, L]. Mutual top-K by smallest DTW distance, ties to lower id.
Tensor build_global_mask(const Tensor& profiles, std::size_t k_global);
/// Same construction from a precomputed symmetric distance matrix.
Tensor mutual_top_k(const Tensor& distances, std::size_t k);

std::vector<double> node_scores(const Tensor& od);
Tensor build_pivotal_mask(std::span<const double> scores, std::size_t k_pivotal);

/// The OD matrix if present, else the adjacency as a degree proxy.
const Tensor& od_or_adjacency(const RoadGraph& g);

Tensor normalized_laplacian(const Tensor& adjacency);
LaplacianBasis laplacian_basis(const RoadGraph& g, std::size_t k);

std::size_t connected_components(const Tensor& adjacency);

/// Builds all three views; history must come from the training period only.
ViewMasks build_views(const RoadGraph& g, const Tensor& train_history, const ViewConfig& cfg);

/// Mask CSV: header `# mask <name> N=<n>`, then N rows of N values.
void write_mask_csv(std::ostream& out, const std::string& name, const Tensor& mask);
Tensor read_mask_csv(std::istream& in, const std::string& expected_name);
void save_mask(const std::string& path, const std::string& name, const Tensor& mask);
Tensor load_mask(const std::string& path, const std::string& name);

}  // namespace lvst

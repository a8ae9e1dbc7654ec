#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvst/model.hpp"

namespace lvst {

struct GradcheckOptions {
  std::size_t n_nodes = 6;
  std::size_t input_len = 4;
  std::size_t output_len = 2;
  std::size_t d = 8;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t k_eigen = 3;
  std::size_t batch = 2;
  double eps = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 11;
  std::string fault_op;  // when set, that op's backward rule is scaled by fault_factor
  double fault_factor = 1.5;
};

struct GroupReport {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GroupReport> groups;  // one per parameter tensor, in store order
  double tolerance = 0.0;
  bool passed = false;
  std::size_t worst = 0;  // index into groups
};

/// |a - n| / max(|a|, |n|, kGradFloor).
inline constexpr double kGradFloor = 1e-6;
double relative_error(double analytic, double numeric);

/// Builds a tiny model on a random ring-with-chords graph and compares
/// backward() against central differences of a smooth scalar loss, for every
/// element of every parameter tensor.
GradcheckReport run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace lvst

#pragma once

#include <cstddef>
#include <cstdint>

#include "lvst/data.hpp"
#include "lvst/graph_views.hpp"

namespace lvst {

struct SynthOptions {
  int interval_minutes = 5;
  std::string start = "2024-01-01T00:00:00";  // a Monday
};

struct SynthData {
  RoadGraph graph;
  ReadingsTable readings;
};

/// Random connected geometric road graph with edge distances, and flow-like
/// readings per node: base level, a daily profile with morning and evening
/// peaks (damped on weekends), a slowly drifting component diffused along
/// edges, occasional congestion dips and a little white noise. Fully
/// determined by the arguments.
SynthData synth_generate(std::size_t n_nodes, std::size_t n_days, std::uint64_t seed,
                         const SynthOptions& opts = {});

}  // namespace lvst

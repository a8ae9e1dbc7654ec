#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lvst/embedding.hpp"
#include "lvst/tensor.hpp"

namespace lvst {

/// Sensor readings, one row per time step.
struct ReadingsTable {
  std::size_t n_nodes = 0;
  int interval_minutes = 5;
  std::string start = "2024-01-01T00:00:00";  // ISO-8601, local time
  Tensor values;                               // [n_steps, n_nodes]
  std::size_t gaps_filled = 0;

  std::size_t n_steps() const { return values.empty() ? 0 : values.dim(0); }
  std::size_t steps_per_day() const;
};

/// Header `# readings N=<n> interval=<min> start=<iso8601>`, then one line per
/// step with N comma-separated values. Empty, `nan` or `NA` cells are gaps:
/// forward-filled, and back-filled before the first reading of a node.
ReadingsTable parse_readings(std::istream& in);
ReadingsTable load_readings(const std::string& path);
void write_readings(std::ostream& out, const ReadingsTable& table);
void save_readings(const std::string& path, const ReadingsTable& table);

/// Per-step calendar: time-of-day slot and day-of-week (Monday = 0).
struct CalendarIndex {
  std::vector<std::size_t> tod;
  std::vector<std::size_t> dow;
};
CalendarIndex calendar_for(const ReadingsTable& table);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct StepRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct SplitRanges {
  StepRange train, val, test;
};

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);

/// Contiguous chronological ranges; boundaries floor-rounded, remainder to
/// test. Every range must hold at least `min_len` steps.
SplitRanges chronological_split(std::size_t n_steps, const SplitRatios& ratios, std::size_t min_len);

/// Start offsets of stride-1 windows of input_len + output_len steps in range.
std::vector<std::size_t> make_windows(const StepRange& range, std::size_t input_len,
                                      std::size_t output_len);

/// Global z-score fit on a step range.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  static Normalizer fit(const Tensor& values, const StepRange& range);
  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

std::string normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const std::string& text);

struct WindowedDataset {
  Tensor raw;         // [steps, N]
  Tensor normalized;  // [steps, N]
  CalendarIndex calendar;
  Normalizer normalizer;
  SplitRanges splits;
  std::size_t input_len = 12;
  std::size_t output_len = 12;
  std::size_t steps_per_day = 288;
  std::vector<std::size_t> train_windows, val_windows, test_windows;

  std::size_t n_nodes() const { return raw.dim(1); }
  const std::vector<std::size_t>& windows(Split s) const;
  const StepRange& range(Split s) const;
};

/// Rows [range.begin, range.end) of a [steps, N] matrix.
Tensor slice_steps(const Tensor& values, const StepRange& range);

WindowedDataset make_dataset(const ReadingsTable& table, const SplitRatios& ratios,
                             std::size_t input_len, std::size_t output_len);

/// Replaces the normalizer (e.g. with one restored from a checkpoint) and
/// recomputes the normalized series.
void set_normalizer(WindowedDataset& data, const Normalizer& n);

struct Batch {
  Tensor x;  // [B, T, N] normalized inputs
  Tensor y;  // [B, T', N] normalized targets
  CalendarBatch cal;
};

Batch assemble_batch(const WindowedDataset& data, std::span<const std::size_t> starts);

/// Raw-unit targets [B, T', N].
Tensor raw_targets(const WindowedDataset& data, std::span<const std::size_t> starts);

}  // namespace lvst

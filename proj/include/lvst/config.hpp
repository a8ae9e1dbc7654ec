#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvst/data.hpp"
#include "lvst/graph_views.hpp"
#include "lvst/model.hpp"
#include "lvst/train.hpp"

namespace lvst {

std::string mask_mode_name(MaskMode m);
MaskMode parse_mask_mode(const std::string& s);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Everything a CLI run can be told. Defaults < config file < flags.
struct RunConfig {
  std::string graph;
  std::string readings;
  std::string masks_dir;   // empty -> out_dir
  std::string checkpoint;  // empty -> <out_dir>/model.ckpt
  std::string out_dir = "lvst_out";

  double local_threshold = 3.0;
  std::size_t k_global = 0;
  std::size_t k_pivotal = 0;

  std::size_t input_len = 12;
  std::size_t output_len = 12;
  std::size_t d = 64;
  std::size_t k_eigen = 8;
  std::size_t layers = 6;
  std::size_t heads_spatial = 4;
  std::size_t heads_temporal = 4;
  double dropout = 0.1;
  MaskMode mask_mode = MaskMode::kHard;
  bool use_stcb = true;

  double train_ratio = 0.6;
  double val_ratio = 0.2;
  double test_ratio = 0.2;

  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  std::size_t max_steps = 0;
  double max_seconds = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 -> machine parallelism

  std::string resolved_masks_dir() const { return masks_dir.empty() ? out_dir : masks_dir; }
  std::string resolved_checkpoint() const { return checkpoint.empty() ? out_dir + "/model.ckpt" : checkpoint; }

  SplitRatios split() const { return {train_ratio, val_ratio, test_ratio}; }
  ViewConfig views(std::size_t steps_per_day) const;
  ModelConfig model(std::size_t n_nodes, std::size_t steps_per_day) const;
  TrainConfig training() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Overlays keys of `j` onto `c`; unknown keys and wrong types are ConfigErrors.
void apply_json(RunConfig& c, const nlohmann::json& j);
/// Field names in declaration order (snake_case; flags use kebab-case).
std::vector<std::string> config_keys();
/// Parses `text` as the type of field `key` and stores it.
void set_config_value(RunConfig& c, const std::string& key, const std::string& text);
RunConfig load_run_config(const std::string& path, RunConfig base = {});

}  // namespace lvst

#include "lvst/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

namespace lvst {

std::string mask_mode_name(MaskMode m) {
  switch (m) {
    case MaskMode::kNone: return "none";
    case MaskMode::kHard: return "hard";
    case MaskMode::kLiteral: return "literal";
  }
  return "hard";
}

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "hard") return MaskMode::kHard;
  if (s == "literal") return MaskMode::kLiteral;
  if (s == "none") return MaskMode::kNone;
  throw ConfigError("mask mode must be hard, literal or none (got '" + s + "')");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_nodes", c.n_nodes},
          {"input_len", c.input_len},
          {"output_len", c.output_len},
          {"d", c.d},
          {"k_eigen", c.k_eigen},
          {"layers", c.layers},
          {"heads_spatial", c.heads_spatial},
          {"heads_temporal", c.heads_temporal},
          {"steps_per_day", c.steps_per_day},
          {"dropout", c.dropout},
          {"mask_mode", mask_mode_name(c.mask_mode)},
          {"use_stcb", c.use_stcb}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.n_nodes = j.at("n_nodes").get<std::size_t>();
    c.input_len = j.at("input_len").get<std::size_t>();
    c.output_len = j.at("output_len").get<std::size_t>();
    c.d = j.at("d").get<std::size_t>();
    c.k_eigen = j.at("k_eigen").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads_spatial = j.at("heads_spatial").get<std::size_t>();
    c.heads_temporal = j.at("heads_temporal").get<std::size_t>();
    c.steps_per_day = j.at("steps_per_day").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
    c.use_stcb = j.at("use_stcb").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

namespace {

template <class F>
void for_each_field(RunConfig& c, F&& f) {
  f("graph", c.graph);
  f("readings", c.readings);
  f("masks_dir", c.masks_dir);
  f("checkpoint", c.checkpoint);
  f("out_dir", c.out_dir);
  f("local_threshold", c.local_threshold);
  f("k_global", c.k_global);
  f("k_pivotal", c.k_pivotal);
  f("input_len", c.input_len);
  f("output_len", c.output_len);
  f("d", c.d);
  f("k_eigen", c.k_eigen);
  f("layers", c.layers);
  f("heads_spatial", c.heads_spatial);
  f("heads_temporal", c.heads_temporal);
  f("dropout", c.dropout);
  f("mask_mode", c.mask_mode);
  f("use_stcb", c.use_stcb);
  f("train_ratio", c.train_ratio);
  f("val_ratio", c.val_ratio);
  f("test_ratio", c.test_ratio);
  f("lr", c.lr);
  f("batch_size", c.batch_size);
  f("max_epochs", c.max_epochs);
  f("patience", c.patience);
  f("max_steps", c.max_steps);
  f("max_seconds", c.max_seconds);
  f("seed", c.seed);
  f("threads", c.threads);
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  RunConfig copy = c;
  for_each_field(copy, [&](const char* key, auto& v) {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, MaskMode>)
      j[key] = mask_mode_name(v);
    else
      j[key] = v;
  });
  return j;
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> known;
  for_each_field(c, [&](const char* key, auto& v) {
    known.insert(key);
    const auto it = j.find(key);
    if (it == j.end()) return;
    using T = std::decay_t<decltype(v)>;
    try {
      if constexpr (std::is_same_v<T, MaskMode>) {
        v = parse_mask_mode(it->template get<std::string>());
      } else if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError(std::string(key) + " must be a nonnegative integer");
        v = it->template get<T>();
      } else {
        v = it->template get<T>();
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key ") + key + " has the wrong type");
    }
  });
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  RunConfig c;
  for_each_field(c, [&](const char* key, auto&) { keys.emplace_back(key); });
  return keys;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& text) {
  bool found = false;
  for_each_field(c, [&](const char* k, auto& v) {
    if (key != k) return;
    found = true;
    using T = std::decay_t<decltype(v)>;
    const std::string bad = "--" + key + ": cannot parse '" + text + "'";
    if constexpr (std::is_same_v<T, std::string>) {
      v = text;
    } else if constexpr (std::is_same_v<T, MaskMode>) {
      v = parse_mask_mode(text);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") v = true;
      else if (text == "false" || text == "0") v = false;
      else throw ConfigError(bad);
    } else {
      std::size_t pos = 0;
      try {
        if constexpr (std::is_floating_point_v<T>) {
          v = std::stod(text, &pos);
        } else if constexpr (std::is_unsigned_v<T>) {
          if (!text.empty() && text[0] == '-') throw ConfigError(bad);
          v = static_cast<T>(std::stoull(text, &pos));
        } else {
          v = static_cast<T>(std::stoll(text, &pos));
        }
      } catch (const std::logic_error&) {
        throw ConfigError(bad);
      }
      if (pos != text.size()) throw ConfigError(bad);
    }
  });
  if (!found) throw ConfigError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

ViewConfig RunConfig::views(std::size_t steps_per_day) const {
  ViewConfig v;
  v.local_threshold = local_threshold;
  v.k_global = k_global;
  v.k_pivotal = k_pivotal;
  v.steps_per_day = steps_per_day;
  return v;
}

ModelConfig RunConfig::model(std::size_t n_nodes, std::size_t steps_per_day) const {
  ModelConfig m;
  m.n_nodes = n_nodes;
  m.input_len = input_len;
  m.output_len = output_len;
  m.d = d;
  m.k_eigen = k_eigen;
  m.layers = layers;
  m.heads_spatial = heads_spatial;
  m.heads_temporal = heads_temporal;
  m.steps_per_day = steps_per_day;
  m.dropout = dropout;
  m.mask_mode = mask_mode;
  m.use_stcb = use_stcb;
  return m;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.lr = lr;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.max_steps = max_steps;
  t.max_seconds = max_seconds;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  for (double r : {train_ratio, val_ratio, test_ratio})
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (!(local_threshold > 0.0)) throw ConfigError("local threshold must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  training().validate();
}

}  // namespace lvst

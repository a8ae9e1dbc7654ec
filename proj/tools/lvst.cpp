// lvst: preprocess / train / evaluate / predict / gradcheck / synth.
// Exit codes: 0 ok, 1 gradcheck failure, 2 input or config error, 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lvst/checkpoint.hpp"
#include "lvst/config.hpp"
#include "lvst/gradcheck.hpp"
#include "lvst/kernels.hpp"
#include "lvst/synth.hpp"
#include "lvst/train.hpp"

namespace fs = std::filesystem;
using namespace lvst;

namespace {

constexpr int kExitGradFail = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

std::string kebab(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

struct Flags {
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_run_flags(CLI::App* sub, Flags& flags) {
  sub->add_option("--config", flags.config_path, "JSON config file (keys are snake_case flag names)");
  for (const std::string& key : config_keys()) sub->add_option("--" + kebab(key), flags.values[key]);
}

RunConfig resolve(const CLI::App* sub, const Flags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path, cfg);
  if (const char* env = std::getenv("LVST_SEED")) set_config_value(cfg, "seed", env);
  for (const auto& [key, text] : flags.values)
    if (sub->count("--" + kebab(key))) set_config_value(cfg, key, text);
  cfg.validate();
  kernels::set_num_threads(cfg.threads);
  return cfg;
}

void require(const std::string& path, const char* what) {
  if (path.empty()) throw InputError(std::string("missing --") + what);
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

void echo_config(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / name, to_json(cfg).dump(2) + "\n");
}

struct Loaded {
  RoadGraph graph;
  ReadingsTable readings;
  WindowedDataset data;
};

Loaded load_inputs(const RunConfig& cfg) {
  require(cfg.graph, "graph");
  require(cfg.readings, "readings");
  Loaded l;
  l.graph = load_graph(cfg.graph);
  l.readings = load_readings(cfg.readings);
  if (l.graph.n_nodes != l.readings.n_nodes)
    throw InputError("graph has " + std::to_string(l.graph.n_nodes) + " nodes, readings have " +
                     std::to_string(l.readings.n_nodes));
  if (l.readings.gaps_filled)
    std::fprintf(stderr, "readings: filled %zu gap cells\n", l.readings.gaps_filled);
  l.data = make_dataset(l.readings, cfg.split(), cfg.input_len, cfg.output_len);
  return l;
}

const char* kMaskFiles[3][2] = {{"m_local.csv", "local"}, {"m_global.csv", "global"}, {"m_pivotal.csv", "pivotal"}};

SpatialContext load_context(const RunConfig& cfg, std::size_t n) {
  const fs::path dir = cfg.resolved_masks_dir();
  for (const auto& f : kMaskFiles) require((dir / f[0]).string(), f[0]);
  require((dir / "laplacian_basis.csv").string(), "laplacian_basis.csv");
  ViewMasks masks{load_mask((dir / kMaskFiles[0][0]).string(), kMaskFiles[0][1]),
                  load_mask((dir / kMaskFiles[1][0]).string(), kMaskFiles[1][1]),
                  load_mask((dir / kMaskFiles[2][0]).string(), kMaskFiles[2][1])};
  std::ifstream bin(dir / "laplacian_basis.csv");
  LaplacianBasis basis;
  basis.vectors = read_tensor_csv(bin);
  if (masks.local.dim(0) != n || basis.vectors.rank() != 2 || basis.vectors.dim(0) != n)
    throw InputError("preprocess artifacts in " + dir.string() + " do not match " + std::to_string(n) + " nodes");
  return make_context(masks, basis);
}

int cmd_synth(const RunConfig& cfg, std::size_t nodes, std::size_t days) {
  const SynthData s = synth_generate(nodes, days, cfg.seed);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream g(fs::path(cfg.out_dir) / "graph.txt");
    write_graph(g, s.graph);
  }
  save_readings((fs::path(cfg.out_dir) / "readings.csv").string(), s.readings);
  std::printf("wrote %s/graph.txt and %s/readings.csv (%zu nodes, %zu steps)\n", cfg.out_dir.c_str(),
              cfg.out_dir.c_str(), nodes, s.readings.n_steps());
  return 0;
}

int cmd_preprocess(const RunConfig& cfg) {
  const Loaded in = load_inputs(cfg);
  const ViewConfig views = cfg.views(in.data.steps_per_day).resolved(in.graph.n_nodes);
  const Preprocessed pre = preprocess(in.graph, in.data, views, cfg.k_eigen);
  const fs::path dir = cfg.resolved_masks_dir();
  fs::create_directories(dir);
  save_mask((dir / kMaskFiles[0][0]).string(), kMaskFiles[0][1], pre.masks.local);
  save_mask((dir / kMaskFiles[1][0]).string(), kMaskFiles[1][1], pre.masks.global);
  save_mask((dir / kMaskFiles[2][0]).string(), kMaskFiles[2][1], pre.masks.pivotal);
  {
    std::ofstream b(dir / "laplacian_basis.csv");
    write_tensor_csv(b, pre.basis.vectors);
  }
  write_text(dir / "normalizer.json", normalizer_to_json(in.data.normalizer) + "\n");
  echo_config(cfg, "config.preprocess.json");
  std::printf("preprocess: %zu nodes, k_global=%zu k_pivotal=%zu, artifacts in %s\n", in.graph.n_nodes,
              views.k_global, views.k_pivotal, dir.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Loaded in = load_inputs(cfg);
  const SpatialContext ctx = load_context(cfg, in.graph.n_nodes);
  const ModelConfig mc = cfg.model(in.graph.n_nodes, in.data.steps_per_day);
  mc.validate();
  echo_config(cfg, "config.train.json");

  std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
  log << "epoch,train_loss,val_mae,steps,seconds\n";
  log.precision(17);
  const TrainResult res = train(init_model(mc, cfg.seed), mc, ctx, in.data, cfg.training(), [&](const EpochLog& e) {
    log << e.epoch << ',' << e.train_loss << ',' << e.val_mae << ',' << e.steps << ',' << e.seconds << '\n';
    log.flush();
    std::printf("epoch %3zu  train_loss %.6f  val_mae %.4f  (%.1fs)\n", e.epoch, e.train_loss, e.val_mae, e.seconds);
    std::fflush(stdout);
  });

  Checkpoint ckpt{mc, in.data.normalizer, res.params, {}};
  ckpt.extra = {{"best_epoch", res.best_epoch}, {"best_val_mae", res.best_val_mae}, {"steps", res.steps},
                {"seed", cfg.seed}};
  save_checkpoint(cfg.resolved_checkpoint(), ckpt);
  std::printf("best epoch %zu (val MAE %.4f); checkpoint %s\n", res.best_epoch, res.best_val_mae,
              cfg.resolved_checkpoint().c_str());
  return 0;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("split must be train, val or test (got '" + s + "')");
}

struct ModelRun {
  Loaded in;
  Checkpoint ckpt;
  SpatialContext ctx;
};

ModelRun load_model_run(const RunConfig& cfg) {
  require(cfg.resolved_checkpoint(), "checkpoint");
  ModelRun r{load_inputs(cfg), load_checkpoint(cfg.resolved_checkpoint()), {}};
  const ModelConfig& mc = r.ckpt.config;
  if (mc.n_nodes != r.in.graph.n_nodes) throw InputError("checkpoint was trained for " + std::to_string(mc.n_nodes) + " nodes");
  if (mc.input_len != r.in.data.input_len || mc.output_len != r.in.data.output_len) {
    r.in.data = make_dataset(r.in.readings, cfg.split(), mc.input_len, mc.output_len);
  }
  set_normalizer(r.in.data, r.ckpt.normalizer);
  r.ctx = load_context(cfg, mc.n_nodes);
  return r;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& split_name_arg) {
  const Split split = parse_split(split_name_arg);
  const ModelRun r = load_model_run(cfg);
  const MetricsReport model = evaluate(r.ckpt.params, r.ckpt.config, r.ctx, r.in.data, split);
  const MetricsReport ha = ha_evaluate(r.in.data, split);
  if (model.overall.mae > model.overall.rmse) throw NumericError("MAE exceeds RMSE; metric accumulation is broken");
  const nlohmann::json out = {{"model", to_json(model)}, {"baseline", to_json(ha)}};
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / ("metrics_" + split_name_arg + ".json"), out.dump(2) + "\n");
  std::printf("%s: model MAE %.4f RMSE %.4f MAPE %.2f%% | HA MAE %.4f RMSE %.4f MAPE %.2f%%\n",
              split_name_arg.c_str(), model.overall.mae, model.overall.rmse, 100.0 * model.overall.mape,
              ha.overall.mae, ha.overall.rmse, 100.0 * ha.overall.mape);
  return 0;
}

Tensor mean_attention(const Tensor& probs) {
  const std::size_t len = probs.shape().back();
  const std::size_t blocks = probs.size() / (len * len);
  Tensor out({len, len}, 0.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < len * len; ++i) out[i] += probs[b * len * len + i];
  for (double& v : out.values()) v /= static_cast<double>(blocks);
  return out;
}

int cmd_predict(const RunConfig& cfg, const std::string& split_name_arg, const std::vector<std::size_t>& windows,
                bool dump_attention) {
  const Split split = parse_split(split_name_arg);
  const ModelRun r = load_model_run(cfg);
  const auto& all = r.in.data.windows(split);
  const fs::path dir = fs::path(cfg.out_dir) / "predictions";
  fs::create_directories(dir);
  const std::size_t n = r.ckpt.config.n_nodes, h = r.ckpt.config.output_len;
  for (std::size_t w : windows) {
    if (w >= all.size())
      throw InputError("window " + std::to_string(w) + " out of range: split " + split_name_arg + " has " +
                       std::to_string(all.size()) + " windows");
    const std::size_t start = all[w];
    AttentionCapture cap;
    const Tensor pred = predict(r.ckpt.params, r.ckpt.config, r.ctx, r.in.data, {&start, 1},
                                dump_attention ? &cap : nullptr);
    const std::string stem = split_name_arg + "_w" + std::to_string(w);
    {
      std::ofstream out(dir / ("pred_" + stem + ".csv"));
      write_tensor_csv(out, pred.reshaped({h, n}));
    }
    {
      std::ofstream out(dir / ("truth_" + stem + ".csv"));
      write_tensor_csv(out, raw_targets(r.in.data, {&start, 1}).reshaped({h, n}));
    }
    if (dump_attention) {
      const std::pair<const char*, const std::vector<Tensor>*> branches[] = {
          {"local", &cap.local}, {"global", &cap.global}, {"pivotal", &cap.pivotal}, {"temporal", &cap.temporal}};
      for (const auto& [name, per_layer] : branches)
        for (std::size_t l = 0; l < per_layer->size(); ++l) {
          std::ofstream out(dir / ("attn_" + std::string(name) + "_layer" + std::to_string(l) + "_" + stem + ".csv"));
          write_tensor_csv(out, mean_attention((*per_layer)[l]));
        }
    }
  }
  std::printf("wrote %zu window(s) to %s\n", windows.size(), dir.string().c_str());
  return 0;
}

int cmd_gradcheck(const std::string& fault_op, double tolerance) {
  GradcheckOptions o;
  o.fault_op = fault_op;
  o.tolerance = tolerance;
  const GradcheckReport rep = run_gradcheck(o);
  std::printf("%-28s %8s %14s\n", "parameter", "size", "max_rel_err");
  for (const GroupReport& g : rep.groups)
    std::printf("%-28s %8zu %14.3e%s\n", g.name.c_str(), g.elements, g.max_rel_error,
                g.max_rel_error > rep.tolerance ? "  FAIL" : "");
  const GroupReport& worst = rep.groups[rep.worst];
  std::printf("%zu parameter groups, worst %s[%zu] rel err %.3e (analytic %.9g, numeric %.9g), tolerance %.1e: %s\n",
              rep.groups.size(), worst.name.c_str(), worst.worst_index, worst.max_rel_error, worst.analytic,
              worst.numeric, rep.tolerance, rep.passed ? "PASS" : "FAIL");
  return rep.passed ? 0 : kExitGradFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view spatio-temporal transformer for traffic forecasting"};
  app.require_subcommand(1);

  Flags f_pre, f_train, f_eval, f_pred, f_synth;
  CLI::App* pre = app.add_subcommand("preprocess", "Build view masks, Laplacian basis and normalizer");
  add_run_flags(pre, f_pre);
  CLI::App* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_run_flags(tr, f_train);
  CLI::App* ev = app.add_subcommand("evaluate", "Metrics JSON for a checkpoint on one split");
  add_run_flags(ev, f_eval);
  std::string eval_split = "test";
  ev->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  CLI::App* pr = app.add_subcommand("predict", "Forecast CSVs for chosen windows");
  add_run_flags(pr, f_pred);
  std::string pred_split = "test";
  std::vector<std::size_t> pred_windows{0};
  bool dump_attention = false;
  pr->add_option("--split", pred_split, "train, val or test")->capture_default_str();
  pr->add_option("--window", pred_windows, "window index within the split (repeatable)");
  pr->add_flag("--dump-attention", dump_attention, "also write head- and time-averaged attention maps");
  CLI::App* gc = app.add_subcommand("gradcheck", "Compare backward() with finite differences on a tiny model");
  std::string fault_op;
  double tolerance = 1e-4;
  gc->add_option("--fault-op", fault_op, "scale this op's backward rule (negative control)");
  gc->add_option("--tolerance", tolerance)->capture_default_str();
  CLI::App* sy = app.add_subcommand("synth", "Generate a synthetic graph and readings");
  add_run_flags(sy, f_synth);
  std::size_t synth_nodes = 10, synth_days = 20;
  sy->add_option("--nodes", synth_nodes)->capture_default_str();
  sy->add_option("--days", synth_days)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*pre) return cmd_preprocess(resolve(pre, f_pre));
    if (*tr) return cmd_train(resolve(tr, f_train));
    if (*ev) return cmd_evaluate(resolve(ev, f_eval), eval_split);
    if (*pr) return cmd_predict(resolve(pr, f_pred), pred_split, pred_windows, dump_attention);
    if (*gc) return cmd_gradcheck(fault_op, tolerance);
    if (*sy) return cmd_synth(resolve(sy, f_synth), synth_nodes, synth_days);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitInput;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}

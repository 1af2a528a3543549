// mtdm: batch entry points for preprocessing, training, evaluation and explanation.
//
// Every option can also be given in a key=value config file (--config) or as
// an MTDM_<OPTION> environment variable; command-line flags win over the
// environment, which wins over the config file.

#include <CLI11.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtdm/cache.hpp"
#include "mtdm/evaluation.hpp"
#include "mtdm/training.hpp"

namespace fs = std::filesystem;
using namespace mtdm;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

struct RunConfig {
  std::string data;
  std::string out = "mtdm_out";
  std::string checkpoint;
  std::string regime = "default";
  std::string split = "test";
  std::string valid_regime = "default";
  std::size_t explain = 0;
  bool eval_without_valid_history = false;
  bool recurrent_mode = false;
  TrainConfig train;
};

std::string env_name(const std::string& flag) {
  std::string out = "MTDM_";
  for (char c : flag) out.push_back(c == '-' ? '_' : char(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

// Long option names that can be set through the environment.
std::vector<std::string>& env_options() {
  static std::vector<std::string> names;
  return names;
}

// CLI11 lets a config file shadow environment variables. To get
// flags > environment > config file, environment values are turned into
// leading arguments that later command-line flags override (options take the
// last value given).
std::vector<std::string> with_environment(int argc, char** argv) {
  std::vector<std::string> args{argv[0]};
  for (const std::string& name : env_options()) {
    if (const char* v = std::getenv(env_name(name).c_str())) args.push_back("--" + name + "=" + v);
  }
  args.insert(args.end(), argv + 1, argv + argc);
  return args;
}

template <class T>
CLI::Option* option(CLI::App& app, const std::string& name, T& value, const std::string& help) {
  env_options().push_back(name);
  return app.add_option("--" + name, value, help)->envname(env_name(name))->capture_default_str();
}

CLI::Option* flag(CLI::App& app, const std::string& name, bool& value, const std::string& help) {
  env_options().push_back(name);
  return app.add_flag("--" + name, value, help)->envname(env_name(name));
}

void add_options(CLI::App& app, RunConfig& rc) {
  TrainConfig& t = rc.train;
  ModelConfig& m = t.model;
  LossWeights& w = t.weights;

  option(app, "data", rc.data, "dataset directory (raw text files or preprocessed cache) or cache file");
  option(app, "out", rc.out, "output directory");
  option(app, "checkpoint", rc.checkpoint, "checkpoint to evaluate (default: <out>/checkpoint.mtdm)");
  option(app, "regime", rc.regime, "evaluation history regime: default, w_eval or GT");
  option(app, "split", rc.split, "evaluation split: valid or test");
  option(app, "explain", rc.explain, "dump the top-k candidates of every query (0 = off)");
  flag(app, "eval-without-valid-history", rc.eval_without_valid_history,
       "default regime on test: use training facts only as history");

  option(app, "epochs", t.epochs, "training epochs after the pretraining epoch");
  option(app, "lr", t.adam.lr, "Adam learning rate");
  option(app, "seed", t.seed, "random seed (initialisation and dropout)");
  option(app, "grad-clip", t.grad_clip, "gradient-norm clip");
  option(app, "patience", t.patience, "early-stopping patience in epochs (validation MRR)");
  option(app, "stop-at-valid-mrr", t.stop_at_valid_mrr, "stop once validation MRR reaches this value (0 = off)");
  option(app, "valid-regime", rc.valid_regime, "history regime of the per-epoch validation: default or GT");
  flag(app, "train-on-valid", t.train_on_valid, "also train on validation snapshots (the w_eval regime)");

  option(app, "dim", m.dim, "embedding dimension d");
  option(app, "layers", m.layers, "Res-GCN hops");
  option(app, "rgcn-layers", m.rgcn_layers, "deep-memory RGCN layers");
  option(app, "rgcn-bases", m.rgcn_bases, "RGCN basis count (capped at the relation count)");
  option(app, "history-len", m.history_len, "TREN window length n");
  option(app, "tln-window", m.tln_window, "snapshots merged by the transient encoder");
  option(app, "channels", m.channels, "decoder convolution channels");
  option(app, "kernel-width", m.kernel_width, "decoder kernel width (odd)");
  option(app, "dropout", m.dropout, "decoder dropout during training");

  option(app, "lambda1", w.lambda1, "relation-prediction share of the entity loss");
  option(app, "lambda2", w.lambda2, "deep-memory angle constraint weight");
  option(app, "lambda3", w.lambda3, "control-gate 0-1 constraint weight (pretraining)");
  option(app, "lambda4", w.lambda4, "dissolution weight (0 with --dissolution means 0.01)");
  option(app, "angle", w.initial_angle_deg, "initial similarity angle in degrees");
  option(app, "angle-stride", w.angle_stride_deg, "angle stride in degrees");

  flag(app, "no-dm", m.no_dm, "ablation: no deep memory");
  flag(app, "no-tren", m.no_tren, "ablation: no evolutional encoder");
  flag(app, "no-tln", m.no_tln, "ablation: no transient encoder");
  flag(app, "no-reset-gate", m.no_reset_gate, "ablation: no reset gate");
  flag(app, "recurrent-mode", rc.recurrent_mode, "feed each TREN step's output into the next Res-GCN");
  flag(app, "dissolution", t.dissolution, "dissolution learning (adds lambda4 * L_adv)");
}

void finalize(RunConfig& rc) {
  rc.train.model.tren_mode = rc.recurrent_mode ? TrenMode::kRecurrent : TrenMode::kStandard;
  rc.train.valid_regime = parse_regime(rc.valid_regime);
  rc.train.validate();
  if (rc.data.empty()) throw std::invalid_argument("--data is required");
  if (!fs::exists(rc.data)) throw DataError("dataset path " + rc.data + " does not exist");
}

void write_resolved_config(const CLI::App& app, const fs::path& out_dir, const std::string& command) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / ("resolved_" + command + ".cfg"));
  out << "# resolved configuration of `mtdm " << command << "`; replay with --config\n";
  out << app.config_to_str(true, false);
  if (!out) throw DataError("cannot write resolved config to " + out_dir.string());
}

Model load_model(const RunConfig& rc, const PreparedData& data, const fs::path& ckpt) {
  Model model(rc.train.model, data.num_entities, data.train.relation_space(), rc.train.seed);
  load_checkpoint(model, ckpt);
  return model;
}

int cmd_synth(const RunConfig& rc) {
  write_dataset(make_synthetic_dataset(), rc.out);
  std::cout << "wrote synthetic dataset to " << rc.out << "\n";
  return kOk;
}

int cmd_preprocess(const RunConfig& rc) {
  if (rc.data.empty()) throw std::invalid_argument("--data is required");
  const PreparedData data = prepare(parse_dataset(rc.data));
  const fs::path path = fs::path(rc.out) / kCacheFileName;
  const std::string hash = write_cache(data, path);
  std::ofstream(fs::path(rc.out) / "dataset.sha256") << hash << "  " << kCacheFileName << "\n";
  nlohmann::ordered_json j;
  j["cache"] = path.string();
  j["sha256"] = hash;
  j["entities"] = data.num_entities;
  j["relations"] = data.num_relations;
  j["train_snapshots"] = data.train.size();
  j["valid_snapshots"] = data.valid.size();
  j["test_snapshots"] = data.test.size();
  std::cout << j.dump() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& rc) {
  const PreparedData data = load_prepared(rc.data);
  const fs::path out = rc.out;
  fs::create_directories(out);
  Model model(rc.train.model, data.num_entities, data.train.relation_space(), rc.train.seed);
  std::ofstream log(out / "train_log.jsonl");
  const TrainResult result = train(model, data, rc.train, [&](const EpochRecord& rec) {
    log << rec.to_json() << "\n" << std::flush;
    std::cout << rec.to_json() << "\n" << std::flush;
  });
  const fs::path ckpt = rc.checkpoint.empty() ? out / "checkpoint.mtdm" : fs::path(rc.checkpoint);
  save_checkpoint(model, ckpt);
  nlohmann::ordered_json j;
  j["checkpoint"] = ckpt.string();
  j["best_epoch"] = result.best_epoch;
  j["best_valid_mrr"] = result.best_valid_mrr;
  j["early_stopped"] = result.early_stopped;
  std::cout << j.dump() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& rc, std::size_t explain_k) {
  const PreparedData data = load_prepared(rc.data);
  const fs::path out = rc.out;
  const fs::path ckpt = rc.checkpoint.empty() ? out / "checkpoint.mtdm" : fs::path(rc.checkpoint);
  const Model model = load_model(rc, data, ckpt);
  const Regime regime = parse_regime(rc.regime);
  const EvalSplit split = parse_split(rc.split);
  EvalOptions opts;
  opts.include_valid_history = !rc.eval_without_valid_history;
  opts.explain_top_k = explain_k;
  const EvalResult res = evaluate(model, data, regime, split, opts);

  fs::create_directories(out);
  const std::string tag = rc.regime + "_" + rc.split;
  std::ofstream(out / ("metrics_" + tag + ".json")) << res.report.to_json() << "\n";
  {
    std::ofstream hist(out / ("history_" + tag + ".jsonl"));
    for (const HistoryUsage& h : res.history) {
      nlohmann::ordered_json j;
      j["t_p"] = h.t_p;
      j["history_snapshots"] = h.snapshots;
      j["history_facts"] = h.facts;
      hist << j.dump() << "\n";
    }
  }
  if (explain_k > 0) {
    std::ofstream ex(out / ("explain_" + tag + ".jsonl"));
    for (const Explanation& e : res.explanations) {
      nlohmann::ordered_json j;
      j["s"] = e.query.s;
      j["r"] = e.query.r;
      j["t"] = e.query.t_p;
      j["gold"] = e.query.gold;
      j["rank"] = e.query.rank;
      auto& top = j["predictions"] = nlohmann::json::array();
      for (const Candidate& c : e.top) top.push_back({{"entity", c.entity}, {"probability", c.probability}});
      ex << j.dump() << "\n";
    }
  }
  std::cout << res.report.to_json() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MTDM temporal knowledge graph extrapolation"};
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  RunConfig rc;
  add_options(app, rc);

  auto* synth = app.add_subcommand("synth", "write the synthetic periodic dataset to --out");
  auto* pre = app.add_subcommand("preprocess", "validate, augment and cache --data into --out");
  auto* tr = app.add_subcommand("train", "train on --data and write <out>/checkpoint.mtdm");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint under --regime on --split");
  auto* exp = app.add_subcommand("explain", "eval plus the top candidates of every query (default 5)");
  for (CLI::App* sub : {synth, pre, tr, ev, exp}) sub->fallthrough();

  try {
    const std::vector<std::string> args = with_environment(argc, argv);
    std::vector<const char*> ptrs;
    for (const std::string& a : args) ptrs.push_back(a.c_str());
    app.parse(int(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "synth") return cmd_synth(rc);
    if (command == "preprocess") return cmd_preprocess(rc);
    finalize(rc);
    write_resolved_config(app, rc.out, command);
    if (command == "train") return cmd_train(rc);
    if (command == "eval") return cmd_eval(rc, rc.explain);
    return cmd_eval(rc, rc.explain > 0 ? rc.explain : 5);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

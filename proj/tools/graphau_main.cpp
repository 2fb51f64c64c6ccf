// graphau: operator entry point for the AU-graph pain estimator.
//
// Subcommands: synth, prepare, pretrain-au, train, evaluate, ablate, report.
// Every run writes a resolved-config snapshot into its output directory and
// holds a lock file there for its duration.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <graphau/checkpoint.hpp>
#include <graphau/eval.hpp>
#include <graphau/pipeline.hpp>
#include <graphau/rng.hpp>
#include <graphau/synth.hpp>
#include <graphau/train.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphau;

namespace {

// ---------------------------------------------------------------------------
// Flat dotted-key configuration

using ConfigMap = std::map<std::string, std::string>;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "synth.side",       "synth.grid",        "synth.margin",      "synth.noise",
      "synth.frames",     "synth.subjects",    "synth.seed",        "synth.mixture",
      "model.n_au",       "model.d_au",        "model.channels",    "model.positions",
      "model.proj_dim",   "model.k_neighbors", "model.d_pain",      "model.image_side",
      "model.conv_channels", "model.ablation", "model.backbone",
      "train.lr",         "train.batch_size",  "train.epochs",      "train.beta1",
      "train.beta2",      "train.weight_decay", "train.loss_eps",   "train.seed",
      "train.class_weights", "train.scheme",   "train.val_fraction",
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void set_key(ConfigMap& cfg, const std::string& key, const std::string& value) {
  if (!known_keys().count(key)) throw InvalidConfigError("unknown config key '" + key + "'");
  cfg[key] = value;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  ConfigMap cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void apply_overrides(ConfigMap& cfg, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw InvalidConfigError("override '" + kv + "' is not key=value");
    set_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

// typed accessors with defaults
int get_int(const ConfigMap& c, const std::string& k, int dflt) {
  auto it = c.find(k);
  if (it == c.end()) return dflt;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw InvalidConfigError(k + " must be an integer, got '" + it->second + "'");
  }
}

double get_double(const ConfigMap& c, const std::string& k, double dflt) {
  auto it = c.find(k);
  if (it == c.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw InvalidConfigError(k + " must be a number, got '" + it->second + "'");
  }
}

std::uint64_t get_u64(const ConfigMap& c, const std::string& k, std::uint64_t dflt) {
  auto it = c.find(k);
  if (it == c.end()) return dflt;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw InvalidConfigError(k + " must be a nonnegative integer, got '" + it->second + "'");
  }
}

std::vector<double> get_doubles(const ConfigMap& c, const std::string& k,
                                std::vector<double> dflt) {
  auto it = c.find(k);
  if (it == c.end() || trim(it->second).empty()) return dflt;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(trim(tok)));
    } catch (...) {
      throw InvalidConfigError(k + ": bad list element '" + tok + "'");
    }
  }
  return out;
}

SynthConfig synth_from_config(const ConfigMap& c) {
  SynthConfig s;
  s.side = get_int(c, "synth.side", s.side);
  s.grid = get_int(c, "synth.grid", s.grid);
  s.margin = get_int(c, "synth.margin", s.margin);
  s.noise = get_double(c, "synth.noise", s.noise);
  s.frames = get_int(c, "synth.frames", s.frames);
  s.subjects = get_int(c, "synth.subjects", s.subjects);
  s.seed = get_u64(c, "synth.seed", s.seed);
  auto mix = get_doubles(c, "synth.mixture", {s.mixture[0], s.mixture[1], s.mixture[2]});
  if (mix.size() != 3) throw InvalidConfigError("synth.mixture needs exactly 3 values");
  s.mixture = {mix[0], mix[1], mix[2]};
  return s;
}

ModelConfig model_from_config(const ConfigMap& c) {
  ModelConfig m;
  m.n_au = get_int(c, "model.n_au", m.n_au);
  m.d_au = get_int(c, "model.d_au", m.d_au);
  m.channels = get_int(c, "model.channels", m.channels);
  m.positions = get_int(c, "model.positions", m.positions);
  m.proj_dim = get_int(c, "model.proj_dim", m.proj_dim);
  m.k_neighbors = get_int(c, "model.k_neighbors", m.k_neighbors);
  m.d_pain = get_int(c, "model.d_pain", m.d_pain);
  m.image_side = get_int(c, "model.image_side", m.image_side);
  auto ch = get_doubles(c, "model.conv_channels",
                        {double(m.conv_channels[0]), double(m.conv_channels[1]),
                         double(m.conv_channels[2])});
  if (ch.size() != 3) throw InvalidConfigError("model.conv_channels needs exactly 3 values");
  m.conv_channels = {int(ch[0]), int(ch[1]), int(ch[2])};
  if (auto it = c.find("model.ablation"); it != c.end())
    m.ablation = ablation_from_string(it->second);
  if (auto it = c.find("model.backbone"); it != c.end()) m.backbone = it->second;
  m.validate();
  return m;
}

WeightScheme scheme_from_string(const std::string& s) {
  if (s == "3cat") return WeightScheme::ThreeCat;
  if (s == "4cat") return WeightScheme::FourCat;
  throw InvalidConfigError("scheme must be 3cat or 4cat, got '" + s + "'");
}

TrainConfig train_from_config(const ConfigMap& c, TrainStage stage) {
  TrainConfig t = (stage == TrainStage::AuSft) ? TrainConfig::au_sft_defaults()
                                               : TrainConfig::pain_defaults();
  t.lr = get_double(c, "train.lr", t.lr);
  t.batch_size = get_int(c, "train.batch_size", t.batch_size);
  t.epochs = get_int(c, "train.epochs", t.epochs);
  t.beta1 = get_double(c, "train.beta1", t.beta1);
  t.beta2 = get_double(c, "train.beta2", t.beta2);
  t.weight_decay = get_double(c, "train.weight_decay", t.weight_decay);
  t.loss_eps = get_double(c, "train.loss_eps", t.loss_eps);
  t.seed = get_u64(c, "train.seed", t.seed);
  t.class_weights = get_doubles(c, "train.class_weights", {});
  if (auto it = c.find("train.scheme"); it != c.end()) t.scheme = scheme_from_string(it->second);
  t.val_fraction = get_double(c, "train.val_fraction", t.val_fraction);
  if (t.epochs < 0) throw InvalidConfigError("train.epochs must be >= 0");
  if (t.batch_size < 1) throw InvalidConfigError("train.batch_size must be >= 1");
  return t;
}

// ---------------------------------------------------------------------------
// Output directories, lock files, snapshots

std::string default_out(const std::string& subcommand) {
  const char* root = std::getenv("GRAPHAU_OUT_ROOT");
  return (root ? std::string(root) : std::string(".")) + "/" + subcommand + "-run";
}

class OutDir {
public:
  explicit OutDir(const std::string& path) : path_(path) {
    fs::create_directories(path_);
    lock_ = path_ / ".lock";
    std::error_code ec;
    if (fs::exists(lock_))
      throw InvalidConfigError("output directory " + path + " is locked by another run");
    std::ofstream out(lock_);
    if (!out) throw IoError("cannot create lock file in " + path);
    out << "pid " << ::getpid() << "\n";
  }
  ~OutDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  OutDir(const OutDir&) = delete;
  OutDir& operator=(const OutDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  void write_snapshot(const ConfigMap& cfg) const {
    std::ofstream out(file("resolved.cfg"));
    for (const auto& [k, v] : cfg) out << k << " = " << v << "\n";
  }

  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream out(file(name), std::ios::binary);
    if (!out) throw IoError("cannot write " + file(name));
    out << text;
  }

private:
  fs::path path_;
  fs::path lock_;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> names_for(int categories) {
  return category_names(categories == 3 ? WeightScheme::ThreeCat : WeightScheme::FourCat);
}

void write_eval_artifacts(const OutDir& out, const EvalResult& r, bool heatmap) {
  out.write_text("eval.json", eval_result_to_json(r));
  const auto names = names_for(r.pain.cm.categories);
  std::string tables = pain_metrics_table(r.pain, names);
  tables += "\n" + render_confusion_log10(r.pain.cm, names);
  if (!r.per_au.empty()) tables += "\n" + au_metrics_table(r.per_au);
  out.write_text("report.txt", tables);
  if (heatmap) {
    const Image img = render_confusion_heatmap(r.pain.cm);
    const int side = static_cast<int>(std::lround(std::sqrt(double(img.rows()))));
    write_ppm(out.file("confusion.ppm"), img, side);
  }
  std::cout << tables;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

int cmd_synth(const ConfigMap& cfg, const std::string& out_path, const std::string& name) {
  OutDir out(out_path);
  out.write_snapshot(cfg);
  auto manifest = synth_generate(synth_from_config(cfg));
  save_manifest(manifest, out.file(name));
  const std::string jsonl = manifest_to_jsonl(manifest);
  std::cout << "wrote " << manifest.records.size() << " frames to " << out.file(name)
            << " (hash " << std::hex << fnv1a64(jsonl) << std::dec << ")\n";
  return 0;
}

int cmd_prepare(const std::string& in_path, const std::string& out_path, double keep,
                double split_fraction, bool framewise, const std::string& relabel_from,
                const std::vector<int>& overlap, const std::vector<int>& fill,
                std::uint64_t seed) {
  OutDir out(out_path);
  DatasetManifest manifest = load_manifest(in_path);
  const std::size_t before = manifest.records.size();

  if (!relabel_from.empty()) {
    json preds = json::parse(read_text(relabel_from));
    std::map<std::string, AUOccurrenceMap> predicted;
    for (auto it = preds.begin(); it != preds.end(); ++it) {
      AUOccurrenceMap occ;
      for (auto au = it.value().begin(); au != it.value().end(); ++au)
        occ[std::stoi(au.key())] = au.value().get<int>();
      predicted[it.key()] = occ;
    }
    manifest = merge_hybrid(manifest, predicted, overlap, fill);
    std::cout << "relabeled " << fill.size() << " AU column(s) from " << relabel_from << "\n";
  }
  if (keep >= 0) {
    manifest = undersample(manifest, keep, seed);
    std::cout << "undersampled " << before << " -> " << manifest.records.size()
              << " frames (keep " << keep << ", seed " << seed << ")\n";
  }
  manifest.provenance["prepared"] = "from " + in_path;

  if (split_fraction > 0) {
    auto split = framewise ? split_framewise(manifest, split_fraction, seed)
                           : split_subject_disjoint(manifest, split_fraction, seed);
    save_manifest(split.train, out.file("train.jsonl"));
    save_manifest(split.test, out.file("test.jsonl"));
    std::cout << "split " << split.train.records.size() << " train / "
              << split.test.records.size() << " test frames\n";
  } else {
    save_manifest(manifest, out.file("manifest.jsonl"));
    std::cout << "wrote " << manifest.records.size() << " frames\n";
  }
  return 0;
}

int cmd_pretrain_au(const ConfigMap& cfg, const std::string& data, const std::string& out_path) {
  OutDir out(out_path);
  out.write_snapshot(cfg);
  auto model_cfg = model_from_config(cfg);
  auto train_cfg = train_from_config(cfg, TrainStage::AuSft);
  auto manifest = load_manifest(data);
  std::ofstream log(out.file("metrics.jsonl"));
  auto ckpt = pretrain_au(init_params<float>(model_cfg, train_cfg.seed), model_cfg, manifest,
                          train_cfg, [&](const std::string& line) {
                            log << line << "\n";
                            std::cout << line << "\n";
                          });
  save_checkpoint(ckpt, out.file("checkpoint.bin"));
  std::cout << "saved " << out.file("checkpoint.bin") << "\n";
  return 0;
}

int cmd_train(const ConfigMap& cfg, const std::string& data, const std::string& out_path,
              const std::string& init_path) {
  OutDir out(out_path);
  out.write_snapshot(cfg);
  auto model_cfg = model_from_config(cfg);
  auto train_cfg = train_from_config(cfg, TrainStage::Pain);
  auto manifest = load_manifest(data);
  Checkpoint init;
  const Checkpoint* init_ptr = nullptr;
  if (!init_path.empty()) {
    init = load_checkpoint(init_path);
    init_ptr = &init;
  }
  std::ofstream log(out.file("metrics.jsonl"));
  auto ckpt = train_pain(init_params<float>(model_cfg, train_cfg.seed), model_cfg, manifest,
                         train_cfg, init_ptr, [&](const std::string& line) {
                           log << line << "\n";
                           std::cout << line << "\n";
                         });
  save_checkpoint(ckpt, out.file("checkpoint.bin"));
  std::cout << "saved " << out.file("checkpoint.bin") << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data,
                 const std::string& out_path, const std::string& scheme_flag, bool heatmap) {
  OutDir out(out_path);
  auto ckpt = load_checkpoint(ckpt_path);
  const WeightScheme scheme =
      scheme_flag.empty() ? (ckpt.config.d_pain == 3 ? WeightScheme::ThreeCat
                                                     : WeightScheme::FourCat)
                          : scheme_from_string(scheme_flag);
  auto manifest = load_manifest(data);
  auto result = evaluate_model(ckpt.params, ckpt.config, manifest, scheme);
  write_eval_artifacts(out, result, heatmap);
  return 0;
}

int cmd_ablate(const ConfigMap& cfg, const std::string& data, const std::string& test_data,
               const std::string& out_path) {
  OutDir out(out_path);
  out.write_snapshot(cfg);
  auto train_cfg = train_from_config(cfg, TrainStage::Pain);
  DatasetManifest train_set = load_manifest(data), test_set;
  if (!test_data.empty()) {
    test_set = load_manifest(test_data);
  } else {
    auto split = split_subject_disjoint(train_set, 0.2, train_cfg.seed);
    train_set = std::move(split.train);
    test_set = std::move(split.test);
  }

  std::vector<std::pair<std::string, MetricsReport>> rows;
  json all;
  for (auto mode : {AblationMode::Full, AblationMode::NoGraphRep, AblationMode::NoGnn,
                    AblationMode::BackboneOnly}) {
    auto model_cfg = model_from_config(cfg);
    model_cfg.ablation = mode;  // identical seed and data for every wiring
    auto ckpt = train_pain(init_params<float>(model_cfg, train_cfg.seed), model_cfg, train_set,
                           train_cfg);
    auto result = evaluate_model(ckpt.params, model_cfg, test_set, train_cfg.scheme);
    rows.emplace_back(to_string(mode), result.pain);
    all[to_string(mode)] = json::parse(eval_result_to_json(result));
    std::cout << to_string(mode) << ": macro-F1 " << result.pain.macro_f1 << ", accuracy "
              << result.pain.accuracy << "\n";
  }
  const std::string table = ablation_table(rows);
  out.write_text("ablation.txt", table);
  out.write_text("ablation.json", all.dump(2) + "\n");
  std::cout << table;
  return 0;
}

int cmd_report(const std::string& eval_path, const std::string& out_path, bool heatmap) {
  OutDir out(out_path);
  auto result = eval_result_from_json(read_text(eval_path));
  write_eval_artifacts(out, result, heatmap);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AU-graph pain intensity estimation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, name = "manifest.jsonl";
  std::vector<std::string> overrides;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--set", overrides, "dotted-key override, e.g. train.lr=1e-3");
    sub->add_option("--out", out_path, "output directory (default under GRAPHAU_OUT_ROOT)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_config_flags(synth);
  synth->add_option("--name", name, "manifest file name");

  auto* prepare = app.add_subcommand("prepare", "derive manifests: relabel/undersample/split");
  double keep = -1, split_fraction = 0;
  bool framewise = false, heatmap = false;
  std::string relabel_from, init_path, ckpt_path, scheme_flag, test_data, eval_path;
  std::vector<int> overlap, fill;
  std::uint64_t prep_seed = 1;
  prepare->add_option("--in", data_path, "input manifest")->required();
  prepare->add_option("--out", out_path, "output directory");
  prepare->add_option("--undersample-keep", keep, "keep rate for inactive PSPI=0 frames");
  prepare->add_option("--split", split_fraction, "test fraction for a train/test split");
  prepare->add_flag("--framewise", framewise, "frame-wise split instead of subject-disjoint");
  prepare->add_option("--relabel-from", relabel_from, "JSON file of predicted AU occurrences");
  prepare->add_option("--overlap", overlap, "AU codes keeping their original bits");
  prepare->add_option("--fill", fill, "AU codes taking predicted bits");
  prepare->add_option("--seed", prep_seed, "seed for undersampling/splitting");

  auto* pretrain = app.add_subcommand("pretrain-au", "stage 1: AU-occurrence pretraining");
  add_config_flags(pretrain);
  pretrain->add_option("--data", data_path, "training manifest")->required();

  auto* train = app.add_subcommand("train", "stage 2: pain-category training");
  add_config_flags(train);
  train->add_option("--data", data_path, "training manifest")->required();
  train->add_option("--init", init_path, "stage-1 checkpoint to start from");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest");
  evaluate->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  evaluate->add_option("--data", data_path, "evaluation manifest")->required();
  evaluate->add_option("--out", out_path, "output directory");
  evaluate->add_option("--scheme", scheme_flag, "3cat or 4cat (default: from checkpoint)");
  evaluate->add_flag("--heatmap", heatmap, "also write a confusion heatmap image");

  auto* ablate = app.add_subcommand("ablate", "train/evaluate all four ablation wirings");
  add_config_flags(ablate);
  ablate->add_option("--data", data_path, "training manifest")->required();
  ablate->add_option("--test", test_data, "held-out manifest (default: subject split)");

  auto* report = app.add_subcommand("report", "re-render report artifacts from eval.json");
  report->add_option("--in", eval_path, "eval.json produced by evaluate")->required();
  report->add_option("--out", out_path, "output directory");
  report->add_flag("--heatmap", heatmap, "also write a confusion heatmap image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version are successes; anything else is usage
  }

  try {
    ConfigMap cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    apply_overrides(cfg, overrides);

    if (synth->parsed()) {
      if (out_path.empty()) out_path = default_out("synth");
      return cmd_synth(cfg, out_path, name);
    }
    if (prepare->parsed()) {
      if (out_path.empty()) out_path = default_out("prepare");
      return cmd_prepare(data_path, out_path, keep, split_fraction, framewise, relabel_from,
                         overlap, fill, prep_seed);
    }
    if (pretrain->parsed()) {
      if (out_path.empty()) out_path = default_out("pretrain-au");
      return cmd_pretrain_au(cfg, data_path, out_path);
    }
    if (train->parsed()) {
      if (out_path.empty()) out_path = default_out("train");
      return cmd_train(cfg, data_path, out_path, init_path);
    }
    if (evaluate->parsed()) {
      if (out_path.empty()) out_path = default_out("evaluate");
      return cmd_evaluate(ckpt_path, data_path, out_path, scheme_flag, heatmap);
    }
    if (ablate->parsed()) {
      if (out_path.empty()) out_path = default_out("ablate");
      return cmd_ablate(cfg, data_path, test_data, out_path);
    }
    if (report->parsed()) {
      if (out_path.empty()) out_path = default_out("report");
      return cmd_report(eval_path, out_path, heatmap);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

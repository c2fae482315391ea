#include "sou/cli.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sou/error.hpp"
#include "sou/harness.hpp"

namespace sou {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIoError = 2;

struct ValidationFailed {
  std::string message;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << text;
}

std::map<std::string, ClipLabels> labels_by_id(const fs::path& manifest) {
  std::map<std::string, ClipLabels> m;
  for (const auto& row : read_manifest(manifest)) m[row.recording_id] = row.labels;
  return m;
}

std::vector<ClipLabels> labels_for(const std::vector<FeatureTensor>& f,
                                   const std::map<std::string, ClipLabels>& m) {
  std::vector<ClipLabels> out;
  for (const auto& t : f) {
    const auto it = m.find(t.recording_id);
    if (it == m.end()) throw ConfigError("no manifest row for recording '" + t.recording_id + "'");
    out.push_back(it->second);
  }
  return out;
}

Role parse_role(const std::string& s) {
  if (s == "gender") return Role::gender;
  if (s == "diagnosis") return Role::diagnosis;
  throw ConfigError("--role must be gender or diagnosis");
}

struct Options {
  std::string file, ledger, config, out, manifest, data, role, model, method = "pgd";
  std::string gender_model, diagnosis_model, perturbed, scenario, run_dir, format = "text";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size;
  double eps = AttackConfig{}.epsilon;
  double alpha = AttackConfig{}.alpha;
  std::size_t iters = AttackConfig{}.iterations;
  bool random_start = false;
};

int cmd_scenario_validate(const Options& o, std::ostream& out) {
  const ScenarioOfUse s = load_scenario(o.file);
  ValidationReport r = validate_scenario(s);
  if (!o.ledger.empty()) {
    const ValidationReport l = check_ledger(s, parse_ledger(slurp(o.ledger)));
    r.findings.insert(r.findings.end(), l.findings.begin(), l.findings.end());
    r.complete = r.complete && l.complete;
  }
  out << s.id << ": " << to_string(r);
  if (!to_string(r).empty() && to_string(r).back() != '\n') out << "\n";
  return r.complete ? kOk : kInvalid;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SynthConfig cfg = load_synth_config(o.config);
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
    cfg.base_dir.clear();
  }
  if (o.seed) cfg.seed = *o.seed;
  const auto res = generate_synthetic_corpus(cfg);
  out << "wrote " << res.wavs.size() << " recordings; manifest " << res.manifest.string() << "\n";
  return kOk;
}

int cmd_prepare(const Options& o, std::ostream& out) {
  FeaturePipeline pipe;
  if (!o.config.empty()) {
    const auto cfg = load_experiment_config(o.config);
    pipe = {cfg.chunk_seconds, cfg.overlap, cfg.stft, cfg.mel};
  }
  const fs::path manifest(o.manifest);
  const auto rows = read_manifest(manifest);
  const auto data = prepare_data(rows, manifest.parent_path(), pipe, &out);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_feature_store(dir / "train_features.soum", data.train.features);
  write_feature_store(dir / "test_features.soum", data.test.features);
  write_standardizer(dir / "standardizer.soum", data.standardizer);
  write_manifest(dir / "manifest.csv", rows);
  out << "prepared " << data.train.features.size() << " train and " << data.test.features.size()
      << " test chunks in " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Role role = parse_role(o.role);
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = load_experiment_config(o.config);
  const fs::path dir(o.data);
  const auto feats = read_feature_store(dir / "train_features.soum");
  if (feats.empty()) throw ConfigError("no training features in " + dir.string());
  const auto labels = labels_for(feats, labels_by_id(dir / "manifest.csv"));
  const std::uint64_t seed = o.seed.value_or(cfg.seed);
  nn::TrainConfig tc = role == Role::gender ? cfg.gender_train : cfg.diagnosis_train;
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (tc.batch_size == 0) throw ConfigError("--batch-size must be >= 1");
  nn::ModelGraph model;
  if (role == Role::gender) {
    auto arch = cfg.gender_arch;
    arch.height = feats.front().n_mels();
    arch.width = feats.front().n_frames();
    model = nn::make_gender_model(arch, derive_seed(seed, 1));
    tc.seed = derive_seed(seed, 2);
  } else {
    auto arch = cfg.diagnosis_arch;
    arch.height = feats.front().n_mels();
    arch.width = feats.front().n_frames();
    model = nn::make_diagnosis_model(arch, derive_seed(seed, 3));
    tc.seed = derive_seed(seed, 4);
  }
  const auto hist = nn::train(model, make_dataset(feats, labels, role), tc);
  const fs::path dest = o.out.empty() ? dir / (o.role + ".soum") : fs::path(o.out);
  nn::save_model(model, dest);
  out << "trained " << o.role << " classifier";
  if (!hist.epoch_loss.empty()) out << " (final loss " << hist.epoch_loss.back() << ")";
  out << "; wrote " << dest.string() << "\n";
  return kOk;
}

AttackConfig attack_from(const Options& o) {
  AttackConfig a;
  a.epsilon = o.eps;
  a.alpha = o.alpha;
  a.iterations = o.iters;
  if (o.method == "pgd") a.method = AttackMethod::pgd;
  else if (o.method == "fgsm") a.method = AttackMethod::fgsm;
  else throw ConfigError("--method must be pgd or fgsm");
  a.random_start = o.random_start;
  a.seed = o.seed.value_or(0);
  a.validate();
  return a;
}

int cmd_attack(const Options& o, std::ostream& out) {
  const AttackConfig acfg = attack_from(o);
  const nn::ModelGraph model = nn::load_model(o.model);
  const fs::path dir(o.data);
  const auto feats = read_feature_store(dir / "test_features.soum");
  const auto labels = labels_for(feats, labels_by_id(dir / "manifest.csv"));
  std::vector<LabeledFeature> items;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    items.push_back({feats[i], class_index(Role::gender, labels[i])});
  }
  std::vector<FeatureTensor> adv;
  for (auto& r : protect_dataset(model, items, acfg)) adv.push_back(std::move(r.x_adv));
  const fs::path dest = o.out.empty() ? dir / "test_perturbed.soum" : fs::path(o.out);
  write_feature_store(dest, adv);

  ExperimentConfig echo;
  echo.attack = acfg;
  const Json full = Json::parse(config_to_json(echo));
  Json j = Json::object();
  j["attack"] = full.at("attack");
  j["seed"] = acfg.seed;
  dump(dest.parent_path() / "attack.json", j.dump(2) + "\n");
  out << "perturbed " << adv.size() << " chunks; wrote " << dest.string() << "\n";
  return kOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const fs::path dir(o.data);
  const fs::path perturbed_path = o.perturbed.empty() ? dir / "test_perturbed.soum" : fs::path(o.perturbed);
  const auto feats = read_feature_store(dir / "test_features.soum");
  const auto perturbed = read_feature_store(perturbed_path);
  const auto by_id = labels_by_id(dir / "manifest.csv");
  const auto labels = labels_for(feats, by_id);
  if (labels_for(perturbed, by_id) != labels) {
    throw ConfigError("perturbed features do not match the test features");
  }
  const auto gender = nn::load_model(o.gender_model);
  const auto diagnosis = nn::load_model(o.diagnosis_model);

  RunReport r;
  r.toolkit_version = toolkit_version();
  r.seed = o.seed.value_or(0);
  if (!o.scenario.empty()) {
    const auto s = load_scenario(o.scenario);
    r.scenario_id = s.id;
    r.ledger = check_ledger(s, planned_ledger(r.config.resources));
    r.config.scenario_path = o.scenario;
  }
  const fs::path attack_json = perturbed_path.parent_path() / "attack.json";
  if (fs::exists(attack_json)) {
    Json cfg = Json::parse(config_to_json(r.config));
    cfg["attack"] = Json::parse(slurp(attack_json)).at("attack");
    r.config = parse_experiment_config(cfg.dump());
  }
  r.config.manifest_path = (dir / "manifest.csv").string();
  r.config.output_dir = o.out.empty() ? dir.string() : o.out;
  const auto g0 = evaluate_classifier(gender, feats, labels, Role::gender);
  const auto g1 = evaluate_classifier(gender, perturbed, labels, Role::gender);
  const auto d0 = evaluate_classifier(diagnosis, feats, labels, Role::diagnosis);
  const auto d1 = evaluate_classifier(diagnosis, perturbed, labels, Role::diagnosis);
  r.gender = {{g0.chunk, g1.chunk}, {g0.recording, g1.recording}};
  r.diagnosis = {{d0.chunk, d1.chunk}, {d0.recording, d1.recording}};
  r.utility_drop = d0.chunk.acc - d1.chunk.acc;
  r.utility_drop_recording = d0.recording.acc - d1.recording.acc;

  const fs::path dest(r.config.output_dir);
  fs::create_directories(dest);
  dump(dest / "report.json", emit_report(r, ReportFormat::json));
  const std::string text = emit_report(r, ReportFormat::text);
  dump(dest / "report.txt", text);
  out << text;
  return r.ledger.complete ? kOk : kInvalid;
}

int cmd_run(const Options& o, std::ostream& out) {
  if (!fs::exists(o.config)) throw IoError("config file not found: '" + o.config + "'");
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = fs::absolute(o.out).string();
  const RunReport r = run_experiment(cfg, &out);
  out << emit_report(r, ReportFormat::text);
  return r.ledger.complete ? kOk : kInvalid;
}

int cmd_report(const Options& o, std::ostream& out) {
  const RunReport r = parse_report_json(slurp(fs::path(o.run_dir) / "report.json"));
  if (o.format == "json") out << emit_report(r, ReportFormat::json);
  else if (o.format == "text") out << emit_report(r, ReportFormat::text);
  else throw ConfigError("--format must be text or json");
  return kOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scenario-of-use privacy evaluation toolkit", "sou"};
  app.require_subcommand(1);
  app.set_version_flag("--version", toolkit_version());
  Options o;

  auto* scenario = app.add_subcommand("scenario", "Scenario files");
  scenario->require_subcommand(1);
  auto* validate = scenario->add_subcommand("validate", "Check a scenario for completeness");
  validate->add_option("file", o.file, "Scenario JSON")->required();
  validate->add_option("--ledger", o.ledger, "Run ledger JSON to check against the scenario");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  synth->add_option("--config", o.config, "Synth config JSON")->required();
  synth->add_option("--out", o.out, "Output directory");
  synth->add_option("--seed", o.seed, "Override the corpus seed");

  auto* prepare = app.add_subcommand("prepare", "Featurize a manifest");
  prepare->add_option("--manifest", o.manifest, "Dataset CSV")->required();
  prepare->add_option("--out", o.out, "Output directory")->required();
  prepare->add_option("--config", o.config, "Experiment config for feature settings");

  auto* train = app.add_subcommand("train", "Train a classifier on prepared features");
  train->add_option("--role", o.role, "gender or diagnosis")->required();
  train->add_option("--data", o.data, "Prepared data directory")->required();
  train->add_option("--out", o.out, "Model file");
  train->add_option("--config", o.config, "Experiment config for training settings");
  train->add_option("--epochs", o.epochs);
  train->add_option("--batch-size", o.batch_size);
  train->add_option("--seed", o.seed);

  auto* attack = app.add_subcommand("attack", "Perturb prepared test features");
  attack->add_option("--model", o.model, "Gender model file")->required();
  attack->add_option("--data", o.data, "Prepared data directory")->required();
  attack->add_option("--eps", o.eps, "L-infinity bound");
  attack->add_option("--alpha", o.alpha, "Step size");
  attack->add_option("--iters", o.iters, "Iterations");
  attack->add_option("--method", o.method, "pgd or fgsm");
  attack->add_flag("--random-start", o.random_start);
  attack->add_option("--seed", o.seed);
  attack->add_option("--out", o.out, "Perturbed feature store");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate both classifiers");
  evaluate->add_option("--data", o.data, "Prepared data directory")->required();
  evaluate->add_option("--gender-model", o.gender_model)->required();
  evaluate->add_option("--diagnosis-model", o.diagnosis_model)->required();
  evaluate->add_option("--perturbed", o.perturbed, "Perturbed feature store");
  evaluate->add_option("--scenario", o.scenario, "Scenario to check the pipeline against");
  evaluate->add_option("--out", o.out, "Report directory");
  evaluate->add_option("--seed", o.seed);

  auto* run = app.add_subcommand("run", "Run the full experiment");
  run->add_option("--config", o.config, "Experiment config JSON")->required();
  run->add_option("--seed", o.seed, "Override the experiment seed");
  run->add_option("--out", o.out, "Override the output directory");

  auto* report = app.add_subcommand("report", "Print a finished run's report");
  report->add_option("--run", o.run_dir, "Run output directory")->required();
  report->add_option("--format", o.format, "text or json");

  std::vector<std::string> argv_store{"sou"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << toolkit_version() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = &app;
    for (auto* s : app.get_subcommands()) sub = s;
    err << sub->help();
    return kIoError;
  }

  try {
    if (validate->parsed()) return cmd_scenario_validate(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (prepare->parsed()) return cmd_prepare(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (attack->parsed()) return cmd_attack(o, out);
    if (evaluate->parsed()) return cmd_evaluate(o, out);
    if (run->parsed()) return cmd_run(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const LedgerViolation& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  err << app.help();
  return kIoError;
}

}  // namespace sou

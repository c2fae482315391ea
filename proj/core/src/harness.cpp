#include "sou/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>

#include "sou/container.hpp"
#include "sou/error.hpp"

namespace sou {
namespace {

namespace fs = std::filesystem;

void note(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Only steps that appear in the checked plan may run.
class LedgerGuard {
 public:
  explicit LedgerGuard(RunLedger plan) : plan_(std::move(plan)) {}

  void use(Party party, const std::string& id, Phase phase) {
    const LedgerEntry e{party, id, phase};
    if (std::find(plan_.entries.begin(), plan_.entries.end(), e) == plan_.entries.end()) {
      throw LedgerViolation("resource use not in the checked plan: " + std::string(to_string(party)) +
                            " / " + id + " / " + std::string(to_string(phase)));
    }
    used_.entries.push_back(e);
  }

  const RunLedger& used() const { return used_; }

 private:
  RunLedger plan_;
  RunLedger used_;
};

void check_split(const PreparedSplit& s, Split expected, const char* stage) {
  for (const auto& l : s.labels) {
    if (l.split != expected) {
      throw ConfigError(std::string("leakage guard: ") + stage + " received a " + to_string(l.split) +
                        "-split chunk");
    }
  }
}

}  // namespace

std::string toolkit_version() { return SOU_VERSION; }

fs::path ExperimentConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

PreparedData prepare_data(const std::vector<ManifestRow>& rows, const fs::path& audio_base,
                          const FeaturePipeline& pipe, std::ostream* log) {
  PreparedData out;
  std::vector<FeatureTensor> raw_train, raw_test;
  std::optional<StftConfig> stft = pipe.stft;
  for (const auto& row : rows) {
    const fs::path p = fs::path(row.path).is_absolute() ? fs::path(row.path) : audio_base / row.path;
    if (!fs::exists(p)) throw IoError("missing audio file '" + p.string() + "'");
    AudioClip clip = load_wav(p);
    clip.recording_id = row.recording_id;
    clip.labels = row.labels;
    if (out.sample_rate == 0) {
      out.sample_rate = clip.sample_rate;
      if (clip.sample_rate != 44100) {
        note(log, "warning: sample rate " + std::to_string(clip.sample_rate) +
                      " Hz; chunk and window lengths follow the actual rate");
      }
      if (!stft) stft = StftConfig::for_rate(clip.sample_rate);
    } else if (clip.sample_rate != out.sample_rate) {
      throw ConfigError("recording '" + row.recording_id + "' has sample rate " +
                        std::to_string(clip.sample_rate) + ", expected " +
                        std::to_string(out.sample_rate));
    }
    clip = normalize_amplitude(std::move(clip));
    if (clip.silent) note(log, "warning: recording '" + row.recording_id + "' is silent");
    auto& dest = row.labels.split == Split::train ? raw_train : raw_test;
    auto& split = row.labels.split == Split::train ? out.train : out.test;
    for (const auto& chunk : segment(clip, pipe.chunk_seconds, pipe.overlap)) {
      dest.push_back(featurize_chunk(chunk, clip.sample_rate, *stft, pipe.mel));
      split.labels.push_back(row.labels);
    }
  }
  if (raw_train.empty()) throw ConfigError("manifest has no training recordings");
  out.stft = *stft;
  out.standardizer = fit_standardizer(raw_train, "train");
  for (const auto& f : raw_train) out.train.features.push_back(apply_standardizer(f, out.standardizer));
  for (const auto& f : raw_test) out.test.features.push_back(apply_standardizer(f, out.standardizer));
  return out;
}

void write_feature_store(const fs::path& path, const std::vector<FeatureTensor>& features) {
  Container c;
  for (const auto& f : features) {
    if (f.recording_id.find('/') != std::string::npos) {
      throw ConfigError("recording id '" + f.recording_id + "' contains '/'");
    }
    c.add("chunk/" + f.recording_id + "/" + std::to_string(f.chunk_index), DType::f32,
          {static_cast<std::uint32_t>(f.n_mels()), static_cast<std::uint32_t>(f.n_frames())},
          f.values.values);
  }
  const bool standardized =
      std::all_of(features.begin(), features.end(), [](const auto& f) { return f.standardized; });
  c.add_scalar("meta/standardized", standardized && !features.empty() ? 1.0 : 0.0);
  c.write(path);
}

std::vector<FeatureTensor> read_feature_store(const fs::path& path) {
  const Container c = Container::read(path);
  const bool standardized = c.at("meta/standardized").values.at(0) != 0.0;
  std::vector<FeatureTensor> out;
  for (const auto& e : c.entries()) {
    if (e.name.rfind("chunk/", 0) != 0) continue;
    const auto slash = e.name.rfind('/');
    FeatureTensor f;
    f.recording_id = e.name.substr(6, slash - 6);
    const auto idx = e.name.substr(slash + 1);
    const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), f.chunk_index);
    if (ec != std::errc{} || e.dims.size() != 2) {
      throw IoError("feature store: malformed entry '" + e.name + "'");
    }
    f.values = Matrix(e.dims[0], e.dims[1]);
    f.values.values = e.values;
    f.standardized = standardized;
    out.push_back(std::move(f));
  }
  return out;
}

void write_standardizer(const fs::path& path, const Standardizer& s) {
  Container c;
  const auto n = static_cast<std::uint32_t>(s.mean.size());
  c.add("mean", DType::f64, {n}, s.mean);
  c.add("std", DType::f64, {n}, s.std);
  c.add_scalar("eps", s.eps);
  c.add("fitted_on/" + s.fitted_on, DType::f64, {0}, {});
  c.write(path);
}

Standardizer read_standardizer(const fs::path& path) {
  const Container c = Container::read(path);
  Standardizer s;
  s.mean = c.at("mean").values;
  s.std = c.at("std").values;
  s.eps = c.at("eps").values.at(0);
  s.fitted_on.clear();
  for (const auto& e : c.entries()) {
    if (e.name.rfind("fitted_on/", 0) == 0) s.fitted_on = e.name.substr(10);
  }
  if (s.mean.size() != s.std.size()) throw IoError("standardizer: mean/std length mismatch");
  return s;
}

std::vector<std::string> class_names(Role role) {
  return role == Role::gender ? std::vector<std::string>{"M", "F"}
                              : std::vector<std::string>{"HC", "PD"};
}

std::size_t positive_class(Role role) { return role == Role::gender ? 0 : 1; }

int class_index(Role role, const ClipLabels& l) {
  if (role == Role::gender) return l.gender == Gender::M ? 0 : 1;
  return l.diagnosis == Diagnosis::HC ? 0 : 1;
}

nn::Dataset make_dataset(const std::vector<FeatureTensor>& features,
                         const std::vector<ClipLabels>& labels, Role role) {
  if (features.size() != labels.size()) throw ShapeError("make_dataset: feature/label count mismatch");
  if (features.empty()) throw ConfigError("make_dataset: no features");
  const std::size_t h = features.front().n_mels(), w = features.front().n_frames();
  nn::Dataset d;
  d.inputs = nn::Tensor({features.size(), 1, h, w});
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].n_mels() != h || features[i].n_frames() != w) {
      throw ShapeError("make_dataset: feature tensors differ in shape");
    }
    std::copy(features[i].values.values.begin(), features[i].values.values.end(),
              d.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * h * w));
    d.labels.push_back(class_index(role, labels[i]));
  }
  return d;
}

GranularRows evaluate_classifier(const nn::ModelGraph& model, const std::vector<FeatureTensor>& x,
                                 const std::vector<ClipLabels>& labels, Role role) {
  const auto data = make_dataset(x, labels, role);
  const nn::Tensor proba = nn::predict_proba(model, data.inputs);
  const std::size_t k = proba.dim(1);
  const std::size_t pos = positive_class(role);
  const auto classes = class_names(role);

  std::vector<double> scores;
  std::vector<int> pred;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> by_recording;
  std::map<std::string, int> truth_of;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::vector<double> p(proba.data.begin() + static_cast<std::ptrdiff_t>(i * k),
                                proba.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    scores.push_back(p[pos]);
    pred.push_back(static_cast<int>(argmax(p)));
    auto [it, inserted] = by_recording.try_emplace(x[i].recording_id);
    if (inserted) {
      order.push_back(x[i].recording_id);
      truth_of[x[i].recording_id] = data.labels[i];
    }
    it->second.push_back(p);
  }

  GranularRows out;
  out.chunk = metric_row(scores, pred, data.labels, classes, pos);
  std::vector<double> rscores;
  std::vector<int> rpred, rtruth;
  for (const auto& id : order) {
    const auto mean = aggregate_recording(by_recording.at(id));
    rscores.push_back(mean[pos]);
    rpred.push_back(static_cast<int>(argmax(mean)));
    rtruth.push_back(truth_of.at(id));
  }
  out.recording = metric_row(rscores, rpred, rtruth, classes, pos);
  return out;
}

RunLedger planned_ledger(const ResourceIds& ids) {
  RunLedger l;
  l.record(Party::attacker, ids.training_data, Phase::train);
  l.record(Party::attacker, ids.gender_classifier, Phase::train);
  l.record(Party::protector, ids.target_data, Phase::protect);
  l.record(Party::protector, ids.gender_classifier, Phase::protect);
  l.record(Party::attacker, ids.target_data, Phase::attack);
  l.record(Party::attacker, ids.gender_classifier, Phase::attack);
  l.record(Party::protector, ids.diagnosis_classifier, Phase::evaluate);
  return l;
}

RunReport run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  const fs::path scenario_path = cfg.resolve(cfg.scenario_path);
  const fs::path manifest_path = cfg.resolve(cfg.manifest_path);
  const fs::path out_dir = cfg.resolve(cfg.output_dir);
  if (!fs::exists(scenario_path)) throw IoError("scenario file not found: '" + scenario_path.string() + "'");
  if (!fs::exists(manifest_path)) throw IoError("manifest not found: '" + manifest_path.string() + "'");
  cfg.attack.validate();

  const ScenarioOfUse scenario = load_scenario(scenario_path.string());
  const auto validation = validate_scenario(scenario);
  if (!validation.complete) {
    throw LedgerViolation("scenario '" + scenario.id + "' is incomplete:\n" + to_string(validation));
  }
  const RunLedger plan = planned_ledger(cfg.resources);
  const auto verdict = check_ledger(scenario, plan);
  if (!verdict.complete) {
    throw LedgerViolation("run plan violates scenario '" + scenario.id + "':\n" + to_string(verdict));
  }
  LedgerGuard guard(plan);
  fs::create_directories(out_dir);
  write_text(out_dir / "ledger.json", serialize_ledger(plan));

  note(log, "preparing features from " + manifest_path.string());
  const auto rows = read_manifest(manifest_path);
  FeaturePipeline pipe{cfg.chunk_seconds, cfg.overlap, cfg.stft, cfg.mel};
  const PreparedData data = prepare_data(rows, manifest_path.parent_path(), pipe, log);
  if (data.standardizer.fitted_on != "train") {
    throw ConfigError("leakage guard: standardizer was not fitted on the train split");
  }
  check_split(data.train, Split::train, "training");
  check_split(data.test, Split::test, "evaluation");
  if (data.test.features.empty()) throw ConfigError("manifest has no test recordings");
  write_standardizer(out_dir / "standardizer.soum", data.standardizer);

  const std::size_t h = data.train.features.front().n_mels();
  const std::size_t w = data.train.features.front().n_frames();

  // Attacker: trains the gender classifier on its labeled data.
  guard.use(Party::attacker, cfg.resources.training_data, Phase::train);
  auto garch = cfg.gender_arch;
  garch.height = h;
  garch.width = w;
  nn::ModelGraph gender = nn::make_gender_model(garch, derive_seed(cfg.seed, 1));
  auto gtrain = cfg.gender_train;
  gtrain.seed = derive_seed(cfg.seed, 2);
  note(log, "training gender classifier on " + std::to_string(data.train.features.size()) + " chunks");
  const auto ghist = nn::train(gender, make_dataset(data.train.features, data.train.labels, Role::gender), gtrain);
  guard.use(Party::attacker, cfg.resources.gender_classifier, Phase::train);
  nn::save_model(gender, out_dir / "gender.soum");
  if (!ghist.epoch_loss.empty()) note(log, "  final loss " + std::to_string(ghist.epoch_loss.back()));

  // Utility reference: diagnosis classifier on the same training data.
  auto darch = cfg.diagnosis_arch;
  darch.height = h;
  darch.width = w;
  nn::ModelGraph diagnosis = nn::make_diagnosis_model(darch, derive_seed(cfg.seed, 3));
  auto dtrain = cfg.diagnosis_train;
  dtrain.seed = derive_seed(cfg.seed, 4);
  note(log, "training diagnosis classifier");
  const auto dhist =
      nn::train(diagnosis, make_dataset(data.train.features, data.train.labels, Role::diagnosis), dtrain);
  nn::save_model(diagnosis, out_dir / "diagnosis.soum");
  if (!dhist.epoch_loss.empty()) note(log, "  final loss " + std::to_string(dhist.epoch_loss.back()));

  // Protector: perturbs the target data with its copy of the gender classifier.
  guard.use(Party::protector, cfg.resources.target_data, Phase::protect);
  guard.use(Party::protector, cfg.resources.gender_classifier, Phase::protect);
  std::vector<LabeledFeature> items;
  for (std::size_t i = 0; i < data.test.features.size(); ++i) {
    items.push_back({data.test.features[i], class_index(Role::gender, data.test.labels[i])});
  }
  AttackConfig acfg = cfg.attack;
  acfg.seed = derive_seed(cfg.seed, 5);
  note(log, "protecting " + std::to_string(items.size()) + " test chunks (" + to_string(acfg.method) + ")");
  const auto results = protect_dataset(gender, items, acfg);
  std::vector<FeatureTensor> perturbed;
  for (const auto& r : results) perturbed.push_back(r.x_adv);
  write_feature_store(out_dir / "test_perturbed.soum", perturbed);

  // Attacker: infers gender from original and protected target data.
  guard.use(Party::attacker, cfg.resources.target_data, Phase::attack);
  guard.use(Party::attacker, cfg.resources.gender_classifier, Phase::attack);
  const auto g_orig = evaluate_classifier(gender, data.test.features, data.test.labels, Role::gender);
  const auto g_pert = evaluate_classifier(gender, perturbed, data.test.labels, Role::gender);

  guard.use(Party::protector, cfg.resources.diagnosis_classifier, Phase::evaluate);
  const auto d_orig = evaluate_classifier(diagnosis, data.test.features, data.test.labels, Role::diagnosis);
  const auto d_pert = evaluate_classifier(diagnosis, perturbed, data.test.labels, Role::diagnosis);

  RunReport report;
  report.toolkit_version = toolkit_version();
  report.scenario_id = scenario.id;
  report.seed = cfg.seed;
  report.ledger = check_ledger(scenario, guard.used());
  report.config = cfg;
  report.config.stft = data.stft;
  report.gender = {{g_orig.chunk, g_pert.chunk}, {g_orig.recording, g_pert.recording}};
  report.diagnosis = {{d_orig.chunk, d_pert.chunk}, {d_orig.recording, d_pert.recording}};
  report.utility_drop = d_orig.chunk.acc - d_pert.chunk.acc;
  report.utility_drop_recording = d_orig.recording.acc - d_pert.recording.acc;

  write_text(out_dir / "report.json", emit_report(report, ReportFormat::json));
  write_text(out_dir / "report.txt", emit_report(report, ReportFormat::text));
  return report;
}

}  // namespace sou

#pragma once

// Experiment orchestration: featurize a labeled corpus, train the attacker's
// gender classifier and the diagnosis classifier, protect the test features
// with PGD against the gender classifier, and evaluate both classifiers on
// original and protected data. Every resource use is checked against the
// scenario before it happens.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sou/attack.hpp"
#include "sou/audio_io.hpp"
#include "sou/features.hpp"
#include "sou/metrics.hpp"
#include "sou/nn.hpp"
#include "sou/scenario.hpp"

namespace sou {

std::string toolkit_version();

/// Scenario resource ids the pipeline books its steps against.
struct ResourceIds {
  std::string training_data = "attacker_training_data";
  std::string gender_classifier = "attacker_gender_classifier";
  std::string target_data = "target_speaker_data";
  std::string diagnosis_classifier = "diagnosis_classifier";
};

struct ExperimentConfig {
  std::string scenario_path;
  std::string manifest_path;
  std::string output_dir;
  std::uint64_t seed = 0;

  double chunk_seconds = 0.4;
  double overlap = 0.5;
  std::optional<StftConfig> stft;  // derived from the sample rate when unset
  MelConfig mel;

  nn::TrainConfig gender_train{32, 30};
  nn::TrainConfig diagnosis_train{64, 50};
  nn::GenderArch gender_arch;
  nn::DiagnosisArch diagnosis_arch;
  AttackConfig attack;
  ResourceIds resources;

  // Relative paths above resolve against this directory (the config file's).
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
};

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Per-stage seeds derived from the experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---- data preparation -------------------------------------------------------

struct FeaturePipeline {
  double chunk_seconds = 0.4;
  double overlap = 0.5;
  std::optional<StftConfig> stft;
  MelConfig mel;
};

struct PreparedSplit {
  std::vector<FeatureTensor> features;  // one per chunk
  std::vector<ClipLabels> labels;       // parallel to features
};

struct PreparedData {
  PreparedSplit train, test;
  Standardizer standardizer;
  StftConfig stft;
  int sample_rate = 0;
};

/// Loads, normalizes, segments and featurizes every manifest row; fits the
/// standardizer on the train split only and applies it to both splits.
PreparedData prepare_data(const std::vector<ManifestRow>& rows,
                          const std::filesystem::path& audio_base, const FeaturePipeline& pipe,
                          std::ostream* log = nullptr);

void write_feature_store(const std::filesystem::path& path, const std::vector<FeatureTensor>& f);
std::vector<FeatureTensor> read_feature_store(const std::filesystem::path& path);
void write_standardizer(const std::filesystem::path& path, const Standardizer& s);
Standardizer read_standardizer(const std::filesystem::path& path);

enum class Role { gender, diagnosis };

/// Class names in table order: {M, F} or {HC, PD}.
std::vector<std::string> class_names(Role role);
/// Index of the positive class: M for gender, PD for diagnosis.
std::size_t positive_class(Role role);
int class_index(Role role, const ClipLabels& labels);

nn::Dataset make_dataset(const std::vector<FeatureTensor>& features,
                         const std::vector<ClipLabels>& labels, Role role);

// ---- evaluation and report --------------------------------------------------

struct TableRows {
  MetricRow original;
  MetricRow perturbed;
};

struct ClassifierReport {
  TableRows chunk;
  TableRows recording;
};

/// Chunk-level and recording-level (mean chunk probability) metrics.
struct GranularRows {
  MetricRow chunk;
  MetricRow recording;
};

GranularRows evaluate_classifier(const nn::ModelGraph& model, const std::vector<FeatureTensor>& x,
                                 const std::vector<ClipLabels>& labels, Role role);

struct RunReport {
  std::string toolkit_version;
  std::string scenario_id;
  std::uint64_t seed = 0;
  ValidationReport ledger;
  ExperimentConfig config;  // echoed; paths as written in the config file
  ClassifierReport gender;
  ClassifierReport diagnosis;
  double utility_drop = 0.0;            // chunk-level diagnosis ACC original - perturbed
  double utility_drop_recording = 0.0;  // same at recording level
};

enum class ReportFormat { text, json };

std::string emit_report(const RunReport& r, ReportFormat format);
RunReport parse_report_json(const std::string& text);

std::string config_to_json(const ExperimentConfig& cfg);

// ---- orchestration ----------------------------------------------------------

/// The resource uses of the default pipeline, in execution order.
RunLedger planned_ledger(const ResourceIds& ids);

RunReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// ---- synthetic corpus -------------------------------------------------------

/// Harmonic tones whose fundamental encodes gender and whose additive noise
/// level encodes diagnosis; labels are balanced and independent.
struct SynthConfig {
  std::string output_dir = "synthetic";
  std::size_t n_train_recordings = 120;
  std::size_t n_test_recordings = 40;
  double duration_seconds = 1.0;
  int sample_rate = 44100;
  double male_f0 = 120.0;
  double female_f0 = 220.0;
  double detune_hz = 1.5;      // per-speaker uniform offset bound
  double max_harmonic_hz = 5000.0;
  double noise_hc = 0.05;      // noise RMS relative to tone RMS
  double noise_pd = 0.5;
  std::uint64_t seed = 20240601;

  std::filesystem::path base_dir;
};

SynthConfig parse_synth_config(const std::string& text, const std::filesystem::path& base_dir = {});
SynthConfig load_synth_config(const std::filesystem::path& path);

struct SynthOutput {
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> wavs;
};

SynthOutput generate_synthetic_corpus(const SynthConfig& cfg);

}  // namespace sou

// Synthetic labeled corpus: harmonic tones with gender-dependent fundamental
// and diagnosis-dependent noise level.

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include "sou/error.hpp"
#include "sou/harness.hpp"

namespace sou {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

template <typename T>
void read_opt(const Json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("synth config: '") + key + "' has the wrong type");
  }
}

double gaussian(std::mt19937_64& rng) {
  double u1 = nn::uniform01(rng);
  while (u1 <= 0.0) u1 = nn::uniform01(rng);
  const double u2 = nn::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> synth_tone(const SynthConfig& cfg, double f0, double noise_rel,
                               std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_seconds * cfg.sample_rate));
  const double tilt = 0.5 + nn::uniform01(rng);
  std::vector<double> tone(n, 0.0);
  for (int k = 1; k * f0 <= cfg.max_harmonic_hz && k * f0 < cfg.sample_rate / 2.0; ++k) {
    const double amp = std::pow(static_cast<double>(k), -tilt);
    const double phase = 2.0 * std::numbers::pi * nn::uniform01(rng);
    const double w = 2.0 * std::numbers::pi * k * f0 / cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i) tone[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }
  double ss = 0.0;
  for (double v : tone) ss += v * v;
  const double rms = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  for (double& v : tone) v += noise_rel * rms * gaussian(rng);
  double peak = 0.0;
  for (double v : tone) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : tone) v *= 0.8 / peak;
  }
  return tone;
}

}  // namespace

SynthConfig parse_synth_config(const std::string& text, const fs::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("synth config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  static const std::set<std::string> keys = {
      "output_dir", "n_train_recordings", "n_test_recordings", "duration_seconds",
      "sample_rate", "male_f0", "female_f0", "detune_hz", "max_harmonic_hz",
      "noise_hc", "noise_pd", "seed"};
  for (const auto& [k, _] : j.items()) {
    if (!keys.contains(k)) throw ConfigError("unknown key '" + k + "' in synth config");
  }
  SynthConfig c;
  read_opt(j, "output_dir", c.output_dir);
  read_opt(j, "n_train_recordings", c.n_train_recordings);
  read_opt(j, "n_test_recordings", c.n_test_recordings);
  read_opt(j, "duration_seconds", c.duration_seconds);
  read_opt(j, "sample_rate", c.sample_rate);
  read_opt(j, "male_f0", c.male_f0);
  read_opt(j, "female_f0", c.female_f0);
  read_opt(j, "detune_hz", c.detune_hz);
  read_opt(j, "max_harmonic_hz", c.max_harmonic_hz);
  read_opt(j, "noise_hc", c.noise_hc);
  read_opt(j, "noise_pd", c.noise_pd);
  read_opt(j, "seed", c.seed);
  if (c.sample_rate <= 0) throw ConfigError("synth config: sample_rate must be positive");
  if (c.duration_seconds <= 0.0) throw ConfigError("synth config: duration_seconds must be positive");
  if (c.n_train_recordings < 4 || c.n_test_recordings < 4) {
    throw ConfigError("synth config: each split needs at least 4 recordings");
  }
  if (c.male_f0 <= 0.0 || c.female_f0 <= 0.0) throw ConfigError("synth config: f0 must be positive");
  if (c.noise_hc < 0.0 || c.noise_pd < 0.0) throw ConfigError("synth config: noise must be >= 0");
  c.base_dir = base_dir;
  return c;
}

SynthConfig load_synth_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_synth_config(ss.str(), path.parent_path());
}

SynthOutput generate_synthetic_corpus(const SynthConfig& cfg) {
  fs::path out_dir(cfg.output_dir);
  if (out_dir.is_relative() && !cfg.base_dir.empty()) out_dir = cfg.base_dir / out_dir;
  fs::create_directories(out_dir / "wav");

  std::mt19937_64 rng(cfg.seed);
  SynthOutput out;
  std::vector<ManifestRow> rows;
  std::size_t serial = 0;
  for (Split split : {Split::train, Split::test}) {
    const std::size_t n = split == Split::train ? cfg.n_train_recordings : cfg.n_test_recordings;
    for (std::size_t i = 0; i < n; ++i, ++serial) {
      ManifestRow row;
      char id[32];
      std::snprintf(id, sizeof id, "syn%04zu", serial);
      row.recording_id = id;
      row.path = "wav/" + row.recording_id + ".wav";
      row.labels.gender = i % 2 == 0 ? Gender::M : Gender::F;
      row.labels.diagnosis = (i / 2) % 2 == 0 ? Diagnosis::HC : Diagnosis::PD;
      row.labels.speaker_id = "spk" + row.recording_id.substr(3);
      row.labels.split = split;
      row.labels.utterance = "tone";

      const double base = row.labels.gender == Gender::M ? cfg.male_f0 : cfg.female_f0;
      const double f0 = base + cfg.detune_hz * (2.0 * nn::uniform01(rng) - 1.0);
      const double noise = row.labels.diagnosis == Diagnosis::HC ? cfg.noise_hc : cfg.noise_pd;
      const auto samples = synth_tone(cfg, f0, noise, rng);
      const fs::path wav = out_dir / row.path;
      write_wav(wav, {samples}, cfg.sample_rate, SampleFormat::pcm16);
      out.wavs.push_back(wav);
      rows.push_back(std::move(row));
    }
  }
  out.manifest = out_dir / "manifest.csv";
  write_manifest(out.manifest, rows);
  return out;
}

}  // namespace sou

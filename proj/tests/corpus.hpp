#pragma once

// Small synthetic corpora and configs for end-to-end tests.

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sou/harness.hpp"
#include "support.hpp"

namespace sou::test {

inline SynthConfig tiny_synth(const std::filesystem::path& dir) {
  SynthConfig c;
  c.output_dir = dir.string();
  c.n_train_recordings = 8;
  c.n_test_recordings = 4;
  c.duration_seconds = 0.6;
  c.seed = 11;
  return c;
}

inline ExperimentConfig tiny_experiment(const std::filesystem::path& manifest,
                                        const std::filesystem::path& out) {
  ExperimentConfig c;
  c.scenario_path = (data_dir() / "scenarios" / "gender_protection.json").string();
  c.manifest_path = manifest.string();
  c.output_dir = out.string();
  c.seed = 3;
  c.gender_train.epochs = 1;
  c.gender_train.batch_size = 8;
  c.diagnosis_train.epochs = 1;
  c.diagnosis_train.batch_size = 8;
  c.gender_arch.c1 = 4;
  c.gender_arch.c2 = 8;
  c.gender_arch.hidden = 8;
  c.diagnosis_arch.c1 = 4;
  c.diagnosis_arch.c2 = 4;
  c.diagnosis_arch.c3 = 8;
  c.diagnosis_arch.hidden = 8;
  c.attack.epsilon = 0.3;
  c.attack.alpha = 0.03;
  c.attack.iterations = 3;
  return c;
}

// Autocorrelation pitch estimate with parabolic refinement; searches
// 70-400 Hz and takes the first peak within 90 % of the maximum.
inline double pitch_autocorr(const std::vector<double>& x, int rate) {
  const std::size_t lo = static_cast<std::size_t>(rate / 400), hi = static_cast<std::size_t>(rate / 70);
  const std::size_t n = x.size();
  std::vector<double> r(hi + 2, 0.0);
  for (std::size_t lag = lo - 1; lag <= hi + 1; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += x[i] * x[i + lag];
    r[lag] = acc / static_cast<double>(n - lag);
  }
  double best = 0.0;
  for (std::size_t lag = lo; lag <= hi; ++lag) best = std::max(best, r[lag]);
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    if (r[lag] >= 0.9 * best && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
      const double a = r[lag - 1], b = r[lag], c = r[lag + 1];
      const double denom = a - 2 * b + c;
      const double shift = denom == 0.0 ? 0.0 : 0.5 * (a - c) / denom;
      return rate / (static_cast<double>(lag) + shift);
    }
  }
  return 0.0;
}

}  // namespace sou::test

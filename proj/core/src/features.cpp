#include "sou/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "sou/error.hpp"

namespace sou {
namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  void execute() { fftw_execute(plan_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

StftConfig StftConfig::for_rate(int sample_rate) {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  StftConfig cfg;
  cfg.window_len = static_cast<std::size_t>(std::floor(0.015 * sample_rate));
  cfg.hop = cfg.window_len / 2;
  cfg.fft_size = std::bit_ceil(cfg.window_len);
  return cfg;
}

void StftConfig::validate() const {
  if (hop == 0 || hop > window_len || window_len > fft_size) {
    throw ConfigError("STFT config requires 0 < hop <= window_len <= fft_size");
  }
}

void MelConfig::validate(int sample_rate) const {
  const double nyquist = sample_rate / 2.0;
  const double hi = f_max.value_or(nyquist);
  if (n_mels < 2) throw ConfigError("mel config requires n_mels >= 2");
  if (!(f_min >= 0.0 && f_min < hi && hi <= nyquist)) {
    throw ConfigError("mel config requires 0 <= f_min < f_max <= sample_rate/2");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples < cfg.window_len) return 0;
  return (n_samples - cfg.window_len) / cfg.hop + 1;
}

Matrix stft_power(const std::vector<double>& samples, const StftConfig& cfg) {
  cfg.validate();
  if (samples.size() < cfg.window_len) {
    throw ShapeError("stft: chunk of " + std::to_string(samples.size()) +
                     " samples is shorter than the window (" + std::to_string(cfg.window_len) + ")");
  }
  const std::size_t frames = frame_count(samples.size(), cfg);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const auto window = hann_window(cfg.window_len);

  RealFft fft(cfg.fft_size);
  Matrix power(bins, frames);
  double* in = fft.input();
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.window_len; ++i) in[i] = samples[start + i] * window[i];
    std::fill(in + cfg.window_len, in + cfg.fft_size, 0.0);
    fft.execute();
    const fftw_complex* out = fft.output();
    for (std::size_t k = 0; k < bins; ++k) {
      power(k, t) = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
  }
  return power;
}

Matrix mel_filterbank(const MelConfig& cfg, std::size_t fft_size, int sample_rate) {
  cfg.validate(sample_rate);
  const double f_max = cfg.f_max.value_or(sample_rate / 2.0);
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(f_max);

  std::vector<double> peaks(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    peaks[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                      static_cast<double>(cfg.n_mels - 1));
  }
  peaks.front() = cfg.f_min;
  peaks.back() = f_max;

  const std::size_t bins = fft_size / 2 + 1;
  Matrix fb(cfg.n_mels, bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double center = peaks[m];
      double w = 0.0;
      if (f == center) {
        w = 1.0;
      } else if (f < center && m > 0 && f > peaks[m - 1]) {
        w = (f - peaks[m - 1]) / (center - peaks[m - 1]);
      } else if (f > center && m + 1 < cfg.n_mels && f < peaks[m + 1]) {
        w = (peaks[m + 1] - f) / (peaks[m + 1] - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

Matrix power_to_mel_db(const Matrix& power, const Matrix& filterbank) {
  if (filterbank.cols != power.rows) {
    throw ShapeError("mel: filterbank has " + std::to_string(filterbank.cols) +
                     " columns but the spectrogram has " + std::to_string(power.rows) + " bins");
  }
  Matrix out(filterbank.rows, power.cols);
  for (std::size_t m = 0; m < filterbank.rows; ++m) {
    for (std::size_t t = 0; t < power.cols; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < power.rows; ++k) e += filterbank(m, k) * power(k, t);
      out(m, t) = 10.0 * std::log10(std::max(e, kDbFloorPower));
    }
  }
  return out;
}

FeatureTensor featurize_chunk(const AudioChunk& chunk, int sample_rate, const StftConfig& scfg,
                              const MelConfig& mcfg) {
  const Matrix power = stft_power(chunk, scfg);
  const Matrix fb = mel_filterbank(mcfg, scfg.fft_size, sample_rate);
  FeatureTensor f;
  f.values = power_to_mel_db(power, fb);
  f.recording_id = chunk.parent_id;
  f.chunk_index = chunk.chunk_index;
  return f;
}

Standardizer fit_standardizer(const std::vector<FeatureTensor>& train_features,
                              std::string fitted_on) {
  if (train_features.empty()) throw ConfigError("fit_standardizer: no training features");
  const std::size_t n_mels = train_features.front().n_mels();
  std::vector<double> sum(n_mels, 0.0);
  std::size_t count = 0;
  for (const auto& f : train_features) {
    if (f.standardized) throw ConfigError("fit_standardizer: input already standardized");
    if (f.n_mels() != n_mels) throw ShapeError("fit_standardizer: mixed n_mels in input");
    for (std::size_t m = 0; m < n_mels; ++m) {
      for (std::size_t t = 0; t < f.n_frames(); ++t) sum[m] += f.values(m, t);
    }
    count += f.n_frames();
  }
  if (count == 0) throw ConfigError("fit_standardizer: input has no frames");

  Standardizer s;
  s.fitted_on = std::move(fitted_on);
  s.mean.resize(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) s.mean[m] = sum[m] / static_cast<double>(count);

  // Second pass on centered values keeps the variance accurate for dB-scale
  // data with large offsets.
  std::vector<double> sq(n_mels, 0.0);
  for (const auto& f : train_features) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      for (std::size_t t = 0; t < f.n_frames(); ++t) {
        const double d = f.values(m, t) - s.mean[m];
        sq[m] += d * d;
      }
    }
  }
  s.std.resize(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) s.std[m] = std::sqrt(sq[m] / static_cast<double>(count));
  return s;
}

FeatureTensor apply_standardizer(const FeatureTensor& f, const Standardizer& s) {
  if (f.standardized) throw ConfigError("apply_standardizer: tensor is already standardized");
  if (f.n_mels() != s.mean.size() || s.std.size() != s.mean.size()) {
    throw ShapeError("apply_standardizer: tensor has " + std::to_string(f.n_mels()) +
                     " mel bins, standardizer has " + std::to_string(s.mean.size()));
  }
  FeatureTensor out = f;
  for (std::size_t m = 0; m < f.n_mels(); ++m) {
    for (std::size_t t = 0; t < f.n_frames(); ++t) {
      out.values(m, t) = (f.values(m, t) - s.mean[m]) / (s.std[m] + s.eps);
    }
  }
  out.standardized = true;
  return out;
}

FeatureTensor invert_standardizer(const FeatureTensor& f, const Standardizer& s) {
  if (!f.standardized) throw ConfigError("invert_standardizer: tensor is not standardized");
  if (f.n_mels() != s.mean.size()) throw ShapeError("invert_standardizer: n_mels mismatch");
  FeatureTensor out = f;
  for (std::size_t m = 0; m < f.n_mels(); ++m) {
    for (std::size_t t = 0; t < f.n_frames(); ++t) {
      out.values(m, t) = f.values(m, t) * (s.std[m] + s.eps) + s.mean[m];
    }
  }
  out.standardized = false;
  return out;
}

}  // namespace sou

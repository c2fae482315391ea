#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sou/audio_io.hpp"

namespace sou {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const Matrix&) const = default;
};

struct StftConfig {
  std::size_t window_len = 661;  // floor(0.015 * 44100)
  std::size_t hop = 330;         // floor(window_len / 2)
  std::size_t fft_size = 1024;

  /// 15 ms symmetric Hann window with 50 % overlap for the given rate,
  /// zero-padded to the next power of two.
  static StftConfig for_rate(int sample_rate);
  void validate() const;
};

struct MelConfig {
  std::size_t n_mels = 64;
  double f_min = 0.0;
  std::optional<double> f_max;  // Nyquist when unset

  void validate(int sample_rate) const;
};

inline constexpr double kDbFloorPower = 1e-10;

/// Standardized or raw log-mel spectrogram of one chunk (n_mels x n_frames).
struct FeatureTensor {
  Matrix values;
  std::string recording_id;
  std::size_t chunk_index = 0;
  bool standardized = false;

  std::size_t n_mels() const { return values.rows; }
  std::size_t n_frames() const { return values.cols; }
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;
  double eps = 1e-8;
  std::string fitted_on = "train";
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

std::vector<double> hann_window(std::size_t n);

std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg);

/// One-sided power spectrogram, (fft_size/2 + 1) x n_frames, without
/// centering padding.
Matrix stft_power(const std::vector<double>& samples, const StftConfig& cfg);
inline Matrix stft_power(const AudioChunk& chunk, const StftConfig& cfg) {
  return stft_power(chunk.samples, cfg);
}

/// Peak-normalized triangular filters whose peaks are spaced evenly on the
/// mel scale from f_min to f_max inclusive. Adjacent triangles meet at their
/// neighbours' peaks, so the bank sums to one across [f_min, f_max].
Matrix mel_filterbank(const MelConfig& cfg, std::size_t fft_size, int sample_rate);

/// 10*log10(max(filterbank * power, 1e-10)).
Matrix power_to_mel_db(const Matrix& power, const Matrix& filterbank);

FeatureTensor featurize_chunk(const AudioChunk& chunk, int sample_rate, const StftConfig& scfg,
                              const MelConfig& mcfg);

Standardizer fit_standardizer(const std::vector<FeatureTensor>& train_features,
                              std::string fitted_on = "train");
FeatureTensor apply_standardizer(const FeatureTensor& f, const Standardizer& s);
FeatureTensor invert_standardizer(const FeatureTensor& f, const Standardizer& s);

}  // namespace sou

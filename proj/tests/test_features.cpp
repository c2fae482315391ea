#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "sou/error.hpp"
#include "sou/features.hpp"

using namespace sou;

namespace {

AudioChunk tone_chunk(double hz, std::size_t n = 17640, int rate = 44100) {
  AudioChunk c;
  c.parent_id = "t";
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return c;
}

// Direct O(N^2) DFT of one windowed, zero-padded frame.
std::vector<double> dft_power(const std::vector<double>& x, std::size_t start, const StftConfig& cfg) {
  const auto w = hann_window(cfg.window_len);
  std::vector<double> out(cfg.fft_size / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < cfg.window_len; ++n) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n) /
                         static_cast<double>(cfg.fft_size);
      acc += x[start + n] * w[n] * std::polar(1.0, ang);
    }
    out[k] = std::norm(acc);
  }
  return out;
}

}  // namespace

TEST(Stft, DefaultsAt44k) {
  const auto cfg = StftConfig::for_rate(44100);
  EXPECT_EQ(cfg.window_len, 661u);
  EXPECT_EQ(cfg.hop, 330u);
  EXPECT_EQ(cfg.fft_size, 1024u);
  EXPECT_EQ(frame_count(17640, cfg), 52u);
}

TEST(Stft, HannWindowIsSymmetric) {
  const auto w = hann_window(661);
  EXPECT_EQ(w.front(), 0.0);
  EXPECT_NEAR(w[330], 1.0, 1e-15);
  for (std::size_t i = 0; i < 661; ++i) ASSERT_NEAR(w[i], w[660 - i], 1e-15);
}

TEST(Stft, MatchesDirectDft) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<double> x(4000);
  for (auto& v : x) v = g(rng);
  const StftConfig cfg;
  const Matrix p = stft_power(x, cfg);
  ASSERT_EQ(p.rows, 513u);
  ASSERT_EQ(p.cols, frame_count(x.size(), cfg));
  for (std::size_t t : {std::size_t{0}, std::size_t{3}, p.cols - 1}) {
    const auto ref = dft_power(x, t * cfg.hop, cfg);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      ASSERT_NEAR(p(k, t), ref[k], 1e-9 * (1.0 + ref[k])) << "frame " << t << " bin " << k;
    }
  }
}

TEST(Stft, SinusoidPeakBin) {
  const Matrix p = stft_power(tone_chunk(1000.0), StftConfig{});
  for (std::size_t t = 0; t < p.cols; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.rows; ++k) {
      if (p(k, t) > p(best, t)) best = k;
    }
    ASSERT_EQ(best, 23u) << "frame " << t;
  }
}

TEST(Mel, ScaleRoundTrip) {
  for (double hz : {0.0, 100.0, 1000.0, 8000.0, 22050.0}) {
    EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
  }
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 0.1);
}

TEST(Mel, FilterbankPartitionOfUnity) {
  const MelConfig cfg;
  const Matrix fb = mel_filterbank(cfg, 1024, 44100);
  ASSERT_EQ(fb.rows, 64u);
  ASSERT_EQ(fb.cols, 513u);
  for (std::size_t k = 0; k < fb.cols; ++k) {
    double sum = 0.0;
    for (std::size_t m = 0; m < fb.rows; ++m) {
      ASSERT_GE(fb(m, k), 0.0);
      ASSERT_LE(fb(m, k), 1.0);
      sum += fb(m, k);
    }
    ASSERT_NEAR(sum, 1.0, 1e-12) << "bin " << k;
  }
}

TEST(Mel, PeaksAreEvenlySpacedOnMelScale) {
  MelConfig cfg;
  cfg.n_mels = 8;
  cfg.f_min = 100.0;
  cfg.f_max = 4000.0;
  const std::size_t fft = 1 << 16;
  const Matrix fb = mel_filterbank(cfg, fft, 44100);
  const double step = (hz_to_mel(4000.0) - hz_to_mel(100.0)) / 7.0;
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      if (fb(m, k) > fb(m, best)) best = k;
    }
    const double peak_hz = static_cast<double>(best) * 44100.0 / fft;
    EXPECT_NEAR(hz_to_mel(peak_hz), hz_to_mel(100.0) + step * static_cast<double>(m), 1.0);
  }
  // Nothing outside [f_min, f_max].
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    EXPECT_EQ(fb(m, 0), 0.0);
    EXPECT_EQ(fb(m, fb.cols - 1), 0.0);
  }
}

TEST(Mel, RejectsBadConfig) {
  MelConfig cfg;
  cfg.f_max = 30000.0;
  EXPECT_THROW(mel_filterbank(cfg, 1024, 44100), ConfigError);
  cfg.f_max.reset();
  cfg.n_mels = 1;
  EXPECT_THROW(mel_filterbank(cfg, 1024, 44100), ConfigError);
}

TEST(Featurize, ShapeUnderDefaults) {
  const auto f = featurize_chunk(tone_chunk(440.0), 44100, StftConfig{}, MelConfig{});
  EXPECT_EQ(f.n_mels(), 64u);
  EXPECT_EQ(f.n_frames(), 52u);
  EXPECT_FALSE(f.standardized);
  EXPECT_EQ(f.recording_id, "t");
}

TEST(Featurize, SilenceIsFloorDb) {
  AudioChunk c;
  c.samples.assign(17640, 0.0);
  const auto f = featurize_chunk(c, 44100, StftConfig{}, MelConfig{});
  for (double v : f.values.values) ASSERT_EQ(v, -100.0);
}

TEST(Standardizer, FitsTrainAndInverts) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(-40.0, 7.0);
  std::vector<FeatureTensor> train(6);
  for (auto& f : train) {
    f.values = Matrix(4, 10);
    for (auto& v : f.values.values) v = g(rng);
  }
  const Standardizer s = fit_standardizer(train);
  EXPECT_EQ(s.fitted_on, "train");
  ASSERT_EQ(s.mean.size(), 4u);

  // Standardized train features have zero mean and unit variance per band.
  for (std::size_t m = 0; m < 4; ++m) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& f : train) {
      const auto z = apply_standardizer(f, s);
      EXPECT_TRUE(z.standardized);
      for (std::size_t t = 0; t < 10; ++t) {
        sum += z.values(m, t);
        sq += z.values(m, t) * z.values(m, t);
        ++n;
      }
    }
    EXPECT_NEAR(sum / static_cast<double>(n), 0.0, 1e-12);
    EXPECT_NEAR(sq / static_cast<double>(n), 1.0, 1e-6);
  }

  const auto back = invert_standardizer(apply_standardizer(train[0], s), s);
  for (std::size_t i = 0; i < back.values.values.size(); ++i) {
    ASSERT_NEAR(back.values.values[i], train[0].values.values[i], 1e-9);
  }
  EXPECT_THROW(fit_standardizer({}), ConfigError);
}

TEST(Standardizer, ConstantBandStaysFinite) {
  FeatureTensor f;
  f.values = Matrix(2, 5, -100.0);
  const Standardizer s = fit_standardizer({f});
  const auto z = apply_standardizer(f, s);
  for (double v : z.values.values) ASSERT_EQ(v, 0.0);
}

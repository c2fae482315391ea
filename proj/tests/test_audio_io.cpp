#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sou/audio_io.hpp"
#include "sou/error.hpp"
#include "support.hpp"

using namespace sou;

namespace {

std::vector<double> ramp(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.9 * std::sin(0.01 * static_cast<double>(i));
  return v;
}

AudioClip clip_of(std::size_t n, int rate = 44100) {
  AudioClip c;
  c.samples = ramp(n);
  c.sample_rate = rate;
  c.recording_id = "r";
  return c;
}

}  // namespace

TEST(Wav, Pcm16MonoRoundTrip) {
  const auto dir = test::scratch("wav16");
  const auto x = ramp(44100);
  write_wav(dir / "a.wav", {x}, 44100);
  const AudioClip c = load_wav(dir / "a.wav");
  EXPECT_EQ(c.sample_rate, 44100);
  ASSERT_EQ(c.samples.size(), 44100u);
  EXPECT_EQ(c.recording_id, "a");
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(c.samples[i], x[i], 1.0 / 32767);
}

TEST(Wav, Pcm24AndFloatStereoAreAveraged) {
  const auto dir = test::scratch("wav24");
  const auto l = ramp(1000);
  std::vector<double> r(1000, 0.25);
  for (auto fmt : {SampleFormat::pcm24, SampleFormat::float32}) {
    write_wav(dir / "s.wav", {l, r}, 22050, fmt);
    const AudioClip c = load_wav(dir / "s.wav");
    EXPECT_EQ(c.sample_rate, 22050);
    ASSERT_EQ(c.samples.size(), 1000u);
    for (std::size_t i = 0; i < 1000; ++i) ASSERT_NEAR(c.samples[i], 0.5 * (l[i] + 0.25), 1e-6);
  }
}

TEST(Wav, RejectsBadFiles) {
  const auto dir = test::scratch("wavbad");
  test::write_file(dir / "junk.wav", "not a wave file at all, definitely not");
  EXPECT_THROW(load_wav(dir / "junk.wav"), IoError);
  EXPECT_THROW(load_wav(dir / "absent.wav"), IoError);

  // 8-bit PCM is outside the supported encodings.
  write_wav(dir / "ok.wav", {ramp(10)}, 8000);
  std::string bytes = test::read_file(dir / "ok.wav");
  bytes[34] = 8;  // bits per sample
  test::write_file(dir / "u8.wav", bytes);
  try {
    load_wav(dir / "u8.wav");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported encoding"), std::string::npos);
  }

  write_wav(dir / "empty.wav", {std::vector<double>{}}, 8000);
  EXPECT_THROW(load_wav(dir / "empty.wav"), IoError);
}

TEST(Normalize, PeakIsExactlyOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    AudioClip c;
    c.samples.resize(1 + rng() % 500);
    for (auto& s : c.samples) s = u(rng);
    const AudioClip n = normalize_amplitude(c);
    double peak = 0.0;
    for (double s : n.samples) peak = std::max(peak, std::abs(s));
    ASSERT_EQ(peak, 1.0);
    ASSERT_FALSE(n.silent);
    ASSERT_EQ(normalize_amplitude(n).samples, n.samples);
  }
}

TEST(Normalize, SilentClipIsFlagged) {
  AudioClip c;
  c.samples.assign(100, 0.0);
  const AudioClip n = normalize_amplitude(c);
  EXPECT_TRUE(n.silent);
  EXPECT_EQ(n.samples, c.samples);
}

TEST(Segment, OneSecondGivesFourChunks) {
  const auto chunks = segment(clip_of(44100));
  ASSERT_EQ(chunks.size(), 4u);
  const std::size_t starts[] = {0, 8820, 17640, 26460};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(chunks[k].start_sample, starts[k]);
    EXPECT_EQ(chunks[k].samples.size(), 17640u);
    EXPECT_EQ(chunks[k].chunk_index, k);
    EXPECT_FALSE(chunks[k].padded);
  }
  EXPECT_EQ(chunks[2].samples[5], clip_of(44100).samples[17645]);
}

TEST(Segment, ExactLengthAndShortClips) {
  const auto exact = segment(clip_of(17640));
  ASSERT_EQ(exact.size(), 1u);
  EXPECT_FALSE(exact[0].padded);

  const auto shortc = segment(clip_of(13230));
  ASSERT_EQ(shortc.size(), 1u);
  EXPECT_TRUE(shortc[0].padded);
  ASSERT_EQ(shortc[0].samples.size(), 17640u);
  for (std::size_t i = 13230; i < 17640; ++i) ASSERT_EQ(shortc[0].samples[i], 0.0);
}

TEST(Segment, PlanFollowsSampleRate) {
  const auto p = segment_plan(16000);
  EXPECT_EQ(p.chunk_len, 6400u);
  EXPECT_EQ(p.hop, 3200u);
  EXPECT_THROW(segment_plan(44100, 0.4, 1.0), ConfigError);
}

TEST(Manifest, ParsesAnyColumnOrderAndNormalizesCase) {
  const std::string text =
      "split,path,gender,diagnosis,recording_id,speaker_id,utterance\n"
      "train,a.wav,f,pd,r1,s1,ka\n"
      "TEST,b.wav,M,Hc,r2,s2,\n";
  const auto rows = parse_manifest(text);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].labels.gender, Gender::F);
  EXPECT_EQ(rows[0].labels.diagnosis, Diagnosis::PD);
  EXPECT_EQ(rows[1].labels.split, Split::test);
  EXPECT_EQ(rows[1].labels.diagnosis, Diagnosis::HC);
  EXPECT_EQ(rows[1].path, "b.wav");

  const auto s = summarize(rows);
  EXPECT_EQ(s.train, 1u);
  EXPECT_EQ(s.test_hc, 1u);
  EXPECT_EQ(s.train_f, 1u);
}

TEST(Manifest, ErrorsNameTheRow) {
  const std::string bad = "path,recording_id,speaker_id,diagnosis,gender,split,utterance\n"
                          "a.wav,r1,s1,HC,M,train,x\n"
                          "b.wav,r2,s2,XX,M,train,x\n";
  try {
    parse_manifest(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("diagnosis"), std::string::npos);
  }
  EXPECT_THROW(parse_manifest("path,recording_id\nx,y\n"), ParseError);
  EXPECT_THROW(parse_manifest("path,recording_id,speaker_id,diagnosis,gender,split,utterance\n"
                              "a,r,s,HC,M,train,\na,r,s,HC,M,train,\n"),
               ParseError);
}

TEST(Manifest, WriteReadRoundTrip) {
  const auto dir = test::scratch("manifest");
  std::vector<ManifestRow> rows(2);
  rows[0] = {"wav/a.wav", "a", {Diagnosis::PD, Gender::F, "s1", Split::train, "hello, world"}};
  rows[1] = {"wav/b.wav", "b", {Diagnosis::HC, Gender::M, "s2", Split::test, ""}};
  write_manifest(dir / "m.csv", rows);
  const auto back = read_manifest(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].labels, rows[0].labels);
  EXPECT_EQ(back[1].path, "wav/b.wav");
}

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace sou {

enum class Diagnosis { HC, PD };
enum class Gender { M, F };
enum class Split { train, test };

std::string to_string(Diagnosis d);
std::string to_string(Gender g);
std::string to_string(Split s);

struct ClipLabels {
  Diagnosis diagnosis = Diagnosis::HC;
  Gender gender = Gender::M;
  std::string speaker_id;
  Split split = Split::train;
  std::string utterance;

  bool operator==(const ClipLabels&) const = default;
};

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 44100;
  std::string recording_id;
  ClipLabels labels;
  bool silent = false;  // set by normalize_amplitude on all-zero input
};

struct AudioChunk {
  std::vector<double> samples;
  std::string parent_id;
  std::size_t chunk_index = 0;
  std::size_t start_sample = 0;
  bool padded = false;
};

enum class SampleFormat { pcm16, pcm24, float32 };

/// Reads a RIFF/WAVE file (16/24-bit PCM or 32-bit float, any channel count,
/// plain or WAVE_FORMAT_EXTENSIBLE). Channels are averaged to mono and integer
/// samples scaled to [-1, 1). The recording id is the file stem.
AudioClip load_wav(const std::filesystem::path& path);

/// Writes interleaved-from-planar audio. `channels[c][i]` is sample i of
/// channel c; all channels must have equal length.
void write_wav(const std::filesystem::path& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, SampleFormat format = SampleFormat::pcm16);

AudioClip normalize_amplitude(AudioClip clip);

struct SegmentPlan {
  std::size_t chunk_len = 0;
  std::size_t hop = 0;
};

SegmentPlan segment_plan(int sample_rate, double chunk_seconds = 0.4, double overlap = 0.5);

/// Fixed-length chunks at starts 0, hop, 2*hop, ... that fit entirely inside
/// the clip. A clip shorter than one chunk yields a single zero-padded chunk.
std::vector<AudioChunk> segment(const AudioClip& clip, double chunk_seconds = 0.4,
                                double overlap = 0.5);

struct ManifestRow {
  std::string path;
  std::string recording_id;
  ClipLabels labels;
};

/// Parses the dataset CSV (header: path,recording_id,speaker_id,diagnosis,
/// gender,split,utterance; any column order). Label values are matched
/// case-insensitively and normalized.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
std::vector<ManifestRow> parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

struct ManifestSummary {
  std::size_t train = 0, test = 0;
  std::size_t train_hc = 0, train_pd = 0, test_hc = 0, test_pd = 0;
  std::size_t train_m = 0, train_f = 0, test_m = 0, test_f = 0;
};

ManifestSummary summarize(const std::vector<ManifestRow>& rows);

}  // namespace sou

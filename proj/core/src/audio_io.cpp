#include "sou/audio_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "sou/error.hpp"

namespace sou {
namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}
std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("manifest: unterminated quote", line_no, line.size());
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_string(Diagnosis d) { return d == Diagnosis::HC ? "HC" : "PD"; }
std::string to_string(Gender g) { return g == Gender::M ? "M" : "F"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  const std::string where = "WAV '" + path.string() + "': ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(where + "missing RIFF/WAVE header");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw IoError(where + "truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = u16(f);
      channels = u16(f + 2);
      rate = u32(f + 4);
      bits = u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw IoError(where + "truncated extensible fmt chunk");
        format = u16(f + 24);  // first two bytes of the sub-format GUID
      }
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      // Tolerate writers that leave the size field too large.
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw IoError(where + "missing or truncated fmt chunk");
  if (data == nullptr) throw IoError(where + "missing data chunk");

  const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw IoError(where + "unsupported encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bits); expected 16/24-bit PCM or 32-bit float");
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame = bytes_per_sample * channels;
  const std::size_t n = data_size / frame;
  if (n == 0) throw IoError(where + "zero-length audio");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.recording_id = path.stem().string();
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame + c * bytes_per_sample;
      double v = 0.0;
      if (flt) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(u16(p)) / 32768.0;
      } else {
        std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      }
      acc += v;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, SampleFormat format) {
  if (channels.empty()) throw ConfigError("write_wav: no channels");
  const std::size_t n = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != n) throw ShapeError("write_wav: channels differ in length");
  }
  const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : format == SampleFormat::pcm24 ? 24 : 32;
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_size = static_cast<std::uint32_t>(n * nch * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == SampleFormat::float32 ? kFormatFloat : kFormatPcm);
  put16(out, nch);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * nch * (bits / 8));
  put16(out, static_cast<std::uint16_t>(nch * (bits / 8)));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_size);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : channels) {
      const double x = std::clamp(ch[i], -1.0, 1.0);
      if (format == SampleFormat::float32) {
        const float f = static_cast<float>(ch[i]);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put32(out, u);
      } else if (format == SampleFormat::pcm16) {
        const long v = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
      } else {
        const long v = std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L);
        const auto u = static_cast<std::uint32_t>(v) & 0xFFFFFFu;
        out.push_back(static_cast<std::uint8_t>(u & 0xFF));
        out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

AudioClip normalize_amplitude(AudioClip clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) {
    clip.silent = true;
    return clip;
  }
  clip.silent = false;
  for (double& s : clip.samples) s /= peak;
  return clip;
}

SegmentPlan segment_plan(int sample_rate, double chunk_seconds, double overlap) {
  if (sample_rate <= 0) throw ConfigError("segment: sample rate must be positive");
  if (chunk_seconds <= 0.0) throw ConfigError("segment: chunk length must be positive");
  if (overlap < 0.0 || overlap >= 1.0) throw ConfigError("segment: overlap must be in [0, 1)");
  SegmentPlan plan;
  plan.chunk_len = static_cast<std::size_t>(std::llround(chunk_seconds * sample_rate));
  plan.hop = static_cast<std::size_t>(std::llround(plan.chunk_len * (1.0 - overlap)));
  if (plan.chunk_len == 0 || plan.hop == 0) throw ConfigError("segment: chunk too short");
  return plan;
}

std::vector<AudioChunk> segment(const AudioClip& clip, double chunk_seconds, double overlap) {
  const auto plan = segment_plan(clip.sample_rate, chunk_seconds, overlap);
  const std::size_t n = clip.samples.size();
  std::vector<AudioChunk> chunks;
  if (n < plan.chunk_len) {
    AudioChunk c;
    c.samples.assign(plan.chunk_len, 0.0);
    std::copy(clip.samples.begin(), clip.samples.end(), c.samples.begin());
    c.parent_id = clip.recording_id;
    c.padded = true;
    chunks.push_back(std::move(c));
    return chunks;
  }
  for (std::size_t start = 0, k = 0; start + plan.chunk_len <= n; start += plan.hop, ++k) {
    AudioChunk c;
    c.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(start + plan.chunk_len));
    c.parent_id = clip.recording_id;
    c.chunk_index = k;
    c.start_sample = start;
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<ManifestRow> parse_manifest(const std::string& text) {
  static const std::vector<std::string> kColumns = {
      "path", "recording_id", "speaker_id", "diagnosis", "gender", "split", "utterance"};

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  bool have_header = false;
  std::vector<ManifestRow> rows;
  std::set<std::string> ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const auto& c : kColumns) {
        if (!col.contains(c)) throw ParseError("manifest: missing column '" + c + "'", line_no, 1);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != col.size()) {
      throw ParseError("manifest: row " + std::to_string(line_no) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(col.size()),
                       line_no, 1);
    }
    auto field = [&](const std::string& name) { return fields[col.at(name)]; };
    auto bad = [&](const std::string& name) -> ParseError {
      return ParseError("manifest: invalid " + name + " '" + field(name) + "' in row " +
                            std::to_string(line_no),
                        line_no, col.at(name) + 1);
    };

    ManifestRow row;
    row.path = field("path");
    row.recording_id = field("recording_id");
    row.labels.speaker_id = field("speaker_id");
    row.labels.utterance = field("utterance");
    const auto diag = upper(field("diagnosis"));
    if (diag == "HC") row.labels.diagnosis = Diagnosis::HC;
    else if (diag == "PD") row.labels.diagnosis = Diagnosis::PD;
    else throw bad("diagnosis");
    const auto gender = upper(field("gender"));
    if (gender == "M") row.labels.gender = Gender::M;
    else if (gender == "F") row.labels.gender = Gender::F;
    else throw bad("gender");
    const auto split = lower(field("split"));
    if (split == "train") row.labels.split = Split::train;
    else if (split == "test") row.labels.split = Split::test;
    else throw bad("split");

    if (row.recording_id.empty()) throw bad("recording_id");
    if (!ids.insert(row.recording_id).second) {
      throw ParseError("manifest: duplicate recording_id '" + row.recording_id + "' in row " +
                           std::to_string(line_no),
                       line_no, col.at("recording_id") + 1);
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError("manifest: empty file");
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "path,recording_id,speaker_id,diagnosis,gender,split,utterance\n";
  for (const auto& r : rows) {
    out << csv_field(r.path) << ',' << csv_field(r.recording_id) << ','
        << csv_field(r.labels.speaker_id) << ',' << to_string(r.labels.diagnosis) << ','
        << to_string(r.labels.gender) << ',' << to_string(r.labels.split) << ','
        << csv_field(r.labels.utterance) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ManifestSummary summarize(const std::vector<ManifestRow>& rows) {
  ManifestSummary s;
  for (const auto& r : rows) {
    const bool train = r.labels.split == Split::train;
    const bool hc = r.labels.diagnosis == Diagnosis::HC;
    const bool m = r.labels.gender == Gender::M;
    (train ? s.train : s.test)++;
    if (train) {
      (hc ? s.train_hc : s.train_pd)++;
      (m ? s.train_m : s.train_f)++;
    } else {
      (hc ? s.test_hc : s.test_pd)++;
      (m ? s.test_m : s.test_f)++;
    }
  }
  return s;
}

}  // namespace sou

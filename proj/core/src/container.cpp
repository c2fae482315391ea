#include "sou/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sou/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "SOUM encoding assumes a little-endian host");

namespace sou {
namespace {

constexpr char kMagic[4] = {'S', 'O', 'U', 'M'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("SOUM: truncated file");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t ContainerEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void Container::add(std::string name, DType dtype, std::vector<std::uint32_t> dims,
                    std::vector<double> values) {
  if (name.size() > UINT16_MAX) throw ConfigError("SOUM: entry name too long");
  if (dims.size() > UINT8_MAX) throw ConfigError("SOUM: too many dimensions");
  ContainerEntry e{std::move(name), dtype, std::move(dims), std::move(values)};
  if (e.element_count() != e.values.size()) {
    throw ShapeError("SOUM: entry '" + e.name + "' dims do not match value count");
  }
  entries_.push_back(std::move(e));
}

void Container::add_scalar(std::string name, double value, DType dtype) {
  add(std::move(name), dtype, {}, {value});
}

const ContainerEntry* Container::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const ContainerEntry& Container::at(std::string_view name) const {
  if (const auto* e = find(name)) return *e;
  throw IoError("SOUM: missing entry '" + std::string(name) + "'");
}

std::vector<std::uint8_t> Container::encode() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint32_t>(out, d);
    for (double v : e.values) {
      if (e.dtype == DType::f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

Container Container::decode(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("SOUM: bad magic bytes");
  }
  in.get_string(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw IoError("SOUM: unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;
    e.name = in.get_string(in.get<std::uint16_t>());
    const auto tag = in.get<std::uint8_t>();
    if (tag > 1) throw IoError("SOUM: unknown dtype tag in entry '" + e.name + "'");
    e.dtype = static_cast<DType>(tag);
    const auto ndim = in.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < ndim; ++k) e.dims.push_back(in.get<std::uint32_t>());
    const std::size_t n = e.element_count();
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      e.values[k] = e.dtype == DType::f32 ? static_cast<double>(in.get<float>())
                                          : in.get<double>();
    }
    c.entries_.push_back(std::move(e));
  }
  if (!in.at_end()) throw IoError("SOUM: trailing bytes after last entry");
  return c;
}

void Container::write(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Container Container::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace sou

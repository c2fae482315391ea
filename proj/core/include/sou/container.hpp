#pragma once

// SOUM binary container shared by model files and feature stores.
//
// Layout (all integers little-endian):
//   magic "SOUM" | version u32 (=1) | entry count u32
//   per entry: name length u16 | UTF-8 name | dtype u8 (0 = f32, 1 = f64)
//              | ndim u8 | dims u32 x ndim | raw little-endian data

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sou {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  // Values are held in double precision; f32 entries are narrowed on write.
  std::vector<double> values;

  std::size_t element_count() const;
};

class Container {
 public:
  void add(std::string name, DType dtype, std::vector<std::uint32_t> dims,
           std::vector<double> values);
  void add_scalar(std::string name, double value, DType dtype = DType::f64);

  const ContainerEntry* find(std::string_view name) const;
  /// Throws IoError naming the entry when it is absent.
  const ContainerEntry& at(std::string_view name) const;

  const std::vector<ContainerEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> encode() const;
  static Container decode(const std::vector<std::uint8_t>& bytes);

  void write(const std::filesystem::path& path) const;
  static Container read(const std::filesystem::path& path);

 private:
  std::vector<ContainerEntry> entries_;
};

}  // namespace sou

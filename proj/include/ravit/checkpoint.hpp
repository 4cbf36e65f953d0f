#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ravit/tensor.hpp"

namespace ravit {

/// Binary parameter container. All integers and floats are little-endian.
///
///   char[4]   magic "RAVT"
///   u32       format version
///   u32       number of config fields N
///   u32 x N   config fields
///   u32       number of tensors T
///   T times:
///     u16     name length, then the name bytes
///     u8      rank R, then u32 x R dims
///     f64 x product(dims) payload, row-major
struct Checkpoint {
  static constexpr std::array<char, 4> kMagic{'R', 'A', 'V', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Tensor tensor;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::uint32_t version = kVersion;
  std::vector<std::uint32_t> config;
  std::vector<Entry> tensors;

  const Tensor* find(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws FormatError with a byte offset on malformed input.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ravit

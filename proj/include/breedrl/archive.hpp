#pragma once

// Versioned binary container of named, shaped tensors. Layout (all integers
// little-endian):
//
//   magic      8 bytes, caller-chosen
//   version    u32
//   count      u32
//   count x {
//     name_len u32, name bytes (UTF-8, no terminator)
//     dtype    u8   (0 = f64, 1 = u64, 2 = u8)
//     rank     u32, dims u64[rank]
//     payload  product(dims) elements of dtype, little-endian
//   }
//
// See docs/file_formats.md for the tensors stored by policy checkpoints and
// trainer state files.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace breedrl {

struct ArchiveTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::variant<std::vector<double>, std::vector<std::uint64_t>, std::vector<std::uint8_t>> data;

  [[nodiscard]] std::uint64_t element_count() const;
  friend bool operator==(const ArchiveTensor&, const ArchiveTensor&) = default;
};

using ArchiveMagic = std::array<char, 8>;

void write_archive(const std::filesystem::path& path, const ArchiveMagic& magic,
                   std::uint32_t version, const std::vector<ArchiveTensor>& tensors);

// Throws ParseError on a magic/version mismatch or truncated file.
std::vector<ArchiveTensor> read_archive(const std::filesystem::path& path,
                                        const ArchiveMagic& magic, std::uint32_t version);

// Lookup helpers; throw ParseError naming the missing or mistyped tensor.
const ArchiveTensor& find_tensor(const std::vector<ArchiveTensor>& tensors,
                                 const std::string& name);
const std::vector<double>& tensor_f64(const std::vector<ArchiveTensor>& tensors,
                                      const std::string& name);
const std::vector<std::uint64_t>& tensor_u64(const std::vector<ArchiveTensor>& tensors,
                                             const std::string& name);
const std::vector<std::uint8_t>& tensor_u8(const std::vector<ArchiveTensor>& tensors,
                                           const std::string& name);

}  // namespace breedrl

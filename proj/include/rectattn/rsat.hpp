#pragma once

// RSAT tensor files:
//   "RSAT" | version u8 = 1 | dtype u8 (0 = f32, 1 = f64) | rank u8 |
//   rank x u64 dims (little-endian) | row-major little-endian data

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rectattn/matrix.hpp"

namespace rectattn {

inline constexpr std::uint8_t kRsatVersion = 1;

struct RsatTensor {
  Precision dtype = Precision::Double;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // widened to double regardless of dtype

  std::uint64_t element_count() const;
};

std::string encode_rsat(const RsatTensor& tensor);
RsatTensor decode_rsat(std::string_view bytes);

template <typename T>
RsatTensor to_rsat(const Matrix<T>& m);

/// Rank-2 tensors map directly; rank-1 tensors become a single column.
template <typename T>
Matrix<T> matrix_from_rsat(const RsatTensor& tensor);

RsatTensor read_rsat(const std::filesystem::path& path);
void write_rsat(const std::filesystem::path& path, const RsatTensor& tensor);

template <typename T>
void write_matrix(const std::filesystem::path& path, const Matrix<T>& m)
{
  write_rsat(path, to_rsat(m));
}

template <typename T>
Matrix<T> read_matrix(const std::filesystem::path& path)
{
  return matrix_from_rsat<T>(read_rsat(path));
}

/// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace rectattn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qigen {

enum class ZeroMode : std::uint8_t {
  kReal32 = 0,     // zero-point stored as a 32-bit float
  kQuantized = 1,  // zero-point stored as a b-bit integer code
};

// Group size 0 means one group per column.
inline constexpr std::size_t kFullColumn = 0;

struct QuantConfig {
  int bits = 4;
  std::size_t group_size = kFullColumn;
  ZeroMode zero_mode = ZeroMode::kReal32;

  bool full_column() const { return group_size == kFullColumn; }

  // Rows per group for an n-row matrix.
  std::size_t group_rows(std::size_t n) const { return full_column() ? n : group_size; }

  std::size_t groups(std::size_t n) const;

  int max_code() const { return (1 << bits) - 1; }

  // Throws ConfigError unless bits is 2, 3 or 4.
  void validate() const;

  // Additionally checks that the groups tile an n-row column.
  void validate_rows(std::size_t n) const;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

// Step size and zero-point of one group. Reconstruction is scale * (code - zero).
struct GroupParams {
  float scale = 1.0F;
  float zero = 0.0F;

  friend bool operator==(const GroupParams&, const GroupParams&) = default;
};

struct QuantizedGroup {
  std::vector<std::uint8_t> codes;
  GroupParams params;
};

// Codes of an n x m matrix, stored column-major (column j occupies codes[j*n, (j+1)*n)).
// Params are stored group-row major: params[g * m + j] belongs to group g of column j.
struct CodeMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  QuantConfig config;
  std::vector<std::uint8_t> codes;
  std::vector<GroupParams> params;

  std::uint8_t code(std::size_t row, std::size_t col) const { return codes[col * n + row]; }
  const GroupParams& param(std::size_t row, std::size_t col) const {
    return params[(row / config.group_rows(n)) * m + col];
  }

  // Throws ConfigError when sizes or code ranges are inconsistent.
  void validate() const;
};

// Round half away from zero.
float round_nearest(float v);

QuantizedGroup quantize_group(std::span<const float> x, int bits, ZeroMode zero_mode);

std::vector<float> dequantize(std::span<const std::uint8_t> codes, const GroupParams& params);

// W is n x m in row-major order (W[i * m + j]); y = xW contracts over the n rows.
CodeMatrix quantize_matrix(std::span<const float> w, std::size_t n, std::size_t m,
                           const QuantConfig& config);

// Row-major n x m reconstruction.
std::vector<float> dequantize_matrix(const CodeMatrix& cm);

}  // namespace qigen

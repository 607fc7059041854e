// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qigen/kernel_abi.hpp"
#include "qigen/perfmodel.hpp"
#include "qigen/quant.hpp"

namespace qigen {

// Packs b-bit codes into 32-bit words. For 2 and 4 bits code j of a word sits at bits
// [j*b, (j+1)*b); for 3 bits every 32 codes form a little-endian 96-bit stream over three words.
std::vector<std::uint32_t> pack_words(std::span<const std::uint8_t> codes, int bits);
std::vector<std::uint8_t> unpack_words(std::span<const std::uint32_t> words, int bits);

// Z-curve index: bit i of row_block goes to bit 2i, bit i of col_block to bit 2i+1.
std::uint64_t morton_index(std::uint32_t row_block, std::uint32_t col_block);

enum class Layout : std::uint8_t {
  kRowSequential = 0,  // one block covering the whole matrix
  kZCurve = 1,         // m_b x t_b blocks in Morton order
};

// Bit-packed weights plus their group parameters.
struct PackedMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  QuantConfig config;
  TilePlan plan;
  Layout layout = Layout::kZCurve;
  std::vector<std::uint32_t> words;
  std::vector<float> scales;  // groups x m
  std::vector<float> zeros;   // groups x m, code units

  std::size_t groups() const { return config.groups(n); }

  // Blocks in storage order.
  std::vector<BlockDesc> blocks() const;

  // Throws ConfigError when dimensions, plan, layout and buffers disagree.
  void validate() const;

  friend bool operator==(const PackedMatrix&, const PackedMatrix&) = default;
};

// Block grid in storage order (row-block, col-block pairs sorted by Morton index).
std::vector<std::pair<std::uint32_t, std::uint32_t>> block_order(std::size_t row_blocks, std::size_t col_blocks);

PackedMatrix lay_out_blocks(const CodeMatrix& cm, const TilePlan& plan, Layout layout = Layout::kZCurve);

// Inverse of lay_out_blocks.
CodeMatrix unlay_blocks(const PackedMatrix& pm);

// Code of element (row, col), read through the block table.
std::uint8_t code_at(const PackedMatrix& pm, std::span<const BlockDesc> blocks, std::size_t row, std::size_t col);

// Payload bit accounting: weights + 32-bit scales + zero-points.
struct PayloadBits {
  std::uint64_t weights = 0;
  std::uint64_t scales = 0;
  std::uint64_t zeros = 0;
  std::uint64_t total() const { return weights + scales + zeros; }
};

PayloadBits payload_bits(int bits, std::size_t n, std::size_t m, std::size_t groups, int zero_bits);
PayloadBits payload_bits(const PackedMatrix& pm);

}  // namespace qigen

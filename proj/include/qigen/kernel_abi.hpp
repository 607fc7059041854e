// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace qigen {

// One cache block of packed weights. Word (unit q, word w, column c) of the block lives at
// words[word_offset + (q * words_per_unit + w) * ld + c].
struct BlockDesc {
  std::size_t word_offset = 0;
  std::size_t ld = 0;
  std::size_t row0 = 0;
  std::size_t rows = 0;
  std::size_t col0 = 0;
  std::size_t cols = 0;
};

// Calling convention shared by every generated qGEMV kernel.
//   scales, zeros: groups x m, group-row major (zeros as floats in code units)
//   sums:          [sum(x), per-group sums of x ...]
//   y:             length m; the kernel writes every column covered by `blocks`
// Blocks are visited in the given order; each column block must list its row blocks
// in increasing row order.
using KernelFn = void (*)(const std::uint32_t* words, const float* scales, const float* zeros,
                          const float* x, const float* sums, float* y, std::size_t n, std::size_t m,
                          const BlockDesc* blocks, std::size_t block_count);

struct KernelEntry {
  int bits;
  std::size_t group_size;  // 0 = full column
  int m_u;
  int t_u;
  int lanes;
  const char* name;
  KernelFn fn;
};

}  // namespace qigen

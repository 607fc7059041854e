// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qigen/kernel_abi.hpp"
#include "qigen/pack.hpp"

namespace qigen {

// Input-vector sums used by the zero-point correction: total is sum(x), per_group the sum of
// each g-row slice.
struct InputSums {
  float total = 0.0F;
  std::vector<float> per_group;
};

InputSums input_sums(std::span<const float> x, std::size_t group_size);

// Unfactored oracle: y_j = sum_i x_i * s_ij * (code_ij - z_ij), accumulated in double.
std::vector<float> qgemv_reference(const PackedMatrix& pm, std::span<const float> x);

// Generated kernel for the matrix's (bits, grouping, tile, lanes); throws ConfigError when
// the build carries none.
const KernelEntry& find_kernel(int bits, std::size_t group_size, int m_u, int t_u, int lanes = 8);
const KernelEntry& find_kernel(const PackedMatrix& pm, int lanes = 8);

// Optimized product through the generated kernel. Column blocks are split into contiguous
// ranges, one per thread; the result does not depend on the thread count.
std::vector<float> qgemv(const PackedMatrix& pm, std::span<const float> x, const InputSums& sums,
                         int threads = 1);
std::vector<float> qgemv(const PackedMatrix& pm, std::span<const float> x, int threads = 1);

// Same, through an explicit kernel entry (used for cross-kernel checks).
std::vector<float> qgemv_with(const KernelEntry& kernel, const PackedMatrix& pm, std::span<const float> x,
                              const InputSums& sums, int threads = 1);

struct MemoryReport {
  PayloadBits payload;
  std::uint64_t dense_bits = 0;  // 32 * n * m
  double ratio = 0.0;            // dense_bits / payload total
};

MemoryReport memory_report(const PackedMatrix& pm);
MemoryReport memory_report(int bits, std::size_t n, std::size_t m, std::size_t groups, int zero_bits);

}  // namespace qigen

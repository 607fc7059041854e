// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qigen/perfmodel.hpp"
#include "qigen/quant.hpp"

namespace qigen {

struct KernelDescriptor {
  int bits = 4;
  std::size_t group_size = kFullColumn;
  int m_u = 1;
  int t_u = 1;
  int lanes = 8;
  int vregs = 16;  // register budget the tile must respect
  std::string name;

  bool full_column() const { return group_size == kFullColumn; }
  void validate() const;
};

// q{bits}_{fc|g<size>}_{m_u}x{t_u}, with an _l<lanes> suffix for lane counts other than 8.
std::string kernel_name(int bits, std::size_t group_size, int m_u, int t_u, int lanes = 8);

KernelDescriptor make_descriptor(int bits, std::size_t group_size, int m_u, int t_u, int lanes = 8,
                                 int vregs = 16);

struct KernelSource {
  std::string source_text;
  std::string entry_symbol;
  std::string file_name;  // <name>.gen.cpp
  KernelDescriptor descriptor;
};

// Alg.-2-style unpack routine: shift, mask and convert every code of one packed unit.
std::string generate_unpack(int bits, int lanes);

// Register-tiled inner kernel over one column panel of t_u vectors.
std::string generate_micro_kernel(const KernelDescriptor& desc);

// Complete kernel translation unit following the shared calling convention.
KernelSource generate_qgemv(const KernelDescriptor& desc);

// Translation unit that maps descriptors to the generated entry points.
std::string generate_registry(std::span<const KernelDescriptor> descs);

// JSON manifest listing every kernel and its descriptor fields.
std::string generate_manifest(std::span<const KernelDescriptor> descs);

// Writes every kernel source, the registry and manifest.json into dir; returns written paths.
std::vector<std::string> write_kernel_set(std::span<const KernelDescriptor> descs, const std::string& dir,
                                          bool with_registry = true);

}  // namespace qigen

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "qigen/kernel_abi.hpp"

namespace qigen::kernels {

// Every kernel compiled into this build (generated at build time).
std::span<const KernelEntry> registry();

}  // namespace qigen::kernels

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qigen/quant.hpp"

namespace qigen {

// Target description. l1_bits is the L1 data-cache capacity in bits, vregs the number of
// architectural vector registers, lanes the 32-bit elements per vector register.
struct HardwareSpec {
  std::uint64_t l1_bits = 32ULL * 1024 * 8;
  int vregs = 16;
  int lanes = 8;
  int threads = 1;

  void validate() const;

  friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

// Parses "key = value" lines (keys l1_bits, vregs, lanes, threads; '#' starts a comment).
// Missing keys keep their defaults.
HardwareSpec parse_hardware_spec(const std::string& text);
HardwareSpec load_hardware_spec(const std::string& path);

struct RegisterTile {
  int m_u = 1;  // input-broadcast registers per step
  int t_u = 1;  // output accumulator registers

  friend bool operator==(const RegisterTile&, const RegisterTile&) = default;
};

struct CacheBlock {
  std::size_t m_b = 0;  // input rows per block
  std::size_t t_b = 0;  // output columns per block

  friend bool operator==(const CacheBlock&, const CacheBlock&) = default;
};

struct TilePlan {
  int m_u = 1;
  int t_u = 1;
  std::size_t m_b = 1;
  std::size_t t_b = 1;

  RegisterTile tile() const { return {m_u, t_u}; }
  friend bool operator==(const TilePlan&, const TilePlan&) = default;
};

// Vector registers a tile keeps live: x broadcasts, weight vectors and accumulators.
constexpr long register_pressure(long m_u, long t_u) { return m_u + m_u * t_u + t_u; }

// Bits a cache block keeps resident: input slice, b-bit weights, output slice.
constexpr std::uint64_t block_footprint_bits(std::uint64_t m_b, std::uint64_t t_b, int bits) {
  return 32 * m_b + static_cast<std::uint64_t>(bits) * m_b * t_b + 32 * t_b;
}

// Optional microbenchmark: larger is better.
using TileRanker = std::function<double(const RegisterTile&)>;

// Every (m_u, t_u) whose register pressure fits in hw.vregs, m_u-major order.
std::vector<RegisterTile> feasible_register_tiles(const HardwareSpec& hw);

RegisterTile select_register_tile(const HardwareSpec& hw, const TileRanker& ranker = {});

// Largest-footprint block whose sides are multiples of (row_step, col_step), at most the
// matrix dims (but never smaller than one step), that fits in L1.
// Ties prefer the squarest block, then the larger t_b, then the larger m_b.
CacheBlock select_cache_block(const HardwareSpec& hw, int bits, std::size_t row_step,
                              std::size_t col_step, std::size_t n, std::size_t m);

// Rows covered by one register-tile step of the generated kernels (units of packed codes).
std::size_t codes_per_unit(int bits);
std::size_t words_per_unit(int bits);

// Execution footprint of the register tile, the granularity the cache block is chosen in.
std::pair<std::size_t, std::size_t> tile_granularity(const RegisterTile& tile, const QuantConfig& config,
                                                     int lanes, std::size_t n);

TilePlan plan(const HardwareSpec& hw, const QuantConfig& config, std::size_t n, std::size_t m,
              const TileRanker& ranker = {});

// Slack of each model constraint (>= 0 means satisfied).
struct PlanCheck {
  long register_slack = 0;
  std::int64_t cache_slack = 0;
  bool rows_divisible = false;
  bool cols_divisible = false;

  bool ok() const { return register_slack >= 0 && cache_slack >= 0 && rows_divisible && cols_divisible; }
};

PlanCheck check_plan(const TilePlan& plan, const HardwareSpec& hw, int bits);

}  // namespace qigen

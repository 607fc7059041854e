// SPDX-License-Identifier: Apache-2.0
#include "qigen/perfmodel.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "qigen/error.hpp"

namespace qigen {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_positive(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("hardware spec: '" + key + "' needs a positive integer, got '" + value + "'");
  }
  return std::strtoull(value.c_str(), nullptr, 10);
}

int to_int(const std::string& key, std::uint64_t v) {
  if (v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw ConfigError("hardware spec: '" + key + "' out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

void HardwareSpec::validate() const {
  if (vregs < 1 || lanes < 1 || threads < 1) {
    throw ConfigError("hardware spec: vregs, lanes and threads must be >= 1");
  }
  if (l1_bits < (1ULL << 12)) throw ConfigError("hardware spec: l1_bits must be >= 4096");
}

HardwareSpec parse_hardware_spec(const std::string& text) {
  HardwareSpec hw;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("hardware spec line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::uint64_t v = parse_positive(key, trim(line.substr(eq + 1)));
    if (key == "l1_bits") {
      hw.l1_bits = v;
    } else if (key == "vregs") {
      hw.vregs = to_int(key, v);
    } else if (key == "lanes") {
      hw.lanes = to_int(key, v);
    } else if (key == "threads") {
      hw.threads = to_int(key, v);
    } else {
      throw ConfigError("hardware spec: unknown key '" + key + "'");
    }
  }
  hw.validate();
  return hw;
}

HardwareSpec load_hardware_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open hardware spec '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_hardware_spec(ss.str());
}

std::vector<RegisterTile> feasible_register_tiles(const HardwareSpec& hw) {
  std::vector<RegisterTile> out;
  for (int mu = 1; register_pressure(mu, 1) <= hw.vregs; ++mu) {
    for (int tu = 1; register_pressure(mu, tu) <= hw.vregs; ++tu) out.push_back({mu, tu});
  }
  return out;
}

RegisterTile select_register_tile(const HardwareSpec& hw, const TileRanker& ranker) {
  const std::vector<RegisterTile> tiles = feasible_register_tiles(hw);
  if (tiles.empty()) throw ConfigError("no register tile fits in fewer than 3 vector registers");
  auto better_default = [](const RegisterTile& a, const RegisterTile& b) {
    const long pa = static_cast<long>(a.m_u) * a.t_u;
    const long pb = static_cast<long>(b.m_u) * b.t_u;
    if (pa != pb) return pa > pb;
    if (a.t_u != b.t_u) return a.t_u > b.t_u;
    return a.m_u > b.m_u;
  };
  RegisterTile best = tiles.front();
  double best_score = ranker ? ranker(best) : 0.0;
  for (std::size_t i = 1; i < tiles.size(); ++i) {
    const RegisterTile& cand = tiles[i];
    if (ranker) {
      const double score = ranker(cand);
      if (score > best_score || (score == best_score && better_default(cand, best))) {
        best = cand;
        best_score = score;
      }
    } else if (better_default(cand, best)) {
      best = cand;
    }
  }
  return best;
}

CacheBlock select_cache_block(const HardwareSpec& hw, int bits, std::size_t row_step,
                              std::size_t col_step, std::size_t n, std::size_t m) {
  if (row_step == 0 || col_step == 0) throw ConfigError("tile steps must be positive");
  const std::uint64_t gamma = hw.l1_bits;
  if (block_footprint_bits(row_step, col_step, bits) > gamma) {
    throw ConfigError("minimal cache block " + std::to_string(row_step) + "x" + std::to_string(col_step) +
                      " exceeds the L1 capacity of " + std::to_string(gamma) + " bits");
  }
  const std::size_t row_cap = std::max(row_step, n / row_step * row_step);
  const std::size_t col_cap = std::max(col_step, m / col_step * col_step);

  CacheBlock best;
  std::uint64_t best_obj = 0;
  auto dist = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };

  for (std::size_t mb = row_step; mb <= row_cap; mb += row_step) {
    const std::uint64_t fixed = 32ULL * mb;
    const std::uint64_t per_col = static_cast<std::uint64_t>(bits) * mb + 32;
    if (fixed + per_col * col_step > gamma) break;
    std::uint64_t tb = (gamma - fixed) / per_col / col_step * col_step;
    tb = std::min<std::uint64_t>(tb, col_cap);
    const std::uint64_t obj = block_footprint_bits(mb, tb, bits);
    const CacheBlock cand{mb, static_cast<std::size_t>(tb)};
    bool take = best.m_b == 0 || obj > best_obj;
    if (!take && obj == best_obj) {
      const auto dc = dist(cand.m_b, cand.t_b);
      const auto db = dist(best.m_b, best.t_b);
      take = dc < db || (dc == db && (cand.t_b > best.t_b || (cand.t_b == best.t_b && cand.m_b > best.m_b)));
    }
    if (take) {
      best = cand;
      best_obj = obj;
    }
  }
  return best;
}

std::size_t codes_per_unit(int bits) { return bits == 3 ? 32 : static_cast<std::size_t>(32 / bits); }

std::size_t words_per_unit(int bits) { return bits == 3 ? 3 : 1; }

std::pair<std::size_t, std::size_t> tile_granularity(const RegisterTile& tile, const QuantConfig& config,
                                                     int lanes, std::size_t n) {
  std::size_t rows = static_cast<std::size_t>(tile.m_u) * codes_per_unit(config.bits);
  if (!config.full_column()) {
    // Blocks must start on group boundaries; a single group means a single row block.
    rows = config.group_size < n ? std::lcm(rows, config.group_size) : (n + rows - 1) / rows * rows;
  }
  return {rows, static_cast<std::size_t>(tile.t_u) * static_cast<std::size_t>(lanes)};
}

TilePlan plan(const HardwareSpec& hw, const QuantConfig& config, std::size_t n, std::size_t m,
              const TileRanker& ranker) {
  hw.validate();
  config.validate();
  if (n == 0 || m == 0) throw ConfigError("cannot plan an empty matrix");
  const RegisterTile tile = select_register_tile(hw, ranker);
  const auto [rs, cs] = tile_granularity(tile, config, hw.lanes, n);
  const CacheBlock block = select_cache_block(hw, config.bits, rs, cs, n, m);
  return {tile.m_u, tile.t_u, block.m_b, block.t_b};
}

PlanCheck check_plan(const TilePlan& p, const HardwareSpec& hw, int bits) {
  PlanCheck c;
  c.register_slack = hw.vregs - register_pressure(p.m_u, p.t_u);
  c.cache_slack = static_cast<std::int64_t>(hw.l1_bits) -
                  static_cast<std::int64_t>(block_footprint_bits(p.m_b, p.t_b, bits));
  c.rows_divisible = p.m_u > 0 && p.m_b % static_cast<std::size_t>(p.m_u) == 0;
  c.cols_divisible = p.t_u > 0 && p.t_b % static_cast<std::size_t>(p.t_u) == 0;
  return c;
}

}  // namespace qigen

// SPDX-License-Identifier: Apache-2.0
#include "qigen/pack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qigen/error.hpp"

namespace qigen {

std::vector<std::uint32_t> pack_words(std::span<const std::uint8_t> codes, int bits) {
  QuantConfig{bits}.validate();
  const std::size_t per_unit = codes_per_unit(bits);
  if (codes.size() % per_unit != 0) {
    throw ConfigError("code count " + std::to_string(codes.size()) + " is not a multiple of " +
                      std::to_string(per_unit) + " for " + std::to_string(bits) + "-bit packing");
  }
  const unsigned mask = (1U << bits) - 1;
  std::vector<std::uint32_t> words(codes.size() * static_cast<std::size_t>(bits) / 32, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const unsigned c = codes[i];
    if (c > mask) throw ConfigError("code " + std::to_string(c) + " does not fit in " + std::to_string(bits) + " bits");
    const std::size_t bit = i * static_cast<std::size_t>(bits);
    const std::size_t w = bit / 32;
    const unsigned shift = bit % 32;
    words[w] |= static_cast<std::uint32_t>(c) << shift;
    if (shift + static_cast<unsigned>(bits) > 32) words[w + 1] |= static_cast<std::uint32_t>(c) >> (32 - shift);
  }
  return words;
}

std::vector<std::uint8_t> unpack_words(std::span<const std::uint32_t> words, int bits) {
  QuantConfig{bits}.validate();
  if ((words.size() * 32) % static_cast<std::size_t>(bits) != 0 ||
      words.size() % words_per_unit(bits) != 0) {
    throw ConfigError("word count does not hold a whole number of codes");
  }
  const std::uint32_t mask = (1U << bits) - 1;
  const std::size_t count = words.size() * 32 / static_cast<std::size_t>(bits);
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t bit = i * static_cast<std::size_t>(bits);
    const std::size_t w = bit / 32;
    const unsigned shift = bit % 32;
    std::uint32_t v = words[w] >> shift;
    if (shift + static_cast<unsigned>(bits) > 32) v |= words[w + 1] << (32 - shift);
    codes[i] = static_cast<std::uint8_t>(v & mask);
  }
  return codes;
}

std::uint64_t morton_index(std::uint32_t row_block, std::uint32_t col_block) {
  auto spread = [](std::uint64_t v) {
    v &= 0xFFFFFFFFULL;
    v = (v | (v << 16)) & 0x0000FFFF0000FFFFULL;
    v = (v | (v << 8)) & 0x00FF00FF00FF00FFULL;
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0FULL;
    v = (v | (v << 2)) & 0x3333333333333333ULL;
    v = (v | (v << 1)) & 0x5555555555555555ULL;
    return v;
  };
  return spread(row_block) | (spread(col_block) << 1);
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> block_order(std::size_t row_blocks, std::size_t col_blocks) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order;
  order.reserve(row_blocks * col_blocks);
  for (std::size_t c = 0; c < col_blocks; ++c) {
    for (std::size_t r = 0; r < row_blocks; ++r) {
      order.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
    }
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return morton_index(a.first, a.second) < morton_index(b.first, b.second);
  });
  return order;
}

namespace {

void check_plan_for_layout(const QuantConfig& config, std::size_t n, const TilePlan& plan, Layout layout) {
  if (plan.m_u < 1 || plan.t_u < 1 || plan.m_b == 0 || plan.t_b == 0) {
    throw ConfigError("tile plan has non-positive sizes");
  }
  if (layout != Layout::kZCurve) return;
  const std::size_t unit = codes_per_unit(config.bits);
  if (plan.m_b % unit != 0) {
    throw ConfigError("block rows m_b = " + std::to_string(plan.m_b) + " must be a multiple of the " +
                      std::to_string(unit) + "-row packing unit");
  }
  if (!config.full_column() && plan.m_b < n && plan.m_b % config.group_size != 0) {
    throw ConfigError("block rows m_b = " + std::to_string(plan.m_b) + " split groups of " +
                      std::to_string(config.group_size) + " rows");
  }
}

void check_packable_rows(const QuantConfig& config, std::size_t n) {
  const std::size_t unit = codes_per_unit(config.bits);
  if (n % unit != 0) {
    throw ConfigError("n = " + std::to_string(n) + " must be a multiple of " + std::to_string(unit) +
                      " for " + std::to_string(config.bits) + "-bit packing");
  }
}

}  // namespace

std::vector<BlockDesc> PackedMatrix::blocks() const {
  std::vector<BlockDesc> out;
  const std::size_t wpu = words_per_unit(config.bits);
  const std::size_t unit = codes_per_unit(config.bits);
  if (layout == Layout::kRowSequential) {
    // A plain word matrix; split into column panels so work can still be partitioned.
    const std::size_t width = std::max<std::size_t>(plan.t_b, 1);
    for (std::size_t c0 = 0; c0 < m; c0 += width) {
      out.push_back({c0, m, 0, n, c0, std::min(width, m - c0)});
    }
    return out;
  }
  const std::size_t rb = (n + plan.m_b - 1) / plan.m_b;
  const std::size_t cb = (m + plan.t_b - 1) / plan.t_b;
  std::size_t offset = 0;
  for (auto [r, c] : block_order(rb, cb)) {
    BlockDesc d;
    d.row0 = r * plan.m_b;
    d.rows = std::min(plan.m_b, n - d.row0);
    d.col0 = c * plan.t_b;
    d.cols = std::min(plan.t_b, m - d.col0);
    d.ld = d.cols;
    d.word_offset = offset;
    offset += d.rows / unit * wpu * d.cols;
    out.push_back(d);
  }
  return out;
}

void PackedMatrix::validate() const {
  config.validate_rows(n);
  check_packable_rows(config, n);
  if (m == 0) throw ConfigError("matrix has no columns");
  check_plan_for_layout(config, n, plan, layout);
  if (words.size() != n * static_cast<std::size_t>(config.bits) / 32 * m) {
    throw ConfigError("packed word count does not match n * m * bits / 32");
  }
  const std::size_t params = groups() * m;
  if (scales.size() != params || zeros.size() != params) {
    throw ConfigError("scale/zero count does not match groups * m");
  }
  if (config.zero_mode == ZeroMode::kQuantized) {
    for (float z : zeros) {
      if (z < 0.0F || z > static_cast<float>(config.max_code()) || z != std::floor(z)) {
        throw ConfigError("quantized zero-point outside [0, 2^bits)");
      }
    }
  }
}

PackedMatrix lay_out_blocks(const CodeMatrix& cm, const TilePlan& plan, Layout layout) {
  cm.validate();
  check_packable_rows(cm.config, cm.n);
  check_plan_for_layout(cm.config, cm.n, plan, layout);

  PackedMatrix pm;
  pm.n = cm.n;
  pm.m = cm.m;
  pm.config = cm.config;
  pm.plan = plan;
  pm.layout = layout;
  pm.scales.resize(cm.params.size());
  pm.zeros.resize(cm.params.size());
  for (std::size_t i = 0; i < cm.params.size(); ++i) {
    pm.scales[i] = cm.params[i].scale;
    pm.zeros[i] = cm.params[i].zero;
  }

  // Column-wise packing first: word-row p of column j holds the codes of unit p.
  const std::size_t word_rows = cm.n * static_cast<std::size_t>(cm.config.bits) / 32;
  std::vector<std::uint32_t> columns(word_rows * cm.m);
  for (std::size_t j = 0; j < cm.m; ++j) {
    auto packed = pack_words(std::span(cm.codes).subspan(j * cm.n, cm.n), cm.config.bits);
    std::copy(packed.begin(), packed.end(), columns.begin() + static_cast<std::ptrdiff_t>(j * word_rows));
  }

  pm.words.assign(word_rows * cm.m, 0);
  const std::size_t wpu = words_per_unit(cm.config.bits);
  const std::size_t unit = codes_per_unit(cm.config.bits);
  for (const auto& b : pm.blocks()) {
    const std::size_t p0 = b.row0 / unit * wpu;
    const std::size_t prows = b.rows / unit * wpu;
    for (std::size_t p = 0; p < prows; ++p) {
      for (std::size_t c = 0; c < b.cols; ++c) {
        pm.words[b.word_offset + p * b.ld + c] = columns[(b.col0 + c) * word_rows + p0 + p];
      }
    }
  }
  return pm;
}

CodeMatrix unlay_blocks(const PackedMatrix& pm) {
  pm.validate();
  CodeMatrix cm;
  cm.n = pm.n;
  cm.m = pm.m;
  cm.config = pm.config;
  cm.codes.resize(pm.n * pm.m);
  cm.params.resize(pm.scales.size());
  for (std::size_t i = 0; i < pm.scales.size(); ++i) cm.params[i] = {pm.scales[i], pm.zeros[i]};

  const int bits = pm.config.bits;
  const std::size_t wpu = words_per_unit(bits);
  const std::size_t unit = codes_per_unit(bits);
  std::vector<std::uint32_t> unit_words(wpu);
  for (const auto& b : pm.blocks()) {
    for (std::size_t q = 0; q < b.rows / unit; ++q) {
      for (std::size_t c = 0; c < b.cols; ++c) {
        for (std::size_t w = 0; w < wpu; ++w) unit_words[w] = pm.words[b.word_offset + (q * wpu + w) * b.ld + c];
        const auto codes = unpack_words(unit_words, bits);
        std::copy(codes.begin(), codes.end(),
                  cm.codes.begin() + static_cast<std::ptrdiff_t>((b.col0 + c) * pm.n + b.row0 + q * unit));
      }
    }
  }
  return cm;
}

std::uint8_t code_at(const PackedMatrix& pm, std::span<const BlockDesc> blocks, std::size_t row, std::size_t col) {
  const int bits = pm.config.bits;
  const std::size_t wpu = words_per_unit(bits);
  const std::size_t unit = codes_per_unit(bits);
  for (const auto& b : blocks) {
    if (row < b.row0 || row >= b.row0 + b.rows || col < b.col0 || col >= b.col0 + b.cols) continue;
    const std::size_t local = row - b.row0;
    const std::size_t q = local / unit;
    const std::size_t bit = (local % unit) * static_cast<std::size_t>(bits);
    const std::size_t base = b.word_offset + q * wpu * b.ld + (col - b.col0);
    const std::size_t w = bit / 32;
    const unsigned shift = bit % 32;
    std::uint32_t v = pm.words[base + w * b.ld] >> shift;
    if (shift + static_cast<unsigned>(bits) > 32) v |= pm.words[base + (w + 1) * b.ld] << (32 - shift);
    return static_cast<std::uint8_t>(v & ((1U << bits) - 1));
  }
  throw ConfigError("element outside the block table");
}

PayloadBits payload_bits(int bits, std::size_t n, std::size_t m, std::size_t groups, int zero_bits) {
  PayloadBits p;
  p.weights = static_cast<std::uint64_t>(bits) * n * m;
  p.scales = 32ULL * groups * m;
  p.zeros = static_cast<std::uint64_t>(zero_bits) * groups * m;
  return p;
}

PayloadBits payload_bits(const PackedMatrix& pm) {
  const int zbits = pm.config.zero_mode == ZeroMode::kQuantized ? pm.config.bits : 32;
  return payload_bits(pm.config.bits, pm.n, pm.m, pm.groups(), zbits);
}

}  // namespace qigen

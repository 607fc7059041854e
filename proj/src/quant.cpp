// SPDX-License-Identifier: Apache-2.0
#include "qigen/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qigen/error.hpp"

namespace qigen {

std::size_t QuantConfig::groups(std::size_t n) const {
  if (full_column()) return 1;
  return (n + group_size - 1) / group_size;
}

void QuantConfig::validate() const {
  if (bits != 2 && bits != 3 && bits != 4) {
    throw ConfigError("bits must be 2, 3 or 4 (got " + std::to_string(bits) + ")");
  }
  if (zero_mode != ZeroMode::kReal32 && zero_mode != ZeroMode::kQuantized) {
    throw ConfigError("unknown zero mode");
  }
}

void QuantConfig::validate_rows(std::size_t n) const {
  validate();
  if (n == 0) throw ConfigError("matrix has no rows");
  if (!full_column() && n % group_size != 0) {
    throw ConfigError("group size " + std::to_string(group_size) + " does not divide n = " +
                      std::to_string(n));
  }
}

void CodeMatrix::validate() const {
  config.validate_rows(n);
  if (codes.size() != n * m) throw ConfigError("code count does not match n * m");
  if (params.size() != config.groups(n) * m) throw ConfigError("param count does not match groups * m");
  const int mask = config.max_code();
  for (auto c : codes) {
    if (c > mask) throw ConfigError("code exceeds 2^bits - 1");
  }
}

float round_nearest(float v) { return std::round(v); }

QuantizedGroup quantize_group(std::span<const float> x, int bits, ZeroMode zero_mode) {
  if (x.empty()) throw ConfigError("cannot quantize an empty group");
  QuantConfig{bits, kFullColumn, zero_mode}.validate();
  for (float v : x) {
    if (!std::isfinite(v)) throw ConfigError("non-finite value in quantization input");
  }

  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const float lo = *lo_it;
  const float hi = *hi_it;
  const int max_code = (1 << bits) - 1;

  GroupParams p;
  if (hi == lo) {
    p.scale = 1.0F;
    p.zero = -lo;
  } else {
    p.scale = (hi - lo) / static_cast<float>(max_code);
    p.zero = -(lo / p.scale);
  }
  if (zero_mode == ZeroMode::kQuantized) {
    p.zero = std::clamp(round_nearest(p.zero), 0.0F, static_cast<float>(max_code));
  }

  QuantizedGroup out;
  out.params = p;
  out.codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float q = round_nearest(x[i] / p.scale + p.zero);
    out.codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0F, static_cast<float>(max_code)));
  }
  return out;
}

std::vector<float> dequantize(std::span<const std::uint8_t> codes, const GroupParams& params) {
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = params.scale * (static_cast<float>(codes[i]) - params.zero);
  }
  return out;
}

CodeMatrix quantize_matrix(std::span<const float> w, std::size_t n, std::size_t m,
                           const QuantConfig& config) {
  config.validate_rows(n);
  if (m == 0) throw ConfigError("matrix has no columns");
  if (w.size() != n * m) throw ConfigError("weight buffer size does not match n * m");

  CodeMatrix cm;
  cm.n = n;
  cm.m = m;
  cm.config = config;
  cm.codes.resize(n * m);
  const std::size_t rows = config.group_rows(n);
  const std::size_t groups = config.groups(n);
  cm.params.resize(groups * m);

  std::vector<float> column(rows);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t r = 0; r < rows; ++r) column[r] = w[(g * rows + r) * m + j];
      auto q = quantize_group(column, config.bits, config.zero_mode);
      std::copy(q.codes.begin(), q.codes.end(), cm.codes.begin() + static_cast<std::ptrdiff_t>(j * n + g * rows));
      cm.params[g * m + j] = q.params;
    }
  }
  return cm;
}

std::vector<float> dequantize_matrix(const CodeMatrix& cm) {
  std::vector<float> out(cm.n * cm.m);
  for (std::size_t j = 0; j < cm.m; ++j) {
    for (std::size_t i = 0; i < cm.n; ++i) {
      const auto& p = cm.param(i, j);
      out[i * cm.m + j] = p.scale * (static_cast<float>(cm.code(i, j)) - p.zero);
    }
  }
  return out;
}

}  // namespace qigen

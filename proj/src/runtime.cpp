// SPDX-License-Identifier: Apache-2.0
#include "qigen/runtime.hpp"

#include <algorithm>
#include <string>
#include <thread>

#include "qigen/error.hpp"
#include "qigen/kernels.hpp"

namespace qigen {

InputSums input_sums(std::span<const float> x, std::size_t group_size) {
  if (x.empty()) throw ConfigError("input vector is empty");
  const std::size_t g = group_size == kFullColumn ? x.size() : group_size;
  if (x.size() % g != 0) {
    throw ConfigError("group size " + std::to_string(g) + " does not divide input length " + std::to_string(x.size()));
  }
  InputSums s;
  s.per_group.resize(x.size() / g);
  double total = 0.0;
  for (std::size_t k = 0; k < s.per_group.size(); ++k) {
    double part = 0.0;
    for (std::size_t i = k * g; i < (k + 1) * g; ++i) part += x[i];
    s.per_group[k] = static_cast<float>(part);
    total += part;
  }
  s.total = static_cast<float>(total);
  return s;
}

std::vector<float> qgemv_reference(const PackedMatrix& pm, std::span<const float> x) {
  pm.validate();
  if (x.size() != pm.n) {
    throw ConfigError("input length " + std::to_string(x.size()) + " does not match n = " + std::to_string(pm.n));
  }
  const int bits = pm.config.bits;
  const std::size_t wpu = words_per_unit(bits);
  const std::size_t unit = codes_per_unit(bits);
  const std::size_t group_rows = pm.config.group_rows(pm.n);

  std::vector<double> acc(pm.m, 0.0);
  std::vector<std::uint32_t> unit_words(wpu);
  for (const auto& b : pm.blocks()) {
    for (std::size_t c = 0; c < b.cols; ++c) {
      const std::size_t j = b.col0 + c;
      for (std::size_t q = 0; q < b.rows / unit; ++q) {
        for (std::size_t w = 0; w < wpu; ++w) unit_words[w] = pm.words[b.word_offset + (q * wpu + w) * b.ld + c];
        const auto codes = unpack_words(unit_words, bits);
        for (std::size_t k = 0; k < unit; ++k) {
          const std::size_t i = b.row0 + q * unit + k;
          const std::size_t p = (i / group_rows) * pm.m + j;
          const float weight = pm.scales[p] * (static_cast<float>(codes[k]) - pm.zeros[p]);
          acc[j] += static_cast<double>(x[i]) * static_cast<double>(weight);
        }
      }
    }
  }
  return {acc.begin(), acc.end()};
}

const KernelEntry& find_kernel(int bits, std::size_t group_size, int m_u, int t_u, int lanes) {
  const auto table = kernels::registry();
  const KernelEntry* best = nullptr;
  const long budget = register_pressure(m_u, t_u);
  for (const auto& k : table) {
    if (k.bits != bits || k.group_size != group_size || k.lanes != lanes) continue;
    if (k.m_u == m_u && k.t_u == t_u) return k;
    // Otherwise the largest compiled tile that fits the same register budget.
    if (register_pressure(k.m_u, k.t_u) > budget) continue;
    if (best == nullptr || k.m_u * k.t_u > best->m_u * best->t_u ||
        (k.m_u * k.t_u == best->m_u * best->t_u && k.t_u > best->t_u)) {
      best = &k;
    }
  }
  if (best == nullptr) {
    throw ConfigError("no generated kernel for bits=" + std::to_string(bits) + " group=" +
                      (group_size == kFullColumn ? std::string("full-column") : std::to_string(group_size)) +
                      " tile=" + std::to_string(m_u) + "x" + std::to_string(t_u) + " lanes=" + std::to_string(lanes));
  }
  return *best;
}

const KernelEntry& find_kernel(const PackedMatrix& pm, int lanes) {
  return find_kernel(pm.config.bits, pm.config.group_size, pm.plan.m_u, pm.plan.t_u, lanes);
}

std::vector<float> qgemv_with(const KernelEntry& kernel, const PackedMatrix& pm, std::span<const float> x,
                              const InputSums& sums, int threads) {
  pm.validate();
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  if (x.size() != pm.n) {
    throw ConfigError("input length " + std::to_string(x.size()) + " does not match n = " + std::to_string(pm.n));
  }
  if (sums.per_group.size() != pm.groups()) throw ConfigError("input sums were computed for a different group size");
  if (kernel.bits != pm.config.bits || kernel.group_size != pm.config.group_size) {
    throw ConfigError(std::string("kernel ") + kernel.name + " does not match the matrix quantization");
  }

  std::vector<float> sum_buf;
  sum_buf.reserve(1 + sums.per_group.size());
  sum_buf.push_back(sums.total);
  sum_buf.insert(sum_buf.end(), sums.per_group.begin(), sums.per_group.end());

  const auto blocks = pm.blocks();
  std::vector<std::size_t> col_starts;
  for (const auto& b : blocks) col_starts.push_back(b.col0);
  std::sort(col_starts.begin(), col_starts.end());
  col_starts.erase(std::unique(col_starts.begin(), col_starts.end()), col_starts.end());

  const std::size_t col_blocks = col_starts.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), col_blocks);
  std::vector<std::vector<BlockDesc>> work(workers);
  for (const auto& b : blocks) {
    const auto cb = static_cast<std::size_t>(std::lower_bound(col_starts.begin(), col_starts.end(), b.col0) - col_starts.begin());
    work[cb * workers / col_blocks].push_back(b);
  }

  std::vector<float> y(pm.m, 0.0F);
  auto run = [&](std::size_t t) {
    if (work[t].empty()) return;
    kernel.fn(pm.words.data(), pm.scales.data(), pm.zeros.data(), x.data(), sum_buf.data(), y.data(), pm.n, pm.m,
              work[t].data(), work[t].size());
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run, t);
    run(0);
  }
  return y;
}

std::vector<float> qgemv(const PackedMatrix& pm, std::span<const float> x, const InputSums& sums, int threads) {
  return qgemv_with(find_kernel(pm), pm, x, sums, threads);
}

std::vector<float> qgemv(const PackedMatrix& pm, std::span<const float> x, int threads) {
  return qgemv(pm, x, input_sums(x, pm.config.group_size), threads);
}

MemoryReport memory_report(int bits, std::size_t n, std::size_t m, std::size_t groups, int zero_bits) {
  MemoryReport r;
  r.payload = payload_bits(bits, n, m, groups, zero_bits);
  r.dense_bits = 32ULL * n * m;
  r.ratio = static_cast<double>(r.dense_bits) / static_cast<double>(r.payload.total());
  return r;
}

MemoryReport memory_report(const PackedMatrix& pm) {
  const int zbits = pm.config.zero_mode == ZeroMode::kQuantized ? pm.config.bits : 32;
  return memory_report(pm.config.bits, pm.n, pm.m, pm.groups(), zbits);
}

}  // namespace qigen

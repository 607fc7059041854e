// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qigen/error.hpp"
#include "qigen/kernels.hpp"
#include "qigen/pack.hpp"
#include "qigen/perfmodel.hpp"
#include "qigen/runtime.hpp"

namespace qigen {
namespace {

PackedMatrix quantized(const std::vector<float>& w, std::size_t n, std::size_t m, const QuantConfig& cfg,
                       Layout layout = Layout::kZCurve, const HardwareSpec& hw = {}) {
  const auto cm = quantize_matrix(w, n, m, cfg);
  return lay_out_blocks(cm, plan(hw, cfg, n, m), layout);
}

PackedMatrix random_packed(std::size_t n, std::size_t m, const QuantConfig& cfg, std::mt19937_64& rng,
                           Layout layout = Layout::kZCurve, const HardwareSpec& hw = {}) {
  return quantized(test::uniform(n * m, rng), n, m, cfg, layout, hw);
}

TEST(InputSums, OnesInGroupsOfSixteen) {
  const std::vector<float> x(64, 1.0F);
  const auto s = input_sums(x, 16);
  EXPECT_EQ(s.per_group, (std::vector<float>{16, 16, 16, 16}));
  EXPECT_EQ(s.total, 64.0F);
}

TEST(InputSums, ZerosAndFullColumn) {
  const auto s = input_sums(std::vector<float>(96, 0.0F), kFullColumn);
  EXPECT_EQ(s.total, 0.0F);
  EXPECT_EQ(s.per_group, (std::vector<float>{0.0F}));
}

TEST(InputSums, MatchesCompensatedSum) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = test::uniform(4096, rng, -3.0F, 5.0F);
    const auto s = input_sums(x, 128);
    const auto want = static_cast<double>(test::compensated_sum(x));
    EXPECT_LE(std::abs(s.total - want), 1e-5 * std::max(1.0, std::abs(want)));
    double parts = 0;
    for (float p : s.per_group) parts += p;
    EXPECT_LE(std::abs(parts - s.total), 4 * 4096 * std::numeric_limits<float>::epsilon() * std::abs(want) + 1e-6);
  }
}

TEST(InputSums, LengthMismatch) {
  EXPECT_THROW(input_sums(std::vector<float>(40, 1.0F), 16), ConfigError);
  EXPECT_THROW(input_sums({}, kFullColumn), ConfigError);
}

TEST(Reference, HandComputedColumns) {
  // 8x2, codes 1..8 in both columns, s = 1, z = 0, x = ones: every output is 36.
  CodeMatrix cm;
  cm.n = 8;
  cm.m = 2;
  cm.config = {4, kFullColumn, ZeroMode::kReal32};
  for (int j = 0; j < 2; ++j) {
    for (std::uint8_t c = 1; c <= 8; ++c) cm.codes.push_back(c);
  }
  cm.params = {{1.0F, 0.0F}, {1.0F, 0.0F}};
  const auto pm = lay_out_blocks(cm, {1, 1, 8, 2});
  const std::vector<float> x(8, 1.0F);
  EXPECT_EQ(qgemv_reference(pm, x), (std::vector<float>{36.0F, 36.0F}));
  EXPECT_EQ(qgemv(pm, x), (std::vector<float>{36.0F, 36.0F}));
}

TEST(Reference, ZeroCodesGiveZero) {
  CodeMatrix cm;
  cm.n = 32;
  cm.m = 5;
  cm.config = {2, kFullColumn, ZeroMode::kReal32};
  cm.codes.assign(32 * 5, 0);
  cm.params.assign(5, GroupParams{0.7F, 0.0F});
  const auto pm = lay_out_blocks(cm, plan({}, cm.config, 32, 5));
  std::mt19937_64 rng(1);
  const auto x = test::uniform(32, rng);
  for (float v : qgemv_reference(pm, x)) EXPECT_EQ(v, 0.0F);
  for (float v : qgemv(pm, x)) EXPECT_EQ(v, 0.0F);
}

TEST(Reference, ScaledIdentityReproducesInput) {
  const std::size_t n = 64;
  std::vector<float> w(n * n, 0.0F);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 2.0F;
  const auto pm = quantized(w, n, n, {4, kFullColumn, ZeroMode::kReal32});
  std::mt19937_64 rng(2);
  const auto x = test::uniform(n, rng);
  // Column j is {0, 2}: the round-trip bound is exact here (s = 2/15, both extremes hit a code).
  const auto y = qgemv_reference(pm, x);
  for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(y[j], 2.0F * x[j], 1e-5);
  const auto fast = qgemv(pm, x);
  for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(fast[j], 2.0F * x[j], 1e-5);
}

TEST(Reference, AgreesWithDenseOracle) {
  std::mt19937_64 rng(3);
  for (int bits : {2, 3, 4}) {
    for (std::size_t g : {kFullColumn, std::size_t{32}}) {
      const QuantConfig cfg{bits, g, ZeroMode::kReal32};
      const auto w = test::uniform(192 * 70, rng);
      const auto cm = quantize_matrix(w, 192, 70, cfg);
      const auto pm = lay_out_blocks(cm, plan({}, cfg, 192, 70));
      const auto x = test::uniform(192, rng);
      const auto want = test::dense_gemv(cm, x);
      const auto got = qgemv_reference(pm, x);
      std::vector<float> wantf(want.begin(), want.end());
      EXPECT_LE(test::rel_maxnorm(got, wantf), 1e-6) << bits << " " << g;
    }
  }
}

TEST(Reference, DimensionMismatch) {
  std::mt19937_64 rng(4);
  const auto pm = random_packed(64, 8, {4, kFullColumn, ZeroMode::kReal32}, rng);
  EXPECT_THROW(qgemv_reference(pm, std::vector<float>(63, 0.0F)), ConfigError);
  EXPECT_THROW(qgemv(pm, std::vector<float>(65, 0.0F)), ConfigError);
}

struct Case {
  int bits;
  std::size_t group;
};

class OracleEquivalence : public ::testing::TestWithParam<Case> {};

TEST_P(OracleEquivalence, RandomShapes) {
  const auto [bits, g] = GetParam();
  std::mt19937_64 rng(1000 + bits * 1000 + g);
  const std::size_t unit = codes_per_unit(bits);
  const std::size_t row_step = g == kFullColumn ? unit : std::max(unit, g);
  std::uniform_int_distribution<std::size_t> rows(1, 1024 / row_step);
  std::uniform_int_distribution<std::size_t> cols(1, 300);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = row_step * rows(rng);
    const std::size_t m = cols(rng);
    const auto zm = trial % 2 == 0 ? ZeroMode::kReal32 : ZeroMode::kQuantized;
    const auto pm = random_packed(n, m, {bits, g, zm}, rng);
    const auto x = test::uniform(n, rng);
    EXPECT_LE(test::rel_maxnorm(qgemv(pm, x), qgemv_reference(pm, x)), 1e-5) << n << "x" << m;
  }
}

INSTANTIATE_TEST_SUITE_P(BitsAndGroups, OracleEquivalence,
                         ::testing::Values(Case{2, 0}, Case{2, 16}, Case{2, 128}, Case{3, 0}, Case{3, 16},
                                           Case{3, 32}, Case{3, 64}, Case{4, 0}, Case{4, 16}, Case{4, 64}),
                         [](const auto& info) {
                           return "b" + std::to_string(info.param.bits) + "_g" + std::to_string(info.param.group);
                         });

TEST(Qgemv, EveryCompiledKernelMatchesReference) {
  std::mt19937_64 rng(99);
  for (const auto& k : kernels::registry()) {
    const std::size_t unit = codes_per_unit(k.bits);
    const std::size_t step = k.group_size == kFullColumn ? unit : std::max(unit, k.group_size);
    const std::size_t n = step * 3;
    const std::size_t m = static_cast<std::size_t>(k.t_u * k.lanes) * 2 + k.lanes + 3;
    const QuantConfig cfg{k.bits, k.group_size, ZeroMode::kReal32};
    const auto cm = quantize_matrix(test::uniform(n * m, rng), n, m, cfg);
    // Two row blocks and a partial column block exercise the edge paths.
    const std::size_t mb = n > step ? step * 2 : step;
    const auto pm = lay_out_blocks(cm, {k.m_u, k.t_u, mb, static_cast<std::size_t>(k.t_u * k.lanes) * 2});
    const auto x = test::uniform(n, rng);
    const auto y = qgemv_with(k, pm, x, input_sums(x, k.group_size), 1);
    EXPECT_LE(test::rel_maxnorm(y, qgemv_reference(pm, x)), 1e-5) << k.name;
  }
}

TEST(Qgemv, RowSequentialLayout) {
  std::mt19937_64 rng(5);
  const auto pm = random_packed(256, 77, {3, 32, ZeroMode::kReal32}, rng, Layout::kRowSequential);
  const auto x = test::uniform(256, rng);
  EXPECT_LE(test::rel_maxnorm(qgemv(pm, x, 3), qgemv_reference(pm, x)), 1e-5);
}

TEST(Qgemv, ThreadCountInvariance) {
  std::mt19937_64 rng(6);
  HardwareSpec small;
  small.l1_bits = 1ULL << 15;  // many blocks, so threads really split the work
  for (std::size_t g : {kFullColumn, std::size_t{64}}) {
    const auto pm = random_packed(512, 333, {4, g, ZeroMode::kReal32}, rng, Layout::kZCurve, small);
    const auto x = test::uniform(512, rng);
    const auto one = qgemv(pm, x, 1);
    for (int t : {2, 3, 4, 8, 64}) EXPECT_EQ(qgemv(pm, x, t), one) << t;
  }
}

TEST(Qgemv, Linearity) {
  std::mt19937_64 rng(7);
  const auto pm = random_packed(384, 50, {3, 128, ZeroMode::kReal32}, rng);
  const auto x1 = test::uniform(384, rng);
  const auto x2 = test::uniform(384, rng);
  const float a = 0.75F;
  const float b = -1.5F;
  std::vector<float> mix(384);
  for (std::size_t i = 0; i < 384; ++i) mix[i] = a * x1[i] + b * x2[i];
  const auto y1 = qgemv(pm, x1);
  const auto y2 = qgemv(pm, x2);
  const auto ym = qgemv(pm, mix);
  std::vector<float> want(50);
  for (std::size_t j = 0; j < 50; ++j) want[j] = a * y1[j] + b * y2[j];
  EXPECT_LE(test::rel_maxnorm(ym, want), 1e-4);
}

TEST(Qgemv, ZeroInputGivesExactZero) {
  std::mt19937_64 rng(8);
  for (std::size_t g : {kFullColumn, std::size_t{16}}) {
    const auto pm = random_packed(128, 40, {2, g, ZeroMode::kReal32}, rng);
    for (float v : qgemv(pm, std::vector<float>(128, 0.0F))) EXPECT_EQ(v, 0.0F);
  }
}

TEST(Qgemv, GroupedWithWholeColumnGroupMatchesFullColumn) {
  std::mt19937_64 rng(9);
  for (int bits : {2, 3, 4}) {
    // n = 128 is a compiled group size, so GROUPED(g = n) has a kernel.
    const auto w = test::uniform(128 * 90, rng);
    const auto fc = quantized(w, 128, 90, {bits, kFullColumn, ZeroMode::kReal32});
    const auto gr = quantized(w, 128, 90, {bits, 128, ZeroMode::kReal32});
    const auto x = test::uniform(128, rng);
    EXPECT_LE(test::rel_maxnorm(qgemv(gr, x), qgemv(fc, x)), 1e-6) << bits;
  }
}

TEST(Qgemv, RejectsBadArguments) {
  std::mt19937_64 rng(10);
  const auto pm = random_packed(64, 8, {4, 16, ZeroMode::kReal32}, rng);
  const auto x = test::uniform(64, rng);
  EXPECT_THROW(qgemv(pm, x, 0), ConfigError);
  EXPECT_THROW(qgemv(pm, x, input_sums(x, 32), 1), ConfigError);
  EXPECT_THROW(qgemv_with(find_kernel(4, kFullColumn, 3, 3), pm, x, input_sums(x, 16), 1), ConfigError);
  EXPECT_THROW(find_kernel(4, 48, 3, 3), ConfigError);
}

TEST(FindKernel, FallsBackWithinRegisterBudget) {
  const auto& exact = find_kernel(4, kFullColumn, 3, 3);
  EXPECT_EQ(exact.m_u, 3);
  EXPECT_EQ(exact.t_u, 3);
  // 1x7 needs 15 registers but is not compiled; the pick must fit in 15.
  const auto& alt = find_kernel(4, kFullColumn, 1, 7);
  EXPECT_LE(register_pressure(alt.m_u, alt.t_u), 15);
}

TEST(MemoryReport, PaperFormulaAtFourK) {
  const auto r = memory_report(4, 4096, 4096, 1, 4);
  EXPECT_EQ(r.payload.total(), 67256320ULL);
  EXPECT_EQ(r.dense_bits, 32ULL * 4096 * 4096);
  EXPECT_NEAR(r.ratio, 8.0, 0.08);
}

TEST(MemoryReport, RatioApproachesThirtyTwoOverBits) {
  for (int b : {2, 3, 4}) {
    const auto r = memory_report(b, 4096, 4096, 1, b);
    EXPECT_NEAR(r.ratio, 32.0 / b, 0.01 * 32.0 / b) << b;
  }
  const auto ident = memory_report(32, 4096, 4096, 1, 32);
  EXPECT_NEAR(ident.ratio, 1.0, 0.01);
}

TEST(MemoryReport, FromPackedMatrix) {
  std::mt19937_64 rng(11);
  const auto pm = random_packed(256, 64, {3, 32, ZeroMode::kQuantized}, rng);
  const auto r = memory_report(pm);
  EXPECT_EQ(r.payload.weights, 3ULL * 256 * 64);
  EXPECT_EQ(r.payload.scales, 32ULL * 8 * 64);
  EXPECT_EQ(r.payload.zeros, 3ULL * 8 * 64);
}

}  // namespace
}  // namespace qigen

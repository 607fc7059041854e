// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "qigen/error.hpp"
#include "qigen/perfmodel.hpp"

namespace qigen {
namespace {

HardwareSpec spec(std::uint64_t gamma, int vregs, int lanes = 8) {
  HardwareSpec hw;
  hw.l1_bits = gamma;
  hw.vregs = vregs;
  hw.lanes = lanes;
  return hw;
}

TEST(RegisterTile, SixteenRegistersGiveThreeByThree) {
  EXPECT_EQ(select_register_tile(spec(262144, 16)), (RegisterTile{3, 3}));
  EXPECT_EQ(register_pressure(3, 3), 15);
}

TEST(RegisterTile, ThreeRegistersGiveUnitTile) {
  EXPECT_EQ(select_register_tile(spec(262144, 3)), (RegisterTile{1, 1}));
}

TEST(RegisterTile, FourByThreeIsInfeasibleForSixteen) {
  EXPECT_EQ(register_pressure(4, 3), 19);
  for (const auto& t : feasible_register_tiles(spec(262144, 16))) EXPECT_FALSE(t.m_u == 4 && t.t_u == 3);
}

TEST(RegisterTile, FeasibleSetMatchesDirectEvaluation) {
  for (int eta = 3; eta <= 40; ++eta) {
    const auto tiles = feasible_register_tiles(spec(262144, eta));
    std::size_t direct = 0;
    for (int mu = 1; mu <= eta; ++mu) {
      for (int tu = 1; tu <= eta; ++tu) {
        const bool fits = mu + mu * tu + tu <= eta;
        direct += fits ? 1 : 0;
        const bool listed = std::find(tiles.begin(), tiles.end(), RegisterTile{mu, tu}) != tiles.end();
        ASSERT_EQ(listed, fits) << eta << " " << mu << "x" << tu;
      }
    }
    EXPECT_EQ(tiles.size(), direct);
  }
}

TEST(RegisterTile, DefaultRankingMaximisesProductThenWidth) {
  for (int eta = 3; eta <= 40; ++eta) {
    const auto best = select_register_tile(spec(262144, eta));
    for (int mu = 1; mu <= eta; ++mu) {
      for (int tu = 1; tu <= eta; ++tu) {
        if (mu + mu * tu + tu > eta) continue;
        ASSERT_LE(mu * tu, best.m_u * best.t_u) << eta;
        if (mu * tu == best.m_u * best.t_u) ASSERT_LE(tu, best.t_u) << eta;
      }
    }
  }
}

TEST(RegisterTile, RankerChoosesAmongFeasibleTiles) {
  // Prefer tall tiles: score = m_u.
  const auto t = select_register_tile(spec(262144, 16), [](const RegisterTile& r) { return double(r.m_u); });
  EXPECT_EQ(t, (RegisterTile{7, 1}));
  EXPECT_LE(register_pressure(t.m_u, t.t_u), 16);
}

TEST(RegisterTile, TooFewRegisters) { EXPECT_THROW(select_register_tile(spec(262144, 2)), ConfigError); }

TEST(CacheBlock, SmallCacheExample) {
  // gamma = 1024 sits below the HardwareSpec floor; select_cache_block does not re-validate.
  HardwareSpec hw;
  hw.l1_bits = 1024;
  const auto ex = select_cache_block(hw, 4, 2, 2, 100000, 100000);
  EXPECT_EQ(ex, (CacheBlock{8, 12}));
  EXPECT_EQ(block_footprint_bits(8, 12, 4), 1024U);
  EXPECT_EQ(test::exhaustive_block(1024, 4, 2, 2, 1000, 1000).objective, 1024U);
}

TEST(CacheBlock, HugeCacheCapsAtMatrix) {
  EXPECT_EQ(select_cache_block(spec(1ULL << 40, 16), 4, 2, 2, 64, 64), (CacheBlock{64, 64}));
}

TEST(CacheBlock, StepLargerThanDimsGivesOneStep) {
  EXPECT_EQ(select_cache_block(spec(262144, 16), 4, 24, 24, 10, 10), (CacheBlock{24, 24}));
}

TEST(CacheBlock, InfeasibleStepIsAnError) {
  EXPECT_THROW(select_cache_block(spec(4096, 16), 4, 64, 64, 4096, 4096), ConfigError);
}

TEST(CacheBlock, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::uint64_t> gamma(1ULL << 12, 1ULL << 16);
  std::uniform_int_distribution<std::size_t> step(1, 24);
  std::uniform_int_distribution<std::size_t> dim(1, 600);
  std::uniform_int_distribution<int> bits(2, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = gamma(rng);
    const int b = bits(rng);
    const auto rs = step(rng);
    const auto cs = step(rng);
    const auto n = dim(rng);
    const auto m = dim(rng);
    const auto want = test::exhaustive_block(g, b, rs, cs, n, m);
    if (!want.feasible) {
      EXPECT_THROW(select_cache_block(spec(g, 16), b, rs, cs, n, m), ConfigError);
      continue;
    }
    const auto got = select_cache_block(spec(g, 16), b, rs, cs, n, m);
    ASSERT_EQ(block_footprint_bits(got.m_b, got.t_b, b), want.objective) << "trial " << trial;
    ASSERT_LE(block_footprint_bits(got.m_b, got.t_b, b), g);
    ASSERT_EQ(got.m_b % rs, 0U);
    ASSERT_EQ(got.t_b % cs, 0U);
  }
}

TEST(CacheBlock, ObjectiveIsMonotoneInCacheSize) {
  for (int b : {2, 3, 4}) {
    std::uint64_t prev = 0;
    for (std::uint64_t g = 8192; g <= 65536; g += 512) {
      const auto blk = select_cache_block(spec(g, 16), b, 48, 24, 2048, 2048);
      const auto obj = block_footprint_bits(blk.m_b, blk.t_b, b);
      ASSERT_GE(obj, prev) << b << " " << g;
      prev = obj;
    }
  }
}

TEST(Plan, DefaultHardwareFourBitLargeMatrix) {
  const HardwareSpec hw;
  const QuantConfig cfg{4, kFullColumn, ZeroMode::kReal32};
  const auto p = plan(hw, cfg, 4096, 4096);
  EXPECT_EQ(p.tile(), (RegisterTile{3, 3}));
  EXPECT_TRUE(check_plan(p, hw, 4).ok());
  const auto [rs, cs] = tile_granularity(p.tile(), cfg, hw.lanes, 4096);
  EXPECT_EQ(rs, 24U);
  EXPECT_EQ(cs, 24U);
  EXPECT_EQ(block_footprint_bits(p.m_b, p.t_b, 4), test::exhaustive_block(hw.l1_bits, 4, rs, cs, 4096, 4096).objective);
}

TEST(Plan, GroupedGranularityKeepsGroupsWhole) {
  const auto [rs, cs] = tile_granularity({3, 3}, {4, 64, ZeroMode::kReal32}, 8, 4096);
  EXPECT_EQ(rs % 64, 0U);
  EXPECT_EQ(rs % 24, 0U);
  EXPECT_EQ(cs, 24U);
}

TEST(Plan, IsDeterministic) {
  const HardwareSpec hw;
  const QuantConfig cfg{3, 32, ZeroMode::kQuantized};
  EXPECT_EQ(plan(hw, cfg, 1024, 777), plan(hw, cfg, 1024, 777));
}

TEST(Plan, CheckReportsViolations) {
  const HardwareSpec hw;
  const auto c = check_plan({4, 3, 8, 8}, hw, 4);
  EXPECT_LT(c.register_slack, 0);
  EXPECT_FALSE(c.ok());
  const auto d = check_plan({1, 1, 1000, 1000}, hw, 4);
  EXPECT_LT(d.cache_slack, 0);
  const auto e = check_plan({2, 2, 9, 8}, hw, 4);
  EXPECT_FALSE(e.rows_divisible);
}

TEST(HardwareSpecText, ParsesKeysAndComments) {
  const auto hw = parse_hardware_spec("# laptop\nl1_bits = 393216\nvregs=32  # avx512\nlanes = 16\nthreads = 4\n");
  EXPECT_EQ(hw.l1_bits, 393216U);
  EXPECT_EQ(hw.vregs, 32);
  EXPECT_EQ(hw.lanes, 16);
  EXPECT_EQ(hw.threads, 4);
  EXPECT_EQ(parse_hardware_spec(""), HardwareSpec{});
}

TEST(HardwareSpecText, RejectsBadInput) {
  EXPECT_THROW(parse_hardware_spec("vregs = 0\n"), ConfigError);
  EXPECT_THROW(parse_hardware_spec("l1_bits = 100\n"), ConfigError);
  EXPECT_THROW(parse_hardware_spec("cores = 4\n"), ConfigError);
  EXPECT_THROW(parse_hardware_spec("vregs 16\n"), ConfigError);
  EXPECT_THROW(parse_hardware_spec("vregs = -3\n"), ConfigError);
  EXPECT_THROW(load_hardware_spec("/nonexistent/hw.txt"), IoError);
}

}  // namespace
}  // namespace qigen

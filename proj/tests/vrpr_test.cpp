#include <gtest/gtest.h>

#include <cstdlib>

#include "oracles.hpp"
#include "tierattn/presets.hpp"
#include "tierattn/vrpr.hpp"

using namespace tierattn;

namespace {

const VrprConfig kWan2x{12, 20, 2, 8, 81};
const VrprConfig kWan4x{10, 14, 2, 8, 81};

std::int64_t oracle_remap(std::int64_t d, const VrprConfig& c) {
  return oracle::remap(d, c.w1, c.w2, c.g1, c.g2);
}

}  // namespace

TEST(VrprConfig, Invariants) {
  EXPECT_FALSE(kWan2x.invariant_violation());
  EXPECT_TRUE((VrprConfig{0, 20, 2, 8, 81}.invariant_violation()));
  EXPECT_TRUE((VrprConfig{20, 20, 2, 8, 81}.invariant_violation()));
  EXPECT_TRUE((VrprConfig{12, 20, 0, 8, 81}.invariant_violation()));
  EXPECT_TRUE((VrprConfig{12, 20, 4, 2, 81}.invariant_violation()));
  EXPECT_TRUE((VrprConfig{12, 20, 2, 8, 20}.invariant_violation()));
  EXPECT_THROW((VrprConfig{12, 20, 2, 8, 20}.check()), ConfigError);
}

TEST(RemapRelative, WorkedValues) {
  EXPECT_EQ(remap_relative(5, kWan2x), 5);
  EXPECT_EQ(remap_relative(13, kWan2x), 12);
  EXPECT_EQ(remap_relative(160, kWan2x), 34);
  EXPECT_EQ(remap_relative(-13, kWan2x), -12);
  EXPECT_EQ(remap_relative(320, kWan4x), 51);
}

TEST(RemapRelative, MatchesClosedFormOracle) {
  for (const Preset& p : shipped_presets()) {
    const auto t = static_cast<std::int64_t>(p.target_frames);
    for (std::int64_t d = -t; d <= t; ++d) {
      ASSERT_EQ(remap_relative(d, p.vrpr), oracle_remap(d, p.vrpr)) << p.name << " d=" << d;
    }
  }
}

TEST(RemapRelative, MonotoneUnitStepAntisymmetric) {
  for (const Preset& p : shipped_presets()) {
    const auto t = static_cast<std::int64_t>(p.target_frames);
    for (std::int64_t d = 0; d < t; ++d) {
      const std::int64_t step = remap_relative(d + 1, p.vrpr) - remap_relative(d, p.vrpr);
      ASSERT_TRUE(step == 0 || step == 1) << p.name << " d=" << d;
      ASSERT_EQ(remap_relative(-d, p.vrpr), -remap_relative(d, p.vrpr));
    }
  }
}

TEST(RemapMatrix, Examples) {
  EXPECT_EQ(remap_matrix(1, kWan2x), IntMatrix(1, 1, 0));
  const std::size_t n = static_cast<std::size_t>(kWan2x.w1) + 1;
  EXPECT_EQ(remap_matrix(n, kWan2x), relative_position_matrix(iota_positions(n), iota_positions(n)));
  const auto m = remap_matrix(161, kWan2x);
  const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
  EXPECT_EQ(*lo, -34);
  EXPECT_EQ(*hi, 34);
}

TEST(ZoneIndexArrays, WorkedValues) {
  const auto z = zone_index_arrays(161, kWan2x);
  ASSERT_EQ(z.size(), 5u);
  EXPECT_EQ(z[0].zone, Zone::Fine);
  EXPECT_EQ(z[0].p_q, iota_positions(161));
  EXPECT_EQ(z[0].p_k, iota_positions(161));
  const auto& med = z[static_cast<std::size_t>(Zone::MediumPos)];
  EXPECT_EQ(med.p_q[15], 13);
  EXPECT_EQ(med.p_k[2], 1);
  EXPECT_EQ(med.p_q[15] - med.p_k[2], 12);
  const auto& coarse = z[static_cast<std::size_t>(Zone::CoarsePos)];
  EXPECT_EQ(coarse.p_q[160], 34);
  EXPECT_EQ(coarse.p_k[0], 0);
  for (const auto& a : z) {
    EXPECT_EQ(a.p_q.size(), 161u);
    EXPECT_TRUE(std::is_sorted(a.p_q.begin(), a.p_q.end()));
    EXPECT_TRUE(std::is_sorted(a.p_k.begin(), a.p_k.end()));
  }
}

TEST(ImplementedRelativeMatrix, WorkedValues) {
  const auto impl = implemented_relative_matrix(161, kWan2x);
  EXPECT_EQ(impl(15, 2), 12);
  EXPECT_EQ(impl(15, 2) - remap_relative(13, kWan2x), 0);
  EXPECT_EQ(impl(14, 1), 13);
  EXPECT_EQ(impl(14, 1) - remap_relative(13, kWan2x), 1);
  const auto theo = remap_matrix(161, kWan2x);
  for (std::size_t i = 0; i < 161; ++i) {
    for (std::size_t j = 0; j < 161; ++j) {
      const std::int64_t d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      if (std::abs(d) <= kWan2x.w1) {
        ASSERT_EQ(impl(i, j), theo(i, j));
      }
      ASSERT_EQ(impl(i, j), -impl(j, i));
    }
  }
}

TEST(ApproximationError, Bounds) {
  EXPECT_EQ(approximation_error_bounds(13, kWan2x).min_diff, 0);
  EXPECT_EQ(approximation_error_bounds(13, kWan2x).max_diff, 0);
  const auto e = approximation_error_bounds(161, kWan2x);
  EXPECT_GE(e.min_diff, -1);
  EXPECT_LE(e.max_diff, 1);
  // positive quantized zones sit in {0, +1}, their mirrors in {-1, 0}
  for (Zone z : {Zone::MediumPos, Zone::CoarsePos}) {
    const auto [lo, hi] = e.per_zone[static_cast<std::size_t>(z)];
    EXPECT_EQ(lo, 0);
    EXPECT_EQ(hi, 1);
  }
  for (Zone z : {Zone::MediumNeg, Zone::CoarseNeg}) {
    const auto [lo, hi] = e.per_zone[static_cast<std::size_t>(z)];
    EXPECT_EQ(lo, -1);
    EXPECT_EQ(hi, 0);
  }
  EXPECT_EQ(e.per_zone[0], std::make_pair(std::int64_t{0}, std::int64_t{0}));
  const VrprConfig unit{12, 20, 1, 1, 81};
  for (std::size_t t : {1u, 30u, 200u}) {
    const auto u = approximation_error_bounds(t, unit);
    EXPECT_EQ(u.min_diff, 0);
    EXPECT_EQ(u.max_diff, 0);
  }
}

TEST(ApproximationError, RandomConfigsStayWithinOne) {
  // floor(i/g) - floor(j/g) - 1 <= floor((i-j)/g) <= floor(i/g) - floor(j/g)
  std::uint64_t state = 99;
  for (int trial = 0; trial < 40; ++trial) {
    const auto r = [&](std::int64_t lo, std::int64_t hi) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      return lo + static_cast<std::int64_t>((state >> 33) % static_cast<std::uint64_t>(hi - lo + 1));
    };
    VrprConfig c;
    c.w1 = r(1, 20);
    c.w2 = c.w1 + r(1, 20);
    c.g1 = trial % 2 == 0 ? 2 : r(1, 5);
    c.g2 = c.g1 + r(0, 8);
    c.pretrained_len = c.w2 + r(1, 60);
    const auto t = static_cast<std::size_t>(r(1, 150));
    const auto e = approximation_error_bounds(t, c);
    ASSERT_GE(e.min_diff, -1);
    ASSERT_LE(e.max_diff, 1);
    // the coarse offset only lines up with the medium zone when g1 == 2
    if (c.g1 != 2) continue;
    for (std::int64_t d = 0; d < static_cast<std::int64_t>(t); ++d) {
      const auto step = remap_relative(d + 1, c) - remap_relative(d, c);
      ASSERT_GE(step, 0) << "monotonicity, trial " << trial;
    }
  }
}

TEST(ValidateVrpr, Presets) {
  const auto r2 = validate_vrpr(kWan2x, 161);
  EXPECT_TRUE(r2.valid);
  EXPECT_LE(r2.max_mapped, 35);
  EXPECT_EQ(r2.theoretical_max, 34);
  const auto r4 = validate_vrpr(kWan4x, 321);
  EXPECT_TRUE(r4.valid);
  EXPECT_EQ(r4.theoretical_max, 51);
  EXPECT_LE(r4.max_mapped, 52);
  const VrprConfig flat{12, 20, 1, 1, 81};
  const auto bad = validate_vrpr(flat, 162);
  EXPECT_FALSE(bad.valid);
  EXPECT_EQ(bad.max_mapped, remap_relative(161, flat));
  EXPECT_GT(bad.max_mapped, 80);
}

TEST(ValidateVrpr, ReportInvariant) {
  for (std::size_t t : {1u, 50u, 161u, 300u, 700u}) {
    const auto r = validate_vrpr(kWan2x, t);
    EXPECT_EQ(r.valid, r.max_mapped <= kWan2x.pretrained_len - 1);
    EXPECT_EQ(r.target_len, t);
  }
}

TEST(ZonedPositions, RelativeMatchesImplementedMatrix) {
  const auto z = ZonedPositions::remapped(161, kWan2x);
  const auto impl = implemented_relative_matrix(161, kWan2x);
  for (std::size_t i = 0; i < 161; i += 7) {
    for (std::size_t j = 0; j < 161; j += 3) EXPECT_EQ(z.relative(i, j), impl(i, j));
  }
  const auto id = ZonedPositions::identity(9).shifted_keys(20);
  EXPECT_EQ(id.relative(0, 0), -20);
  EXPECT_EQ(id.relative(8, 0), -12);
}

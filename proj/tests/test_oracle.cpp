#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "regcal/metrics.hpp"
#include "regcal/oracle.hpp"

using namespace regcal;

TEST(SortedLeftQuantile, RankIsCeilTauM)
{
  EXPECT_EQ(oracle::sorted_left_quantile(std::vector<double>{ 3, 1, 2 }, 0.5), 2.0);
  EXPECT_EQ(oracle::sorted_left_quantile(std::vector<double>{ 7 }, 0.01), 7.0);
  EXPECT_EQ(oracle::sorted_left_quantile(std::vector<double>{ 7 }, 0.99), 7.0);
  EXPECT_EQ(oracle::sorted_left_quantile(std::vector<double>{ 4, 3, 2, 1 }, 0.25), 1.0);
  // 0.29 * 100 rounds to 28.999999999999996 in double; rank 29, not 30.
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) {
    hundred[static_cast<std::size_t>(i)] = i + 1;
  }
  EXPECT_EQ(oracle::sorted_left_quantile(hundred, 0.29), 29.0);
  EXPECT_EQ(oracle::sorted_left_quantile(hundred, 0.57), 57.0);
}

TEST(SortedLeftQuantile, RejectsBadInput)
{
  EXPECT_THROW(oracle::sorted_left_quantile(std::vector<double>{}, 0.5), std::invalid_argument);
  EXPECT_THROW(oracle::sorted_left_quantile(std::vector<double>{ 1 }, 0.0), std::invalid_argument);
  EXPECT_THROW(oracle::sorted_left_quantile(std::vector<double>{ 1 }, 1.0), std::invalid_argument);
}

TEST(PinballArgminScan, ThreePoints)
{
  auto r = oracle::pinball_argmin_scan(std::vector<double>{ 1, 2, 3 }, 0.5);
  EXPECT_EQ(r.value, 2.0);
  ASSERT_EQ(r.objective_curve.size(), 3u);
  // Objective at 2: (0.5*1 + 0 + 0.5*1) / 3.
  EXPECT_DOUBLE_EQ(r.objective_curve[1].second, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.objective_curve[0].second, 0.5);
  EXPECT_DOUBLE_EQ(r.objective_curve[2].second, 0.5);
}

TEST(PinballArgminScan, SingleValueHasZeroObjective)
{
  auto r = oracle::pinball_argmin_scan(std::vector<double>{ 4.25 }, 0.3);
  EXPECT_EQ(r.value, 4.25);
  ASSERT_EQ(r.objective_curve.size(), 1u);
  EXPECT_EQ(r.objective_curve[0].second, 0.0);
}

TEST(PinballArgminScan, TwoPointTieGoesLeft)
{
  auto r = oracle::pinball_argmin_scan(std::vector<double>{ 10, 0 }, 0.5);
  EXPECT_EQ(r.value, 0.0);
  ASSERT_EQ(r.objective_curve.size(), 2u);
  EXPECT_EQ(r.objective_curve[0].second, r.objective_curve[1].second);
}

// The two oracles share no code; they must agree on every grid level.
TEST(OracleIdentity, SortAgreesWithScanOnRandomSamples)
{
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(1, 200);
  std::uniform_int_distribution<int> small(-5, 5);
  std::normal_distribution<double> normal(0.0, 3.0);
  const auto grid = TauGrid::uniform99();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) {
      // Alternate between heavy ties and continuous draws.
      x = trial % 2 == 0 ? static_cast<double>(small(rng)) : normal(rng);
    }
    for (double tau : grid.levels()) {
      ASSERT_EQ(oracle::sorted_left_quantile(v, tau), oracle::pinball_argmin_scan(v, tau).value)
        << "trial " << trial << " tau " << tau << " m " << v.size();
    }
  }
}

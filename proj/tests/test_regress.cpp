#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "regcal/regress.hpp"

using namespace regcal;

namespace {

Dataset column_data(std::vector<double> xs, std::vector<double> ys)
{
  Matrix x(static_cast<Eigen::Index>(xs.size()), 1);
  Vector y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = xs[i];
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return make_dataset(x, y);
}

RegressorSpec ols()
{
  return { RegressorKind::ols, 20, "prediction" };
}

RegressorSpec knn(std::size_t k)
{
  return { RegressorKind::knn, k, "prediction" };
}

} // namespace

TEST(Ols, InterpolatesTwoPoints)
{
  auto model = fit_regressor(ols(), column_data({ 0, 1 }, { 0, 1 }));
  const auto& coef = std::get<OlsModel>(model.state()).coefficients;
  EXPECT_NEAR(coef(0), 0.0, 1e-9);
  EXPECT_NEAR(coef(1), 1.0, 1e-9);
}

TEST(Ols, ConstantTargets)
{
  auto model = fit_regressor(ols(), column_data({ 0, 1, 2, 7 }, { 5, 5, 5, 5 }));
  Matrix q(3, 1);
  q << -3, 0.5, 100;
  auto pred = model.predict(q);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(pred(i), 5.0, 1e-9);
  }
}

TEST(Ols, AffineEvaluation)
{
  OlsModel m;
  m.coefficients.resize(2);
  m.coefficients << 1, 2;
  FittedRegressor model(m);
  Matrix q(1, 1);
  q << 3;
  EXPECT_EQ(model.predict(q)(0), 7.0);
  EXPECT_EQ(model.dims(), 1);
  EXPECT_EQ(model.kind(), RegressorKind::ols);
}

TEST(Ols, DuplicatedColumnTriggersRidgeAndKeepsPredictions)
{
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(40, 1);
  Vector y(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    x(i, 0) = normal(rng);
    y(i) = 2.0 - 3.0 * x(i, 0) + 0.1 * normal(rng);
  }
  auto single = fit_regressor(ols(), make_dataset(x, y));
  Matrix xx(40, 2);
  xx.col(0) = x.col(0);
  xx.col(1) = x.col(0);
  auto doubled = fit_regressor(ols(), make_dataset(xx, y));
  EXPECT_TRUE(std::get<OlsModel>(doubled.state()).ridge_fallback);
  EXPECT_FALSE(std::get<OlsModel>(single.state()).ridge_fallback);
  auto a = single.predict(x);
  auto b = doubled.predict(xx);
  for (Eigen::Index i = 0; i < 40; ++i) {
    EXPECT_NEAR(a(i), b(i), 1e-8);
  }
}

TEST(Knn, OneNeighborReturnsTrainingTarget)
{
  auto data = column_data({ 0.1, 0.7, 0.3, 0.9 }, { 1, 2, 3, 4 });
  auto model = fit_regressor(knn(1), data);
  auto pred = model.predict(data.features);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ(pred(i), data.target(i));
  }
}

TEST(Knn, EquidistantPairIsAveraged)
{
  auto model = fit_regressor(knn(2), column_data({ -1, 1, 5 }, { 0, 10, 99 }));
  Matrix q(1, 1);
  q << 0;
  EXPECT_EQ(model.predict(q)(0), 5.0);
}

TEST(Knn, DistanceTiesGoToLowerIndex)
{
  auto model = fit_regressor(knn(1), column_data({ 1, -1 }, { 10, 20 }));
  Matrix q(1, 1);
  q << 0;
  EXPECT_EQ(model.predict(q)(0), 10.0);
  auto reversed = fit_regressor(knn(1), column_data({ -1, 1 }, { 20, 10 }));
  EXPECT_EQ(reversed.predict(q)(0), 20.0);
}

TEST(Knn, KLargerThanSampleUsesEverything)
{
  auto model = fit_regressor(knn(50), column_data({ 0, 1, 2 }, { 1, 2, 6 }));
  Matrix q(1, 1);
  q << 10;
  EXPECT_EQ(model.predict(q)(0), 3.0);
}

// The pruned search must agree with a full sort on (distance, index).
TEST(Knn, MatchesBruteForce)
{
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> lattice(0, 6);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 30 + trial * 5;
    const Eigen::Index d = 1 + trial % 3;
    Matrix x(n, d);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        x(i, j) = trial % 2 ? lattice(rng) / 3.0 : unif(rng);
      }
      y(i) = unif(rng);
    }
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 7);
    auto model = fit_regressor(knn(k), make_dataset(x, y));
    Matrix q(20, d);
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      q.data()[i] = trial % 2 ? lattice(rng) / 3.0 : unif(rng);
    }
    auto pred = model.predict(q);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      std::vector<std::pair<double, std::size_t>> all;
      for (Eigen::Index t = 0; t < n; ++t) {
        all.emplace_back((x.row(t) - q.row(i)).squaredNorm(), static_cast<std::size_t>(t));
      }
      std::sort(all.begin(), all.end());
      double sum = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        sum += y(static_cast<Eigen::Index>(all[t].second));
      }
      ASSERT_EQ(pred(i), sum / static_cast<double>(k)) << "trial " << trial;
    }
  }
}

TEST(External, PassesPredictionsThrough)
{
  auto data = column_data({ 0, 1 }, { 3, 4 });
  RegressorSpec spec{ RegressorKind::external, 20, "p" };
  auto model = fit_regressor(spec, data);
  std::vector<double> ext{ 1.5, 2.5 };
  auto pred = model.predict(data.features, ext);
  EXPECT_EQ(pred(0), 1.5);
  EXPECT_EQ(pred(1), 2.5);
  EXPECT_THROW(model.predict(data.features), std::invalid_argument);
  std::vector<double> short_ext{ 1.0 };
  EXPECT_THROW(model.predict(data.features, short_ext), std::invalid_argument);
}

TEST(Residuals, Examples)
{
  auto exact = column_data({ 0, 1, 2, 3 }, { 1, 3, 5, 7 });
  auto fitted = fit_regressor(ols(), exact);
  auto r = residuals(fitted, exact);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.residuals(i), 0.0, 1e-12);
  }
  EXPECT_TRUE(r.points == exact.features);

  RegressorSpec ext{ RegressorKind::external, 20, "p" };
  auto data = column_data({ 0, 1 }, { 1, 2 });
  auto model = fit_regressor(ext, data);
  std::vector<double> zero{ 0.0, 0.0 };
  auto same = residuals(model, data, zero);
  EXPECT_EQ(same.residuals(0), 1.0);
  EXPECT_EQ(same.residuals(1), 2.0);
  std::vector<double> preds{ 0.5, 3.0 };
  auto diff = residuals(model, data, preds);
  EXPECT_EQ(diff.residuals(0), 0.5);
  EXPECT_EQ(diff.residuals(1), -1.0);
}

// Residuals are the rounded differences; adding the prediction back recovers
// the target to within the two roundings involved.
TEST(Residuals, ReconstructTargets)
{
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 5 + trial % 20;
    Matrix x(n, 2);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = normal(rng);
      x(i, 1) = normal(rng);
      y(i) = normal(rng);
    }
    auto data = make_dataset(x, y);
    auto model = fit_regressor(trial % 2 ? ols() : knn(3), data);
    auto pred = model.predict(x);
    auto r = residuals(model, data);
    for (Eigen::Index i = 0; i < n; ++i) {
      ASSERT_EQ(r.residuals(i), y(i) - pred(i));
      const double back = r.residuals(i) + pred(i);
      ASSERT_LE(std::abs(back - y(i)),
                2 * std::numeric_limits<double>::epsilon() * std::max(std::abs(y(i)), std::abs(pred(i))));
    }
  }
}

TEST(RegressorKind, StringRoundTrip)
{
  for (auto k : { RegressorKind::ols, RegressorKind::knn, RegressorKind::external }) {
    EXPECT_EQ(regressor_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(regressor_kind_from_string("forest"), std::invalid_argument);
  RegressorSpec bad{ RegressorKind::knn, 0, "p" };
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "regcal/calibrator.hpp"
#include "regcal/model_io.hpp"
#include "regcal/synth.hpp"
#include "test_util.hpp"

using namespace regcal;

namespace {

Dataset line_data(std::vector<double> xs, std::vector<double> ys)
{
  Matrix x(static_cast<Eigen::Index>(xs.size()), 1);
  Vector y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = xs[i];
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return make_dataset(x, y);
}

// Constant regressor `level` plus one neighborhood holding `residuals`.
CalibratedModel hand_model(double level, std::vector<double> residuals)
{
  OlsModel ols;
  ols.coefficients.resize(2);
  ols.coefficients << level, 0.0;
  Standardizer s;
  s.means = Vector::Zero(1);
  s.stddevs = Vector::Ones(1);
  Matrix points = Matrix::Zero(static_cast<Eigen::Index>(residuals.size()), 1);
  Vector values = Eigen::Map<Vector>(residuals.data(), static_cast<Eigen::Index>(residuals.size()));
  auto est = QuantileEstimator::fit(points, values, { 1.0, 1 });
  return CalibratedModel(FittedRegressor(ols), s, ProjectionMap::identity(1), est, { "x" }, "y");
}

CalibrationConfig fixed(double h, RegressorKind kind = RegressorKind::ols)
{
  CalibrationConfig cfg;
  cfg.regressor.kind = kind;
  cfg.bandwidth = h;
  return cfg;
}

} // namespace

TEST(Calibrate, ZeroResidualsCollapseToTheRegressor)
{
  auto data = line_data({ 0, 1, 2, 3 }, { 0, 1, 2, 3 });
  for (double h : { 0.0, 0.3, 10.0 }) {
    auto model = calibrate(data, fixed(h));
    for (Eigen::Index i = 0; i < model.estimator().values().size(); ++i) {
      EXPECT_NEAR(model.estimator().values()(i), 0.0, 1e-12);
    }
    Matrix q(3, 1);
    q << -1.0, 1.5, 7.0;
    auto mean = model.predict_mean(q);
    auto quantiles = model.predict_quantiles(q, TauGrid::uniform99());
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index j = 0; j < 99; ++j) {
        EXPECT_NEAR(quantiles(i, j), mean(i), 1e-12);
      }
      auto [lo, hi] = model.predict_interval(std::vector<double>{ q(i, 0) }, 0.1);
      EXPECT_NEAR(lo, mean(i), 1e-12);
      EXPECT_NEAR(hi, mean(i), 1e-12);
    }
  }
}

TEST(Calibrate, ZeroExternalPredictionsGiveTargetQuantiles)
{
  auto data = line_data({ 0, 1, 2, 3, 4, 5 }, { 3, -1, 4, 1, 5, 9 });
  std::vector<double> zeros(6, 0.0);
  auto cfg = fixed(0.8, RegressorKind::external);
  auto model = calibrate(data, cfg, zeros);

  auto cal = data.select_rows(model.calibration_rows);
  auto s = fit_standardizer(cal.features);
  auto snq = QuantileEstimator::fit(s.apply(cal.features), cal.target, { 0.8, 1 });
  for (double x : { -1.0, 0.5, 2.0, 4.5 }) {
    std::vector<double> z{ (x - s.means(0)) / s.stddevs(0) };
    for (double tau : { 0.1, 0.5, 0.9 }) {
      EXPECT_EQ(model.predict_quantile(std::vector<double>{ x }, tau, 0.0),
                snq.predict_quantile(z, tau));
    }
  }
}

TEST(CalibratedModel, Additivity)
{
  auto model = hand_model(10.0, { 0.5 });
  EXPECT_EQ(model.predict_quantile(std::vector<double>{ 0.0 }, 0.3), 10.5);
  auto sym = hand_model(2.0, { 1.0, -1.0 });
  EXPECT_EQ(sym.predict_quantile(std::vector<double>{ 0.0 }, 0.5), 1.0);
  EXPECT_THROW(sym.predict_quantile(std::vector<double>{ 0.0 }, 1.0), std::invalid_argument);
}

TEST(CalibratedModel, IntervalLevels)
{
  auto levels = interval_levels(0.05);
  EXPECT_EQ(levels.levels(), (std::vector<double>{ 0.025, 0.975 }));
  EXPECT_THROW(interval_levels(0.0), std::invalid_argument);
  EXPECT_THROW(interval_levels(1.0), std::invalid_argument);

  auto model = hand_model(0.0, { 4, 2, 3, 1 });
  auto [lo, hi] = model.predict_interval(std::vector<double>{ 0.0 }, 0.5);
  EXPECT_EQ(lo, 1.0);
  EXPECT_EQ(hi, 3.0);
}

TEST(CalibratedModel, IntervalsAreOrdered)
{
  auto data = generate({ GeneratorKind::sine_hetero, 600, 3, 1 });
  CalibrationConfig cfg;
  cfg.with_seed(3);
  auto model = calibrate(data, cfg);
  auto test = generate({ GeneratorKind::sine_hetero, 300, 4, 1 });
  for (double alpha : { 0.01, 0.1, 0.5, 0.9 }) {
    auto iv = model.predict_intervals(test.features, alpha);
    for (Eigen::Index i = 0; i < iv.rows(); ++i) {
      ASSERT_LE(iv(i, 0), iv(i, 1));
    }
  }
}

TEST(Calibrate, SplitsAreDisjointAndEstimatorUsesCalibrationRows)
{
  auto data = generate({ GeneratorKind::uniform_triangle, 101, 5, 2 });
  CalibrationConfig cfg;
  cfg.split.fraction_train = 0.3;
  cfg.with_seed(5);
  auto model = calibrate(data, cfg);
  std::set<std::size_t> fit(model.fit_rows.begin(), model.fit_rows.end());
  for (auto r : model.calibration_rows) {
    EXPECT_EQ(fit.count(r), 0u);
  }
  EXPECT_EQ(model.fit_rows.size() + model.calibration_rows.size(), 101u);
  EXPECT_EQ(model.fit_rows.size(), 30u);
  ASSERT_EQ(model.estimator().size(), static_cast<Eigen::Index>(model.calibration_rows.size()));
  // Stored points are exactly the transformed calibration rows, in order.
  auto cal = data.select_rows(model.calibration_rows);
  EXPECT_TRUE(model.estimator().points() == model.transform(cal.features));
  const auto& knn = std::get<KnnModel>(model.regressor().state());
  EXPECT_TRUE(knn.points == data.select_rows(model.fit_rows).features);
  ASSERT_TRUE(model.bandwidth_selection.has_value());
  EXPECT_EQ(model.estimator().kernel().bandwidth, model.bandwidth_selection->bandwidth);
}

TEST(Calibrate, TargetShiftMovesQuantiles)
{
  auto data = generate({ GeneratorKind::sine_hetero, 400, 9, 0 });
  auto shifted = data;
  const double c = 12.5;
  shifted.target.array() += c;
  auto cfg = fixed(0.2);
  auto a = calibrate(data, cfg);
  auto b = calibrate(shifted, cfg);
  auto test = generate({ GeneratorKind::sine_hetero, 100, 10, 0 });
  auto qa = a.predict_quantiles(test.features, TauGrid::uniform99());
  auto qb = b.predict_quantiles(test.features, TauGrid::uniform99());
  // Exact in real arithmetic; the OLS solve and the subtraction each round.
  EXPECT_LT((qb.array() - qa.array() - c).abs().maxCoeff(), 1e-9);
}

TEST(Calibrate, MarginalBaselineIgnoresFeatures)
{
  auto data = generate({ GeneratorKind::sine_hetero, 400, 2, 0 });
  CalibrationConfig cfg;
  cfg.marginal = true;
  cfg.regressor.kind = RegressorKind::ols;
  auto model = calibrate(data, cfg);
  EXPECT_TRUE(std::isinf(model.estimator().kernel().bandwidth));
  Matrix two(2, 1);
  two << 0.5, 14.0;
  auto r = model.residual_quantiles(two, TauGrid::uniform99());
  EXPECT_TRUE(r.row(0) == r.row(1));
}

TEST(Calibrate, Errors)
{
  auto small = line_data({ 0, 1, 2 }, { 0, 1, 2 });
  EXPECT_THROW(calibrate(small, fixed(0.1)), std::invalid_argument);
  auto data = line_data({ 0, 1, 2, 3 }, { 0, 1, 2, 3 });
  EXPECT_THROW(calibrate(data, fixed(0.1, RegressorKind::external)), std::invalid_argument);
  std::vector<double> wrong(3, 0.0);
  EXPECT_THROW(calibrate(data, fixed(0.1, RegressorKind::external), wrong), std::invalid_argument);
}

TEST(Calibrate, ProjectionOnlyTouchesTheQuantileFeatures)
{
  auto data = generate({ GeneratorKind::sine_hetero, 500, 1, 3 });
  CalibrationConfig cfg;
  cfg.with_seed(1);
  cfg.projection.kind = ProjectionKind::random_gaussian;
  cfg.projection.d0 = 2;
  auto model = calibrate(data, cfg);
  EXPECT_EQ(model.estimator().dims(), 2);
  EXPECT_EQ(model.regressor().dims(), 4);
  EXPECT_EQ(model.dims(), 4);
  Matrix q = data.features.topRows(5);
  EXPECT_EQ(model.transform(q).cols(), 2);
  EXPECT_EQ(model.predict_quantiles(q, TauGrid({ 0.5 })).rows(), 5);
}

TEST(Calibrate, NrcTracksTheSineUpperQuantile)
{
  const double x = 7.5;
  const double truth = analytic_quantile(GeneratorKind::sine_hetero, x, 0.975);
  double avg = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto data = generate({ GeneratorKind::sine_hetero, 5000, seed, 0 });
    CalibrationConfig cfg;
    cfg.with_seed(seed);
    auto model = calibrate(data, cfg);
    avg += model.predict_quantile(std::vector<double>{ x }, 0.975) / 5.0;
  }
  EXPECT_NEAR(avg, truth, 0.3);
}

// Coverage of Y against f + Q equals coverage of U = Y - f against Q.
TEST(Calibrate, CoverageCountsAgreeOnResidualScale)
{
  const auto grid = TauGrid::uniform99();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto data = generate({ GeneratorKind::sine_hetero, 1000, seed, 0 });
    CalibrationConfig cfg;
    cfg.with_seed(seed);
    auto model = calibrate(data, cfg);
    auto test = generate({ GeneratorKind::sine_hetero, 1000, seed + 50, 0 });
    auto q = model.predict_quantiles(test.features, grid);
    auto r = model.residual_quantiles(test.features, grid);
    Vector u = test.target - model.predict_mean(test.features);
    for (Eigen::Index j = 0; j < 99; ++j) {
      long on_y = 0;
      long on_u = 0;
      for (Eigen::Index i = 0; i < test.rows(); ++i) {
        on_y += test.target(i) <= q(i, j);
        on_u += u(i) <= r(i, j);
      }
      ASSERT_EQ(on_y, on_u) << "seed " << seed << " level " << j;
    }
  }
}

TEST(ModelIo, RoundTripReproducesPredictionsBitwise)
{
  regcal::testing::ScratchDir dir;
  const auto grid = TauGrid::uniform99();
  auto test = generate({ GeneratorKind::sine_hetero, 200, 77, 2 });
  std::vector<CalibrationConfig> configs(4);
  configs[0].with_seed(1);
  configs[1] = fixed(0.4);
  configs[2].marginal = true;
  configs[3].projection = { ProjectionKind::random_gaussian, 2, 4 };
  configs[3].with_seed(4);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    auto data = generate({ GeneratorKind::sine_hetero, 300, c, 2 });
    auto model = calibrate(data, configs[c]);
    save_model(dir.file("m.json"), model);
    auto back = load_model(dir.file("m.json"));
    EXPECT_TRUE(model.predict_quantiles(test.features, grid) ==
                back.predict_quantiles(test.features, grid))
      << "config " << c;
    EXPECT_EQ(back.feature_names(), model.feature_names());
    EXPECT_EQ(back.estimator().kernel().bandwidth, model.estimator().kernel().bandwidth);
    EXPECT_EQ(model_to_json(back).dump(), model_to_json(model).dump());
  }
  EXPECT_THROW(load_model(dir.write("bad.json", "{\"format\": \"other\"}")), DataError);
  EXPECT_THROW(load_model(dir.write("junk.json", "not json")), DataError);
  EXPECT_THROW(load_model(dir.file("missing.json")), DataError);
}

TEST(ModelIo, FixedBandwidthIsEchoedWithoutCrossValidation)
{
  auto data = generate({ GeneratorKind::sine_hetero, 100, 1, 0 });
  auto model = calibrate(data, fixed(0.5));
  auto doc = model_to_json(model);
  EXPECT_EQ(doc["estimator"]["bandwidth"].get<double>(), 0.5);
  EXPECT_EQ(doc["config"]["bandwidth_mode"], "fixed");
  EXPECT_FALSE(doc["config"].contains("cross_validation"));
}

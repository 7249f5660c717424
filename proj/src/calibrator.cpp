#include "regcal/calibrator.hpp"

#include <limits>
#include <stdexcept>

namespace regcal {

namespace {

std::vector<double> gather(std::span<const double> values, const std::vector<std::size_t>& rows)
{
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    out.push_back(values[r]);
  }
  return out;
}

ProjectionMap build_projection(const ProjectionSpec& spec, const Dataset& data)
{
  switch (spec.kind) {
    case ProjectionKind::identity:
      return ProjectionMap::identity(data.dims());
    case ProjectionKind::random_gaussian:
      return gaussian_projection(data.dims(), spec.d0, spec.seed);
    case ProjectionKind::covariate_select:
      // Correlations use the full dataset, before splitting.
      return correlation_select(data, spec.d0);
  }
  throw std::invalid_argument("unknown projection kind");
}

} // namespace

CalibrationConfig& CalibrationConfig::with_seed(std::uint64_t seed)
{
  split.seed = seed;
  search.seed = seed;
  projection.seed = seed;
  return *this;
}

CalibratedModel::CalibratedModel(FittedRegressor regressor,
                                 Standardizer standardizer,
                                 ProjectionMap projection,
                                 QuantileEstimator estimator,
                                 std::vector<std::string> feature_names,
                                 std::string target_name)
  : regressor_(std::move(regressor))
  , standardizer_(std::move(standardizer))
  , projection_(std::move(projection))
  , estimator_(std::move(estimator))
  , feature_names_(std::move(feature_names))
  , target_name_(std::move(target_name))
{
  projection_.validate();
  if (standardizer_.means.size() != projection_.input_dims ||
      projection_.output_dims != estimator_.dims() ||
      regressor_.dims() != standardizer_.means.size()) {
    throw std::invalid_argument("calibrated model components disagree on dimensions");
  }
  if (static_cast<Eigen::Index>(feature_names_.size()) != dims()) {
    throw std::invalid_argument("feature name count does not match model dimension");
  }
}

Matrix CalibratedModel::transform(const Matrix& xs) const
{
  return projection_.apply(standardizer_.apply(xs));
}

Vector CalibratedModel::predict_mean(const Matrix& xs,
                                     std::optional<std::span<const double>> external) const
{
  return regressor_.predict(xs, external);
}

Matrix CalibratedModel::residual_quantiles(const Matrix& xs, const TauGrid& taus) const
{
  return estimator_.predict_quantile_batch(transform(xs), taus);
}

Matrix CalibratedModel::predict_quantiles(const Matrix& xs,
                                          const TauGrid& taus,
                                          std::optional<std::span<const double>> external) const
{
  Vector mean = predict_mean(xs, external);
  Matrix q = residual_quantiles(xs, taus);
  q.colwise() += mean;
  return q;
}

double CalibratedModel::predict_quantile(std::span<const double> x,
                                         double tau,
                                         std::optional<double> external) const
{
  check_tau(tau);
  Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  std::optional<std::span<const double>> ext;
  if (external) {
    ext = std::span<const double>(&*external, 1);
  }
  return predict_quantiles(row, TauGrid({ tau }), ext)(0, 0);
}

TauGrid interval_levels(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  return TauGrid({ alpha / 2.0, 1.0 - alpha / 2.0 });
}

std::pair<double, double> CalibratedModel::predict_interval(std::span<const double> x,
                                                            double alpha,
                                                            std::optional<double> external) const
{
  Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  std::optional<std::span<const double>> ext;
  if (external) {
    ext = std::span<const double>(&*external, 1);
  }
  Matrix q = predict_quantiles(row, interval_levels(alpha), ext);
  return { q(0, 0), q(0, 1) };
}

Matrix CalibratedModel::predict_intervals(const Matrix& xs,
                                          double alpha,
                                          std::optional<std::span<const double>> external) const
{
  return predict_quantiles(xs, interval_levels(alpha), external);
}

CalibratedModel calibrate(const Dataset& data,
                          const CalibrationConfig& cfg,
                          std::optional<std::span<const double>> external)
{
  data.validate();
  const auto n = static_cast<std::size_t>(data.rows());
  if (n < 4) {
    throw std::invalid_argument("calibration needs at least 4 rows, got " + std::to_string(n));
  }
  if (external && external->size() != n) {
    throw std::invalid_argument("external predictions have " + std::to_string(external->size()) +
                                " rows, expected " + std::to_string(n));
  }
  if (cfg.regressor.kind == RegressorKind::external && !external) {
    throw std::invalid_argument("external regressor needs a predictions column");
  }

  const auto parts = split_indices(n, cfg.split);
  const Dataset fit_part = data.select_rows(parts.first);
  const Dataset cal_part = data.select_rows(parts.second);

  auto regressor = fit_regressor(cfg.regressor, fit_part);

  std::optional<std::vector<double>> cal_external;
  if (external) {
    cal_external = gather(*external, parts.second);
  }
  auto res = residuals(regressor,
                       cal_part,
                       cal_external ? std::optional<std::span<const double>>(*cal_external)
                                    : std::nullopt);

  auto standardizer = fit_standardizer(cal_part.features);
  auto projection = build_projection(cfg.projection, data);
  Matrix z = projection.apply(standardizer.apply(cal_part.features));

  KernelConfig kernel;
  kernel.min_neighbors = cfg.min_neighbors;
  std::optional<BandwidthSelection> selection;
  if (cfg.marginal) {
    kernel.bandwidth = std::numeric_limits<double>::infinity();
  } else if (cfg.bandwidth) {
    kernel.bandwidth = *cfg.bandwidth;
  } else {
    BandwidthSearch search = cfg.search;
    search.min_neighbors = cfg.min_neighbors;
    selection = cross_validate_bandwidth(z, res.residuals, search);
    kernel.bandwidth = selection->bandwidth;
  }

  auto estimator = QuantileEstimator::fit(std::move(z), std::move(res.residuals), kernel);
  CalibratedModel model(std::move(regressor),
                        std::move(standardizer),
                        std::move(projection),
                        std::move(estimator),
                        data.feature_names,
                        data.target_name);
  model.config = cfg;
  model.fit_rows = parts.first;
  model.calibration_rows = parts.second;
  model.bandwidth_selection = std::move(selection);
  return model;
}

} // namespace regcal

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "regcal/dataset.hpp"
#include "regcal/dimred.hpp"
#include "regcal/metrics.hpp"
#include "regcal/regress.hpp"
#include "regcal/snq.hpp"

namespace regcal {

struct ProjectionSpec
{
  ProjectionKind kind = ProjectionKind::identity;
  //! Target dimension; ignored for identity.
  Eigen::Index d0 = 1;
  std::uint64_t seed = 0;
};

struct CalibrationConfig
{
  SplitSpec split;
  RegressorSpec regressor;
  //! Fixed kernel radius; empty selects it by cross-validation on the
  //! calibration part.
  std::optional<double> bandwidth;
  std::size_t min_neighbors = 1;
  BandwidthSearch search;
  ProjectionSpec projection;
  //! Ignore the features and use the whole calibration sample for every
  //! query (marginal residual quantile baseline).
  bool marginal = false;

  //! Sets the split, cross-validation and projection seeds together.
  CalibrationConfig& with_seed(std::uint64_t seed);
};

//! Base regressor plus local residual quantiles. Quantile predictions are
//! f(x) + Q_tau(residual | z), where z is x standardized with the
//! calibration-part statistics and then projected.
class CalibratedModel
{
public:
  CalibratedModel(FittedRegressor regressor,
                  Standardizer standardizer,
                  ProjectionMap projection,
                  QuantileEstimator estimator,
                  std::vector<std::string> feature_names,
                  std::string target_name);

  //! Standardize then project.
  Matrix transform(const Matrix& xs) const;

  Vector predict_mean(const Matrix& xs,
                      std::optional<std::span<const double>> external = std::nullopt) const;

  //! Residual quantiles only, without the regressor offset.
  Matrix residual_quantiles(const Matrix& xs, const TauGrid& taus) const;

  Matrix predict_quantiles(const Matrix& xs,
                           const TauGrid& taus,
                           std::optional<std::span<const double>> external = std::nullopt) const;

  double predict_quantile(std::span<const double> x,
                          double tau,
                          std::optional<double> external = std::nullopt) const;

  std::pair<double, double> predict_interval(std::span<const double> x,
                                             double alpha,
                                             std::optional<double> external = std::nullopt) const;

  //! Columns lo, hi for every row.
  Matrix predict_intervals(const Matrix& xs,
                           double alpha,
                           std::optional<std::span<const double>> external = std::nullopt) const;

  const FittedRegressor& regressor() const { return regressor_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const ProjectionMap& projection() const { return projection_; }
  const QuantileEstimator& estimator() const { return estimator_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::string& target_name() const { return target_name_; }
  Eigen::Index dims() const { return standardizer_.means.size(); }

  // Provenance, filled in by calibrate().
  CalibrationConfig config;
  std::vector<std::size_t> fit_rows;
  std::vector<std::size_t> calibration_rows;
  std::optional<BandwidthSelection> bandwidth_selection;

private:
  FittedRegressor regressor_;
  Standardizer standardizer_;
  ProjectionMap projection_;
  QuantileEstimator estimator_;
  std::vector<std::string> feature_names_;
  std::string target_name_;
};

//! Split, fit the regressor on the first part, compute residuals on the
//! second part, and fit the local quantile estimator on those residuals.
//! `external` holds per-row predictions for the external regressor kind.
CalibratedModel calibrate(const Dataset& data,
                          const CalibrationConfig& cfg,
                          std::optional<std::span<const double>> external = std::nullopt);

//! Interval levels (alpha/2, 1 - alpha/2).
TauGrid interval_levels(double alpha);

} // namespace regcal

#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>

#include "regcal/dataset.hpp"

namespace regcal {

enum class RegressorKind
{
  ols,
  knn,
  external
};

std::string to_string(RegressorKind kind);
RegressorKind regressor_kind_from_string(const std::string& name);

struct RegressorSpec
{
  RegressorKind kind = RegressorKind::knn;
  std::size_t knn_k = 20;
  //! Column holding precomputed predictions (external kind only).
  std::string external_column = "prediction";

  void validate() const;
};

//! Least squares with an intercept. coefficients(0) is the intercept.
struct OlsModel
{
  Vector coefficients;
  bool ridge_fallback = false;
};

struct KnnModel
{
  Matrix points;
  Vector targets;
  std::size_t k = 1;
};

//! Predictions are supplied by the caller, aligned by row.
struct ExternalModel
{
  std::string column;
  Eigen::Index dims = 0;
};

//! Base regressor; immutable after fit.
class FittedRegressor
{
public:
  using State = std::variant<OlsModel, KnnModel, ExternalModel>;

  explicit FittedRegressor(State state);

  RegressorKind kind() const;
  const State& state() const { return state_; }
  Eigen::Index dims() const;

  //! `external` is required for the external kind and ignored otherwise.
  Vector predict(const Matrix& xs,
                 std::optional<std::span<const double>> external = std::nullopt) const;

private:
  State state_;
};

//! Ridge strength added to the normal equations when they are singular.
inline constexpr double kRidgeFallback = 1e-8;

FittedRegressor fit_regressor(const RegressorSpec& spec, const Dataset& train);

struct ResidualSample
{
  Matrix points;
  Vector residuals;
};

//! residuals[i] = target[i] - prediction[i].
ResidualSample residuals(const FittedRegressor& model,
                         const Dataset& data,
                         std::optional<std::span<const double>> external = std::nullopt);

} // namespace regcal

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regcal/dataset.hpp"

namespace regcal {

enum class ProjectionKind
{
  identity,
  random_gaussian,
  covariate_select
};

std::string to_string(ProjectionKind kind);
ProjectionKind projection_kind_from_string(const std::string& name);

//! Linear feature map R^d -> R^d0 used before quantile estimation.
struct ProjectionMap
{
  ProjectionKind kind = ProjectionKind::identity;
  Eigen::Index input_dims = 0;
  Eigen::Index output_dims = 0;
  //! d0 x d, random_gaussian only.
  Eigen::MatrixXd matrix;
  //! covariate_select only.
  std::vector<std::size_t> selected;

  static ProjectionMap identity(Eigen::Index d);

  void validate() const;
  Matrix apply(const Matrix& xs) const;
};

//! d0 x d matrix with iid N(0, 1/d) entries when d0 < d; identity otherwise.
ProjectionMap gaussian_projection(Eigen::Index d, Eigen::Index d0, std::uint64_t seed);

//! Pearson correlation; 0 when either side has zero variance.
double pearson_correlation(const Vector& a, const Vector& b);

//! Keeps the d0 columns most correlated (in absolute value) with the
//! target; ties go to the lower column index. Identity when d0 >= d.
ProjectionMap correlation_select(const Dataset& data, Eigen::Index d0);

} // namespace regcal

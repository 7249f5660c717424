#include "regcal/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace regcal {

std::string to_string(ProjectionKind kind)
{
  switch (kind) {
    case ProjectionKind::identity:
      return "identity";
    case ProjectionKind::random_gaussian:
      return "random_gaussian";
    case ProjectionKind::covariate_select:
      return "covariate_select";
  }
  return "unknown";
}

ProjectionKind projection_kind_from_string(const std::string& name)
{
  if (name == "identity" || name == "none") {
    return ProjectionKind::identity;
  }
  if (name == "random_gaussian" || name == "gaussian") {
    return ProjectionKind::random_gaussian;
  }
  if (name == "covariate_select" || name == "covariate") {
    return ProjectionKind::covariate_select;
  }
  throw std::invalid_argument("unknown projection kind '" + name + "'");
}

ProjectionMap ProjectionMap::identity(Eigen::Index d)
{
  ProjectionMap map;
  map.kind = ProjectionKind::identity;
  map.input_dims = d;
  map.output_dims = d;
  return map;
}

void ProjectionMap::validate() const
{
  if (input_dims < 1 || output_dims < 1) {
    throw std::invalid_argument("projection dimensions must be positive");
  }
  switch (kind) {
    case ProjectionKind::identity:
      if (input_dims != output_dims) {
        throw std::invalid_argument("identity projection must preserve dimension");
      }
      break;
    case ProjectionKind::random_gaussian:
      if (output_dims > input_dims || matrix.rows() != output_dims ||
          matrix.cols() != input_dims) {
        throw std::invalid_argument("projection matrix has the wrong shape");
      }
      break;
    case ProjectionKind::covariate_select: {
      if (output_dims > input_dims ||
          static_cast<Eigen::Index>(selected.size()) != output_dims) {
        throw std::invalid_argument("selected column count does not match output dimension");
      }
      std::set<std::size_t> unique(selected.begin(), selected.end());
      if (unique.size() != selected.size()) {
        throw std::invalid_argument("selected columns must be unique");
      }
      for (auto c : selected) {
        if (static_cast<Eigen::Index>(c) >= input_dims) {
          throw std::invalid_argument("selected column out of range");
        }
      }
      break;
    }
  }
}

Matrix ProjectionMap::apply(const Matrix& xs) const
{
  if (xs.cols() != input_dims) {
    throw std::invalid_argument("projection expects width " + std::to_string(input_dims) +
                                ", got " + std::to_string(xs.cols()));
  }
  switch (kind) {
    case ProjectionKind::identity:
      return xs;
    case ProjectionKind::random_gaussian:
      return xs * matrix.transpose();
    case ProjectionKind::covariate_select: {
      Matrix out(xs.rows(), output_dims);
      for (std::size_t j = 0; j < selected.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = xs.col(static_cast<Eigen::Index>(selected[j]));
      }
      return out;
    }
  }
  throw std::logic_error("unhandled projection kind");
}

ProjectionMap gaussian_projection(Eigen::Index d, Eigen::Index d0, std::uint64_t seed)
{
  if (d < 1 || d0 < 1) {
    throw std::invalid_argument("projection dimensions must be positive");
  }
  if (d0 >= d) {
    return ProjectionMap::identity(d);
  }
  ProjectionMap map;
  map.kind = ProjectionKind::random_gaussian;
  map.input_dims = d;
  map.output_dims = d0;
  map.matrix.resize(d0, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (Eigen::Index r = 0; r < d0; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      map.matrix(r, c) = normal(rng);
    }
  }
  return map;
}

double pearson_correlation(const Vector& a, const Vector& b)
{
  if (a.size() != b.size() || a.size() == 0) {
    throw std::invalid_argument("correlation needs equal-length nonempty inputs");
  }
  if (a.minCoeff() == a.maxCoeff() || b.minCoeff() == b.maxCoeff()) {
    return 0.0;
  }
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = (da * da).sum();
  const double sbb = (db * db).sum();
  if (saa <= 0.0 || sbb <= 0.0) {
    return 0.0;
  }
  return (da * db).sum() / std::sqrt(saa * sbb);
}

ProjectionMap correlation_select(const Dataset& data, Eigen::Index d0)
{
  const auto d = data.dims();
  if (d0 < 1) {
    throw std::invalid_argument("d0 must be at least 1");
  }
  if (d0 >= d) {
    return ProjectionMap::identity(d);
  }
  std::vector<double> score(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    score[static_cast<std::size_t>(j)] =
      std::abs(pearson_correlation(data.features.col(j), data.target));
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  ProjectionMap map;
  map.kind = ProjectionKind::covariate_select;
  map.input_dims = d;
  map.output_dims = d0;
  map.selected.assign(order.begin(), order.begin() + d0);
  return map;
}

} // namespace regcal

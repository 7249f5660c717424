#include "regcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "regcal/metrics.hpp"

namespace regcal {

std::string to_string(GeneratorKind kind)
{
  switch (kind) {
    case GeneratorKind::sine_hetero:
      return "sine_hetero";
    case GeneratorKind::uniform_triangle:
      return "uniform_triangle";
    case GeneratorKind::scaled_uniform:
      return "scaled_uniform";
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(const std::string& name)
{
  if (name == "sine_hetero" || name == "sine") {
    return GeneratorKind::sine_hetero;
  }
  if (name == "uniform_triangle" || name == "example1") {
    return GeneratorKind::uniform_triangle;
  }
  if (name == "scaled_uniform") {
    return GeneratorKind::scaled_uniform;
  }
  throw std::invalid_argument("unknown generator '" + name + "'");
}

double sine_mean(double x)
{
  return 4.0 * std::sin(2.0 * std::numbers::pi * x / 15.0);
}

double sine_stddev(double x)
{
  return std::max(0.2 * x * std::abs(std::sin(x)), 0.1);
}

Dataset generate(const GeneratorSpec& spec)
{
  if (spec.n < 1) {
    throw std::invalid_argument("generator needs n >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(1 + spec.nuisance_dims);
  Dataset data;
  data.features.resize(n, d);
  data.target.resize(n);
  data.feature_names.push_back("x");
  for (std::size_t k = 1; k <= spec.nuisance_dims; ++k) {
    data.feature_names.push_back("z" + std::to_string(k));
  }
  data.target_name = "y";

  for (Eigen::Index i = 0; i < n; ++i) {
    double x = 0.0;
    double y = 0.0;
    switch (spec.kind) {
      case GeneratorKind::sine_hetero:
        x = 15.0 * unit(rng);
        y = sine_mean(x) + sine_stddev(x) * normal(rng);
        break;
      case GeneratorKind::uniform_triangle:
        x = unit(rng);
        y = x * unit(rng);
        break;
      case GeneratorKind::scaled_uniform: {
        x = unit(rng);
        const double u = 2.0 * unit(rng) - 1.0;
        y = u * x;
        break;
      }
    }
    data.features(i, 0) = x;
    for (Eigen::Index j = 1; j < d; ++j) {
      data.features(i, j) = unit(rng);
    }
    data.target(i) = y;
  }
  return data;
}

double analytic_quantile(GeneratorKind kind, double x, double tau)
{
  check_tau(tau);
  switch (kind) {
    case GeneratorKind::sine_hetero: {
      boost::math::normal_distribution<double> standard;
      return sine_mean(x) + sine_stddev(x) * boost::math::quantile(standard, tau);
    }
    case GeneratorKind::uniform_triangle:
      return tau * x;
    case GeneratorKind::scaled_uniform:
      // Y | X = x is U[-x, x].
      return (2.0 * tau - 1.0) * x;
  }
  throw std::invalid_argument("unknown generator kind");
}

double sharpness_counterexample_predictor(double x, double /*tau*/)
{
  return x <= 0.9 ? x : 0.0;
}

ShiftResult covariate_shift_testset(const Dataset& data, const ShiftSpec& shift)
{
  data.validate();
  if (!(shift.pool_fraction > 0.0 && shift.pool_fraction < 1.0) || shift.resample_count < 1 ||
      !(shift.variance_scale > 0.0)) {
    throw std::invalid_argument("shift parameters must be positive (pool fraction below 1)");
  }
  const auto n = static_cast<std::size_t>(data.rows());
  const auto pool_size = static_cast<std::size_t>(
    std::llround(shift.pool_fraction * static_cast<double>(n)));
  if (pool_size < 2 || n - pool_size < 2) {
    throw std::invalid_argument("dataset too small: pool and training part need 2 rows each");
  }

  std::mt19937_64 rng(shift.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::shuffle(order.begin(), order.end(), rng);

  ShiftResult out;
  out.pool_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool_size));
  out.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(pool_size), order.end());
  out.train = data.select_rows(out.train_rows);

  const auto d = data.dims();
  const Matrix& xt = out.train.features;
  const Vector mean = xt.colwise().mean().transpose();
  const Eigen::MatrixXd centered = xt.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
    (centered.transpose() * centered) / static_cast<double>(xt.rows() - 1);

  const double trace = cov.trace();
  bool degenerate = !(trace > 0.0);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (!degenerate && (llt.info() != Eigen::Success || llt.rcond() < 1e-12)) {
    cov.diagonal().array() += 1e-9 * trace / static_cast<double>(d);
    llt.compute(cov);
    degenerate = llt.info() != Eigen::Success;
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    z(j) = normal(rng);
  }
  out.seed_point = degenerate ? mean : Vector(mean + llt.matrixL() * z);

  std::vector<double> logw(pool_size, 0.0);
  if (!degenerate) {
    for (std::size_t k = 0; k < pool_size; ++k) {
      Vector diff =
        data.features.row(static_cast<Eigen::Index>(out.pool_rows[k])).transpose() -
        out.seed_point;
      // (x-c)^T (s Sigma)^{-1} (x-c) via the Cholesky factor of Sigma.
      Vector solved = llt.matrixL().solve(diff);
      logw[k] = -0.5 * solved.squaredNorm() / shift.variance_scale;
    }
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> weights(pool_size);
  for (std::size_t k = 0; k < pool_size; ++k) {
    weights[k] = std::exp(logw[k] - top);
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  out.shifted_rows.reserve(shift.resample_count);
  for (std::size_t r = 0; r < shift.resample_count; ++r) {
    out.shifted_rows.push_back(out.pool_rows[pick(rng)]);
  }
  out.shifted_test = data.select_rows(out.shifted_rows);
  return out;
}

} // namespace regcal

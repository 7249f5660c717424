#include "regcal/snq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace regcal {

namespace {

double distance(const double* a, const double* b, Eigen::Index d)
{
  double ss = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    ss += diff * diff;
  }
  return std::sqrt(ss);
}

struct Ranked
{
  double dist;
  std::size_t index;
  bool operator<(const Ranked& o) const
  {
    return dist < o.dist || (dist == o.dist && index < o.index);
  }
};

// Number of leading entries (ascending by distance) inside the ball of
// radius h, widened so that at least `min_neighbors` are included.
std::size_t ball_prefix(const std::vector<Ranked>& ranked,
                        double h,
                        std::size_t min_neighbors)
{
  auto inside = static_cast<std::size_t>(
    std::upper_bound(ranked.begin(), ranked.end(), h,
                     [](double r, const Ranked& e) { return r < e.dist; }) -
    ranked.begin());
  const auto need = std::min(min_neighbors, ranked.size());
  if (inside >= need) {
    return inside;
  }
  const double widened = ranked[need - 1].dist;
  return static_cast<std::size_t>(
    std::upper_bound(ranked.begin(), ranked.end(), widened,
                     [](double r, const Ranked& e) { return r < e.dist; }) -
    ranked.begin());
}

} // namespace

void KernelConfig::validate() const
{
  if (!(bandwidth >= 0.0)) {
    throw std::invalid_argument("bandwidth must be nonnegative");
  }
  if (min_neighbors < 1) {
    throw std::invalid_argument("min_neighbors must be at least 1");
  }
}

namespace {

// 1-based rank of the left tau-quantile in a sample of size m: the smallest
// k with k/m >= tau, evaluated in floating point.
std::size_t left_rank(std::size_t m, double tau)
{
  const auto md = static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::clamp(std::ceil(tau * md), 1.0, md));
  while (k > 1 && static_cast<double>(k - 1) / md >= tau) {
    --k;
  }
  while (k < m && static_cast<double>(k) / md < tau) {
    ++k;
  }
  return k;
}

} // namespace

double empirical_left_quantile(std::span<const double> sorted, double tau)
{
  check_tau(tau);
  if (sorted.empty()) {
    throw std::invalid_argument("quantile of an empty sample");
  }
  return sorted[left_rank(sorted.size(), tau) - 1];
}

QuantileEstimator::QuantileEstimator(Matrix points, Vector values, KernelConfig kernel)
  : points_(std::move(points))
  , values_(std::move(values))
  , kernel_(kernel)
{
  const auto n = static_cast<std::size_t>(points_.rows());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{ 0 });
  std::stable_sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) {
    return points_(static_cast<Eigen::Index>(a), 0) < points_(static_cast<Eigen::Index>(b), 0);
  });
  keys_.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    keys_[t] = points_(static_cast<Eigen::Index>(order_[t]), 0);
  }
}

QuantileEstimator QuantileEstimator::fit(Matrix points, Vector values, KernelConfig kernel)
{
  kernel.validate();
  if (points.rows() < 1 || values.size() < 1) {
    throw std::invalid_argument("quantile estimator needs at least one point");
  }
  if (points.rows() != values.size()) {
    throw std::invalid_argument("point count (" + std::to_string(points.rows()) +
                                ") does not match value count (" +
                                std::to_string(values.size()) + ")");
  }
  if (points.cols() < 1) {
    throw std::invalid_argument("points need at least one dimension");
  }
  return QuantileEstimator(std::move(points), std::move(values), kernel);
}

void QuantileEstimator::check_query(std::span<const double> x) const
{
  if (static_cast<Eigen::Index>(x.size()) != points_.cols()) {
    throw std::invalid_argument("query has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(points_.cols()));
  }
}

LocalNeighborhood QuantileEstimator::neighborhood(std::span<const double> x) const
{
  check_query(x);
  const auto n = static_cast<std::size_t>(points_.rows());
  const auto d = points_.cols();
  LocalNeighborhood out;
  const double h = kernel_.bandwidth;
  out.effective_h = h;
  // The full distance is never below the first-coordinate gap as computed
  // here, so points outside this window cannot be in the ball.
  const double x0 = x[0];
  auto outside = [&](double p) {
    const double g = p - x0;
    return std::sqrt(g * g) > h;
  };
  const auto mid = std::lower_bound(keys_.begin(), keys_.end(), x0);
  const auto lo = std::partition_point(keys_.begin(), mid, outside);
  const auto hi = std::partition_point(mid, keys_.end(), [&](double p) { return !outside(p); });
  for (auto it = lo; it != hi; ++it) {
    const auto i = order_[static_cast<std::size_t>(it - keys_.begin())];
    if (distance(x.data(), points_.row(static_cast<Eigen::Index>(i)).data(), d) <= h) {
      out.indices.push_back(i);
    }
  }
  std::sort(out.indices.begin(), out.indices.end());
  if (out.indices.size() >= std::min(kernel_.min_neighbors, n)) {
    return out;
  }
  std::vector<Ranked> ranked(n);
  for (std::size_t i = 0; i < n; ++i) {
    ranked[i] = { distance(x.data(), points_.row(static_cast<Eigen::Index>(i)).data(), d), i };
  }
  std::sort(ranked.begin(), ranked.end());
  const auto need = std::min(kernel_.min_neighbors, n);
  out.effective_h = ranked[need - 1].dist;
  out.indices.clear();
  for (const auto& r : ranked) {
    if (r.dist > out.effective_h) {
      break;
    }
    out.indices.push_back(r.index);
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

std::vector<double> QuantileEstimator::neighborhood_values(std::span<const double> x) const
{
  auto hood = neighborhood(x);
  std::vector<double> vals;
  vals.reserve(hood.indices.size());
  for (auto i : hood.indices) {
    vals.push_back(values_(static_cast<Eigen::Index>(i)));
  }
  return vals;
}

double QuantileEstimator::predict_quantile(std::span<const double> x, double tau) const
{
  check_tau(tau);
  auto vals = neighborhood_values(x);
  const auto nth = vals.begin() + static_cast<std::ptrdiff_t>(left_rank(vals.size(), tau) - 1);
  std::nth_element(vals.begin(), nth, vals.end());
  return *nth;
}

// Few levels are cheaper by selection than by a full sort.
constexpr std::size_t kSelectLimit = 4;

Matrix QuantileEstimator::predict_quantile_batch(const Matrix& xs, const TauGrid& taus) const
{
  if (xs.cols() != points_.cols()) {
    throw std::invalid_argument("query width " + std::to_string(xs.cols()) +
                                " does not match estimator dimension " +
                                std::to_string(points_.cols()));
  }
  Matrix out(xs.rows(), static_cast<Eigen::Index>(taus.size()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    std::span<const double> x(xs.row(i).data(), static_cast<std::size_t>(xs.cols()));
    auto vals = neighborhood_values(x);
    if (taus.size() <= kSelectLimit) {
      for (std::size_t j = 0; j < taus.size(); ++j) {
        const auto nth =
          vals.begin() + static_cast<std::ptrdiff_t>(left_rank(vals.size(), taus[j]) - 1);
        std::nth_element(vals.begin(), nth, vals.end());
        out(i, static_cast<Eigen::Index>(j)) = *nth;
      }
      continue;
    }
    std::sort(vals.begin(), vals.end());
    for (std::size_t j = 0; j < taus.size(); ++j) {
      out(i, static_cast<Eigen::Index>(j)) = empirical_left_quantile(vals, taus[j]);
    }
  }
  return out;
}

std::vector<double> default_bandwidth_candidates(const Matrix& points,
                                                 std::size_t sample,
                                                 std::uint64_t seed)
{
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{ 0 });
  if (sample > 1 && n > sample) {
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(sample);
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      dists.push_back(distance(points.row(static_cast<Eigen::Index>(rows[a])).data(),
                               points.row(static_cast<Eigen::Index>(rows[b])).data(),
                               points.cols()));
    }
  }
  std::vector<double> out;
  if (dists.empty()) {
    return out;
  }
  std::sort(dists.begin(), dists.end());
  for (double p : { 0.05, 0.1, 0.2, 0.4, 0.6, 0.8 }) {
    const double h = empirical_left_quantile(dists, p);
    if (h > 0.0 && (out.empty() || h > out.back())) {
      out.push_back(h);
    }
  }
  return out;
}

std::vector<std::size_t> cv_fold_assignment(std::size_t n,
                                            std::size_t folds,
                                            std::uint64_t seed)
{
  if (folds < 2) {
    throw std::invalid_argument("cross-validation needs at least 2 folds");
  }
  if (n < folds) {
    throw std::invalid_argument("fewer points (" + std::to_string(n) +
                                ") than folds (" + std::to_string(folds) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    fold[order[pos]] = pos * folds / n;
  }
  return fold;
}

BandwidthSelection cross_validate_bandwidth(const Matrix& points,
                                            const Vector& values,
                                            const BandwidthSearch& search)
{
  if (points.rows() != values.size()) {
    throw std::invalid_argument("point count does not match value count");
  }
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = points.cols();
  const auto fold_of = cv_fold_assignment(n, search.folds, search.seed);

  BandwidthSelection result;
  result.candidates = search.candidates;
  if (result.candidates.empty()) {
    result.candidates =
      default_bandwidth_candidates(points, search.distance_sample, search.seed);
  }
  for (std::size_t c = 0; c < result.candidates.size(); ++c) {
    if (!(result.candidates[c] > 0.0) ||
        (c > 0 && !(result.candidates[c] > result.candidates[c - 1]))) {
      throw std::invalid_argument("bandwidth candidates must be positive and strictly increasing");
    }
  }
  if (search.lipschitz_hint) {
    const double lip = *search.lipschitz_hint;
    if (lip < 0.0) {
      throw std::invalid_argument("Lipschitz hint must be nonnegative");
    }
    double h = 0.0;
    const double dd = static_cast<double>(d);
    if (lip > 0.0) {
      h = std::pow(lip, 2.0 / (dd + 2.0)) *
          std::pow(static_cast<double>(n), -1.0 / (dd + 2.0));
    } else {
      Vector lo = points.colwise().minCoeff();
      Vector hi = points.colwise().maxCoeff();
      h = (hi - lo).norm();
    }
    if (h > 0.0) {
      result.candidates.push_back(h);
      std::sort(result.candidates.begin(), result.candidates.end());
      result.candidates.erase(
        std::unique(result.candidates.begin(), result.candidates.end()),
        result.candidates.end());
    }
  }
  if (result.candidates.empty()) {
    // Every stored point coincides; any radius gives the same neighborhoods.
    result.bandwidth = 0.0;
    return result;
  }
  if (result.candidates.size() == 1) {
    result.bandwidth = result.candidates.front();
    result.scores.assign(1, std::numeric_limits<double>::quiet_NaN());
    return result;
  }

  const auto& grid = search.tau_grid;
  const auto ncand = result.candidates.size();
  result.scores.assign(ncand, 0.0);

  std::vector<Ranked> ranked;
  std::vector<double> sorted_vals;
  std::vector<double> chunk;
  std::vector<double> merged;
  for (std::size_t k = 0; k < search.folds; ++k) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held;
    for (std::size_t i = 0; i < n; ++i) {
      (fold_of[i] == k ? held : train).push_back(i);
    }
    if (search.max_eval_per_fold > 0 && held.size() > search.max_eval_per_fold) {
      held.resize(search.max_eval_per_fold);
    }
    std::vector<double> fold_loss(ncand, 0.0);
    ranked.resize(train.size());
    for (auto q : held) {
      const double* xq = points.row(static_cast<Eigen::Index>(q)).data();
      for (std::size_t t = 0; t < train.size(); ++t) {
        ranked[t] = { distance(xq, points.row(static_cast<Eigen::Index>(train[t])).data(), d),
                      train[t] };
      }
      std::sort(ranked.begin(), ranked.end());
      sorted_vals.clear();
      std::size_t taken = 0;
      for (std::size_t c = 0; c < ncand; ++c) {
        const auto prefix = ball_prefix(ranked, result.candidates[c], search.min_neighbors);
        if (prefix > taken) {
          chunk.clear();
          for (std::size_t t = taken; t < prefix; ++t) {
            chunk.push_back(values(static_cast<Eigen::Index>(ranked[t].index)));
          }
          std::sort(chunk.begin(), chunk.end());
          merged.resize(sorted_vals.size() + chunk.size());
          std::merge(sorted_vals.begin(), sorted_vals.end(),
                     chunk.begin(), chunk.end(), merged.begin());
          sorted_vals.swap(merged);
          taken = prefix;
        }
        const double u = values(static_cast<Eigen::Index>(q));
        double loss = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
          loss += pinball_loss(empirical_left_quantile(sorted_vals, grid[j]), u, grid[j]);
        }
        fold_loss[c] += loss;
      }
    }
    const double denom = static_cast<double>(held.size() * grid.size());
    for (std::size_t c = 0; c < ncand; ++c) {
      result.scores[c] += fold_loss[c] / denom;
    }
  }
  for (auto& s : result.scores) {
    s /= static_cast<double>(search.folds);
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < ncand; ++c) {
    if (result.scores[c] <= result.scores[best]) {
      best = c;
    }
  }
  result.bandwidth = result.candidates[best];
  if (search.rate_rescale) {
    const double full = static_cast<double>(n);
    const double reference = full - full / static_cast<double>(search.folds);
    result.bandwidth *= std::pow(full / reference, -1.0 / (static_cast<double>(d) + 2.0));
  }
  return result;
}

double select_bandwidth(const Matrix& points,
                        const Vector& values,
                        const BandwidthSearch& search)
{
  return cross_validate_bandwidth(points, values, search).bandwidth;
}

} // namespace regcal

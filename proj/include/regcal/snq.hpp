#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "regcal/dataset.hpp"
#include "regcal/metrics.hpp"

namespace regcal {

//! Naive (ball indicator) kernel: a stored point contributes to the local
//! distribution at x iff ||x - point|| <= bandwidth.
struct KernelConfig
{
  double bandwidth = 0.0;
  //! Smallest neighborhood size; the ball is widened to reach it.
  std::size_t min_neighbors = 1;

  void validate() const;
};

struct LocalNeighborhood
{
  std::vector<std::size_t> indices;
  double effective_h = 0.0;
};

//! Left tau-quantile of an ascending sample: the smallest v with
//! #{values <= v} / m >= tau.
double empirical_left_quantile(std::span<const double> sorted, double tau);

//! Local empirical quantile estimator. Each prediction takes the
//! unweighted sample of stored values whose points fall in the kernel ball
//! around the query and returns its left tau-quantile, which minimizes the
//! local average pinball loss.
//!
//! The estimator is immutable after fit; all queries are const.
class QuantileEstimator
{
public:
  static QuantileEstimator fit(Matrix points, Vector values, KernelConfig kernel);

  LocalNeighborhood neighborhood(std::span<const double> x) const;

  double predict_quantile(std::span<const double> x, double tau) const;

  //! Row i holds the quantiles of query i at every grid level.
  Matrix predict_quantile_batch(const Matrix& xs, const TauGrid& taus) const;

  const Matrix& points() const { return points_; }
  const Vector& values() const { return values_; }
  const KernelConfig& kernel() const { return kernel_; }
  Eigen::Index dims() const { return points_.cols(); }
  Eigen::Index size() const { return points_.rows(); }

private:
  QuantileEstimator(Matrix points, Vector values, KernelConfig kernel);

  std::vector<double> neighborhood_values(std::span<const double> x) const;
  void check_query(std::span<const double> x) const;

  Matrix points_;
  Vector values_;
  KernelConfig kernel_;
  // Point indices ordered by first coordinate, for pruning ball queries.
  std::vector<std::size_t> order_;
  std::vector<double> keys_;
};

struct BandwidthSearch
{
  //! Strictly increasing positive radii. Empty selects the default grid of
  //! pairwise-distance quantiles.
  std::vector<double> candidates;
  std::size_t folds = 5;
  TauGrid tau_grid = TauGrid::uniform99();
  std::uint64_t seed = 0;
  //! Lipschitz constant of the conditional quantile, if known. Adds the
  //! rate-optimal radius L^{2/(d+2)} n^{-1/(d+2)} to the candidates (the
  //! widest pairwise distance when L = 0).
  std::optional<double> lipschitz_hint;
  std::size_t min_neighbors = 1;
  //! Held-out points scored per fold; 0 scores all of them.
  std::size_t max_eval_per_fold = 500;
  //! Points used to estimate pairwise-distance quantiles for the default grid.
  std::size_t distance_sample = 1000;
  //! Rescale the winner from fold-training size to full size with the
  //! n^{-1/(d+2)} rate.
  bool rate_rescale = false;
};

struct BandwidthSelection
{
  double bandwidth = 0.0;
  std::vector<double> candidates;
  //! Fold-averaged mean pinball loss per candidate.
  std::vector<double> scores;
};

//! Default candidate radii: left quantiles at 0.05, 0.1, 0.2, 0.4, 0.6, 0.8
//! of pairwise distances (over a seeded subsample), positive and deduplicated.
std::vector<double> default_bandwidth_candidates(const Matrix& points,
                                                 std::size_t sample,
                                                 std::uint64_t seed);

//! Fold label per row: a seeded permutation cut into `folds` contiguous
//! blocks.
std::vector<std::size_t> cv_fold_assignment(std::size_t n,
                                            std::size_t folds,
                                            std::uint64_t seed);

BandwidthSelection cross_validate_bandwidth(const Matrix& points,
                                            const Vector& values,
                                            const BandwidthSearch& search);

//! K-fold pinball-loss cross-validation over the candidate radii; ties go
//! to the larger radius.
double select_bandwidth(const Matrix& points,
                        const Vector& values,
                        const BandwidthSearch& search);

} // namespace regcal

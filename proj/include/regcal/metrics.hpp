#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "regcal/dataset.hpp"

namespace regcal {

//! Strictly increasing quantile levels inside (0, 1).
class TauGrid
{
public:
  explicit TauGrid(std::vector<double> levels);

  //! 0.01, 0.02, ..., 0.99.
  static TauGrid uniform99();
  //! `count` equally spaced levels k/(count+1), k = 1..count.
  static TauGrid equally_spaced(std::size_t count);

  const std::vector<double>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t j) const { return levels_[j]; }

private:
  std::vector<double> levels_;
};

//! Throws std::invalid_argument unless 0 < tau < 1.
void check_tau(double tau);

//! Pinball loss of prediction `u1` against outcome `u2`.
double pinball_loss(double u1, double u2, double tau);

//! Fraction of rows with target <= prediction.
double observed_level(std::span<const double> predictions,
                      std::span<const double> targets);

//! Quantile predictions: one row per observation, one column per grid level.
//! Layout matches the batch predictors.
using QuantileMatrix = Matrix;

std::vector<double> observed_levels(const QuantileMatrix& predictions,
                                    const Vector& targets);

double mace(const QuantileMatrix& predictions,
            const Vector& targets,
            const TauGrid& grid);

struct AgceConfig
{
  std::size_t groups = 20;
  double group_fraction = 0.1;
  std::size_t min_group_size = 50;
  bool with_replacement = true;
  //! Adds the whole evaluation set as one extra group.
  bool include_full_set = false;
  std::uint64_t seed = 0;

  //! min(n, max(min_group_size, round(group_fraction * n))).
  std::size_t group_size(std::size_t n) const;
};

struct AgceResult
{
  double value = 0.0;
  std::vector<double> group_maces;
  std::vector<std::vector<std::size_t>> groups;
};

AgceResult agce_detail(const QuantileMatrix& predictions,
                       const Vector& targets,
                       const TauGrid& grid,
                       const AgceConfig& cfg);

double agce(const QuantileMatrix& predictions,
            const Vector& targets,
            const TauGrid& grid,
            const AgceConfig& cfg);

double check_score(const QuantileMatrix& predictions,
                   const Vector& targets,
                   const TauGrid& grid);

//! Observed level per (bin, level). `coverage(b, j)`.
struct GroupCoverage
{
  std::vector<std::size_t> bin_sizes;
  Matrix coverage;
};

GroupCoverage group_coverage(const QuantileMatrix& predictions,
                             const Vector& targets,
                             std::span<const std::size_t> bins,
                             std::size_t bin_count,
                             const TauGrid& grid);

//! Equal-count bins by rank of `values`; ties broken by row index.
std::vector<std::size_t> quantile_bins(const Vector& values, std::size_t bins);

struct MetricReport
{
  double mace = 0.0;
  double agce = 0.0;
  double check_score = 0.0;
  std::vector<double> levels;
  std::vector<double> per_tau_observed;
  std::vector<double> per_tau_check;
  AgceConfig agce_config;
  std::vector<std::vector<std::size_t>> agce_groups;
  std::optional<GroupCoverage> group_coverage;
};

MetricReport evaluate_predictions(const QuantileMatrix& predictions,
                                  const Vector& targets,
                                  const TauGrid& grid,
                                  const AgceConfig& cfg);

} // namespace regcal

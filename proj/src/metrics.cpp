#include "regcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace regcal {

namespace {

void check_shapes(const QuantileMatrix& predictions,
                  const Vector& targets,
                  const TauGrid& grid)
{
  if (predictions.rows() != targets.size()) {
    throw std::invalid_argument("prediction rows (" +
                                std::to_string(predictions.rows()) +
                                ") do not match targets (" +
                                std::to_string(targets.size()) + ")");
  }
  if (predictions.cols() != static_cast<Eigen::Index>(grid.size())) {
    throw std::invalid_argument("prediction columns do not match tau grid");
  }
  if (targets.size() == 0) {
    throw std::invalid_argument("empty evaluation set");
  }
}

std::size_t covered_count(const QuantileMatrix& predictions,
                          const Vector& targets,
                          Eigen::Index col)
{
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    if (targets(i) <= predictions(i, col)) {
      ++count;
    }
  }
  return count;
}

} // namespace

TauGrid::TauGrid(std::vector<double> levels)
  : levels_(std::move(levels))
{
  if (levels_.empty()) {
    throw std::invalid_argument("tau grid is empty");
  }
  for (std::size_t j = 0; j < levels_.size(); ++j) {
    check_tau(levels_[j]);
    if (j > 0 && !(levels_[j] > levels_[j - 1])) {
      throw std::invalid_argument("tau grid must be strictly increasing");
    }
  }
}

TauGrid TauGrid::uniform99()
{
  std::vector<double> levels;
  for (int j = 1; j <= 99; ++j) {
    levels.push_back(j / 100.0);
  }
  return TauGrid(std::move(levels));
}

TauGrid TauGrid::equally_spaced(std::size_t count)
{
  std::vector<double> levels;
  for (std::size_t k = 1; k <= count; ++k) {
    levels.push_back(static_cast<double>(k) / static_cast<double>(count + 1));
  }
  return TauGrid(std::move(levels));
}

void check_tau(double tau)
{
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("quantile level must lie in (0, 1), got " +
                                std::to_string(tau));
  }
}

double pinball_loss(double u1, double u2, double tau)
{
  check_tau(tau);
  if (u1 > u2) {
    return (1.0 - tau) * (u1 - u2);
  }
  if (u1 < u2) {
    return tau * (u2 - u1);
  }
  return 0.0;
}

double observed_level(std::span<const double> predictions,
                      std::span<const double> targets)
{
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("predictions and targets differ in length");
  }
  if (targets.empty()) {
    throw std::invalid_argument("empty evaluation set");
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] <= predictions[i]) {
      ++count;
    }
  }
  return static_cast<double>(count) / static_cast<double>(targets.size());
}

std::vector<double> observed_levels(const QuantileMatrix& predictions,
                                    const Vector& targets)
{
  if (predictions.rows() != targets.size() || targets.size() == 0) {
    throw std::invalid_argument("shape mismatch or empty evaluation set");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(predictions.cols()));
  const auto n = static_cast<double>(targets.size());
  for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
    out.push_back(static_cast<double>(covered_count(predictions, targets, j)) / n);
  }
  return out;
}

double mace(const QuantileMatrix& predictions,
            const Vector& targets,
            const TauGrid& grid)
{
  check_shapes(predictions, targets, grid);
  auto observed = observed_levels(predictions, targets);
  double total = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    total += std::abs(grid[j] - observed[j]);
  }
  return total / static_cast<double>(grid.size());
}

std::size_t AgceConfig::group_size(std::size_t n) const
{
  auto size = static_cast<std::size_t>(
    std::llround(group_fraction * static_cast<double>(n)));
  size = std::max(size, min_group_size);
  return std::clamp<std::size_t>(size, 1, n);
}

AgceResult agce_detail(const QuantileMatrix& predictions,
                       const Vector& targets,
                       const TauGrid& grid,
                       const AgceConfig& cfg)
{
  check_shapes(predictions, targets, grid);
  if (cfg.groups < 1) {
    throw std::invalid_argument("AGCE needs at least one group");
  }
  if (!(cfg.group_fraction > 0.0 && cfg.group_fraction <= 1.0)) {
    throw std::invalid_argument("AGCE group fraction must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(targets.size());
  const auto size = cfg.group_size(n);
  std::mt19937_64 rng(cfg.seed);

  AgceResult result;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{ 0 });
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    std::vector<std::size_t> rows;
    if (cfg.with_replacement) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      rows.reserve(size);
      for (std::size_t k = 0; k < size; ++k) {
        rows.push_back(pick(rng));
      }
    } else {
      rows = all;
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(size);
    }
    result.groups.push_back(std::move(rows));
  }
  if (cfg.include_full_set) {
    result.groups.push_back(all);
  }

  result.value = 0.0;
  for (const auto& rows : result.groups) {
    QuantileMatrix sub(static_cast<Eigen::Index>(rows.size()), predictions.cols());
    Vector sub_targets(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      sub.row(static_cast<Eigen::Index>(k)) =
        predictions.row(static_cast<Eigen::Index>(rows[k]));
      sub_targets(static_cast<Eigen::Index>(k)) =
        targets(static_cast<Eigen::Index>(rows[k]));
    }
    const double m = mace(sub, sub_targets, grid);
    result.group_maces.push_back(m);
    result.value = std::max(result.value, m);
  }
  return result;
}

double agce(const QuantileMatrix& predictions,
            const Vector& targets,
            const TauGrid& grid,
            const AgceConfig& cfg)
{
  return agce_detail(predictions, targets, grid, cfg).value;
}

double check_score(const QuantileMatrix& predictions,
                   const Vector& targets,
                   const TauGrid& grid)
{
  check_shapes(predictions, targets, grid);
  double total = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double level = 0.0;
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      level += pinball_loss(predictions(i, static_cast<Eigen::Index>(j)),
                            targets(i),
                            grid[j]);
    }
    total += level / static_cast<double>(targets.size());
  }
  return total / static_cast<double>(grid.size());
}

GroupCoverage group_coverage(const QuantileMatrix& predictions,
                             const Vector& targets,
                             std::span<const std::size_t> bins,
                             std::size_t bin_count,
                             const TauGrid& grid)
{
  check_shapes(predictions, targets, grid);
  if (bins.size() != static_cast<std::size_t>(targets.size())) {
    throw std::invalid_argument("every row needs a bin assignment");
  }
  GroupCoverage out;
  out.bin_sizes.assign(bin_count, 0);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(
    static_cast<Eigen::Index>(bin_count), predictions.cols());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto b = bins[i];
    if (b >= bin_count) {
      throw std::invalid_argument("bin index out of range");
    }
    ++out.bin_sizes[b];
    for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
      if (targets(static_cast<Eigen::Index>(i)) <=
          predictions(static_cast<Eigen::Index>(i), j)) {
        ++counts(static_cast<Eigen::Index>(b), j);
      }
    }
  }
  out.coverage.resize(static_cast<Eigen::Index>(bin_count), predictions.cols());
  for (std::size_t b = 0; b < bin_count; ++b) {
    if (out.bin_sizes[b] == 0) {
      throw std::invalid_argument("bin " + std::to_string(b) + " is empty");
    }
    for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
      out.coverage(static_cast<Eigen::Index>(b), j) =
        static_cast<double>(counts(static_cast<Eigen::Index>(b), j)) /
        static_cast<double>(out.bin_sizes[b]);
    }
  }
  return out;
}

std::vector<std::size_t> quantile_bins(const Vector& values, std::size_t bins)
{
  const auto n = static_cast<std::size_t>(values.size());
  if (bins < 1 || bins > n) {
    throw std::invalid_argument("bin count must lie in [1, n]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values(static_cast<Eigen::Index>(a)) < values(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    out[order[rank]] = rank * bins / n;
  }
  return out;
}

MetricReport evaluate_predictions(const QuantileMatrix& predictions,
                                  const Vector& targets,
                                  const TauGrid& grid,
                                  const AgceConfig& cfg)
{
  MetricReport report;
  report.levels = grid.levels();
  report.mace = mace(predictions, targets, grid);
  report.check_score = check_score(predictions, targets, grid);
  report.per_tau_observed = observed_levels(predictions, targets);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double level = 0.0;
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      level += pinball_loss(predictions(i, static_cast<Eigen::Index>(j)),
                            targets(i),
                            grid[j]);
    }
    report.per_tau_check.push_back(level / static_cast<double>(targets.size()));
  }
  auto detail = agce_detail(predictions, targets, grid, cfg);
  report.agce = detail.value;
  report.agce_groups = std::move(detail.groups);
  report.agce_config = cfg;
  return report;
}

} // namespace regcal

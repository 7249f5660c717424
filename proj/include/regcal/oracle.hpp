#pragma once

#include <span>
#include <utility>
#include <vector>

// Brute-force references used by the test and acceptance suites. Nothing in
// the library depends on these; they share no code with the estimator.

namespace regcal::oracle {

struct OracleResult
{
  double value = 0.0;
  //! (candidate, mean pinball objective) for every distinct stored value.
  std::vector<std::pair<double, double>> objective_curve;
};

//! Sorts and returns the element of 1-based rank ceil(tau * m). Products
//! within 1e-12 relative of an integer are snapped to it, so levels such as
//! 0.29 (not exactly representable) behave like the rational they name.
double sorted_left_quantile(std::span<const double> values, double tau);

//! Evaluates the mean pinball objective at every distinct stored value and
//! returns the smallest minimizer. Objectives within 1e-12 relative of the
//! minimum count as tied.
OracleResult pinball_argmin_scan(std::span<const double> values, double tau);

} // namespace regcal::oracle

#include "regcal/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regcal::oracle {

namespace {

void check_inputs(std::span<const double> values, double tau)
{
  if (values.empty()) {
    throw std::invalid_argument("oracle needs a nonempty sample");
  }
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("oracle needs tau in (0, 1)");
  }
}

} // namespace

double sorted_left_quantile(std::span<const double> values, double tau)
{
  check_inputs(values, tau);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  const double product = tau * m;
  const double nearest = std::round(product);
  double rank = std::ceil(product);
  if (std::abs(product - nearest) <= 1e-12 * m) {
    rank = nearest;
  }
  rank = std::clamp(rank, 1.0, m);
  return sorted[static_cast<std::size_t>(rank) - 1];
}

OracleResult pinball_argmin_scan(std::span<const double> values, double tau)
{
  check_inputs(values, tau);
  std::vector<double> candidates(values.begin(), values.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  OracleResult out;
  long double best = 0.0L;
  for (double c : candidates) {
    long double total = 0.0L;
    for (double u : values) {
      if (c > u) {
        total += (1.0L - tau) * (static_cast<long double>(c) - u);
      } else if (c < u) {
        total += static_cast<long double>(tau) * (static_cast<long double>(u) - c);
      }
    }
    total /= static_cast<long double>(values.size());
    out.objective_curve.emplace_back(c, static_cast<double>(total));
    if (out.objective_curve.size() == 1 || total < best) {
      best = total;
    }
  }
  const long double tol = 1e-12L * std::max(1.0L, std::fabs(best));
  for (const auto& [c, obj] : out.objective_curve) {
    if (static_cast<long double>(obj) <= best + tol) {
      out.value = c;
      break;
    }
  }
  return out;
}

} // namespace regcal::oracle

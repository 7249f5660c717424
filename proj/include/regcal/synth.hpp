#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regcal/dataset.hpp"

namespace regcal {

enum class GeneratorKind
{
  //! X ~ U[0,15], Y | X ~ N(4 sin(2 pi X / 15), max(0.2 X |sin X|, 0.1)^2).
  sine_hetero,
  //! X ~ U[0,1], Y | X ~ U[0, X].
  uniform_triangle,
  //! X ~ U[0,1], Y = u X with u ~ U[-1,1].
  scaled_uniform
};

std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& name);

struct GeneratorSpec
{
  GeneratorKind kind = GeneratorKind::sine_hetero;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  //! Independent U[0,1] columns appended after x (named z1, z2, ...).
  std::size_t nuisance_dims = 0;
};

Dataset generate(const GeneratorSpec& spec);

double sine_mean(double x);
double sine_stddev(double x);

//! Conditional tau-quantile of Y given X = x.
double analytic_quantile(GeneratorKind kind, double x, double tau);

//! Marginally calibrated, sharpness-maximal 0.9-quantile predictor for the
//! uniform_triangle law: x on [0, 0.9], 0 above.
double sharpness_counterexample_predictor(double x, double tau = 0.9);

struct ShiftSpec
{
  double pool_fraction = 0.1;
  std::size_t resample_count = 1000;
  double variance_scale = 0.3;
  std::uint64_t seed = 0;
};

struct ShiftResult
{
  Dataset train;
  Dataset shifted_test;
  //! Row indices into the input.
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> pool_rows;
  //! Input row index of every shifted_test row.
  std::vector<std::size_t> shifted_rows;
  Vector seed_point;
};

//! Holds out a pool, fits a Gaussian to the remaining features, draws a
//! centre from it and importance-resamples the pool (with replacement) with
//! weights proportional to N(centre, variance_scale * covariance).
ShiftResult covariate_shift_testset(const Dataset& data, const ShiftSpec& shift);

} // namespace regcal

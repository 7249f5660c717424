#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace regcal {

// Row-major so that one observation is contiguous in memory.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

//! Raised for malformed or inconsistent input data (CSV contents, schema).
class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Feature matrix plus target vector with column metadata.
struct Dataset
{
  Matrix features;
  Vector target;
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dims() const { return features.cols(); }

  //! Throws DataError if any invariant (n >= 1, d >= 1, finite values,
  //! unique names) is broken.
  void validate() const;

  //! Rows in the given order; indices may repeat.
  Dataset select_rows(std::span<const std::size_t> rows) const;
};

//! Builds a dataset with default names x1..xd, checking invariants.
Dataset make_dataset(Matrix features, Vector target);

struct SplitSpec
{
  double fraction_train = 0.5;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

//! Index partition of 0..n-1: the first part has round(fraction*n) rows,
//! clamped to [1, n-1].
struct SplitIndices
{
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

//! Per-column affine map to zero mean and unit (population) stddev.
//! Constant columns have stddev 0 and map to zero.
struct Standardizer
{
  Vector means;
  Vector stddevs;

  Matrix apply(const Matrix& xs) const;
  Matrix invert(const Matrix& zs) const;
  Dataset apply(const Dataset& data) const;
};

Standardizer fit_standardizer(const Matrix& features);
inline Standardizer fit_standardizer(const Dataset& data)
{
  return fit_standardizer(data.features);
}

//! Header plus raw cells of a comma-separated file. Cells are converted to
//! numbers on demand so that only the selected columns need to parse.
class CsvTable
{
public:
  static CsvTable read(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return cells_.size(); }
  bool has_column(const std::string& name) const;
  std::size_t column_index(const std::string& name) const;

  Vector column(const std::string& name) const;
  Matrix columns(const std::vector<std::string>& names) const;

private:
  std::filesystem::path path_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

//! Loads a CSV: the target column plus every other column not listed in
//! `exclude` becomes a feature, in header order.
Dataset load_csv(const std::filesystem::path& path,
                 const std::string& target_column,
                 const std::vector<std::string>& exclude = {});

//! Writes features then target with full round-trip precision.
void save_csv(const std::filesystem::path& path, const Dataset& data);

//! Formats a double so that parsing it back yields the same value.
std::string format_double(double value);

} // namespace regcal

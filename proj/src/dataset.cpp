#include "regcal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace regcal {

namespace {

std::string trim(std::string_view s)
{
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) {
    return {};
  }
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_line(const std::string& line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& cell, double& out)
{
  if (cell.empty()) {
    return false;
  }
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') {
    ++first;
  }
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

} // namespace

void Dataset::validate() const
{
  if (features.rows() < 1) {
    throw DataError("empty dataset");
  }
  if (features.cols() < 1) {
    throw DataError("dataset has no feature columns");
  }
  if (target.size() != features.rows()) {
    throw DataError("target length " + std::to_string(target.size()) +
                    " does not match " + std::to_string(features.rows()) +
                    " feature rows");
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw DataError("expected " + std::to_string(features.cols()) +
                    " feature names, got " +
                    std::to_string(feature_names.size()));
  }
  std::set<std::string> seen(feature_names.begin(), feature_names.end());
  if (seen.size() != feature_names.size()) {
    throw DataError("feature names are not unique");
  }
  if (!features.allFinite() || !target.allFinite()) {
    throw DataError("dataset contains non-finite values");
  }
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const
{
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(rows[i]);
    if (src >= features.rows()) {
      throw std::out_of_range("row index out of range");
    }
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(src);
    out.target(static_cast<Eigen::Index>(i)) = target(src);
  }
  out.feature_names = feature_names;
  out.target_name = target_name;
  return out;
}

Dataset make_dataset(Matrix features, Vector target)
{
  Dataset data;
  data.feature_names.reserve(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    data.feature_names.push_back("x" + std::to_string(j + 1));
  }
  data.features = std::move(features);
  data.target = std::move(target);
  data.validate();
  return data;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec)
{
  if (!(spec.fraction_train > 0.0 && spec.fraction_train < 1.0)) {
    throw std::invalid_argument("fraction_train must lie in (0, 1)");
  }
  if (n < 2) {
    throw std::invalid_argument("cannot split fewer than 2 rows");
  }
  auto first = static_cast<std::size_t>(
    std::llround(spec.fraction_train * static_cast<double>(n)));
  first = std::clamp<std::size_t>(first, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  if (spec.shuffle) {
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  SplitIndices out;
  out.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  out.second.assign(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec)
{
  auto parts = split_indices(static_cast<std::size_t>(data.rows()), spec);
  return { data.select_rows(parts.first), data.select_rows(parts.second) };
}

Matrix Standardizer::apply(const Matrix& xs) const
{
  if (xs.cols() != means.size()) {
    throw std::invalid_argument("standardizer width mismatch");
  }
  Matrix out(xs.rows(), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    if (stddevs(j) > 0.0) {
      out.col(j) = (xs.col(j).array() - means(j)) / stddevs(j);
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

Matrix Standardizer::invert(const Matrix& zs) const
{
  if (zs.cols() != means.size()) {
    throw std::invalid_argument("standardizer width mismatch");
  }
  Matrix out(zs.rows(), zs.cols());
  for (Eigen::Index j = 0; j < zs.cols(); ++j) {
    out.col(j) = zs.col(j).array() * stddevs(j) + means(j);
  }
  return out;
}

Dataset Standardizer::apply(const Dataset& data) const
{
  Dataset out = data;
  out.features = apply(data.features);
  return out;
}

Standardizer fit_standardizer(const Matrix& features)
{
  Standardizer s;
  const auto n = static_cast<double>(features.rows());
  s.means = features.colwise().mean().transpose();
  s.stddevs.resize(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const auto& col = features.col(j);
    const bool constant = (col.array() == col(0)).all();
    if (constant) {
      s.means(j) = col(0);
      s.stddevs(j) = 0.0;
      continue;
    }
    double ss = (col.array() - s.means(j)).square().sum();
    s.stddevs(j) = std::sqrt(ss / n);
  }
  return s;
}

CsvTable CsvTable::read(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  CsvTable table;
  table.path_ = path;
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("missing header row: " + path.string());
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  table.header_ = split_line(line);
  std::set<std::string> names(table.header_.begin(), table.header_.end());
  if (names.size() != table.header_.size()) {
    throw DataError("duplicate column names in header: " + path.string());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    auto cells = split_line(line);
    if (cells.size() != table.header_.size()) {
      throw DataError("row " + std::to_string(table.cells_.size() + 1) +
                      " (line " + std::to_string(line_no) + ") has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(table.header_.size()));
    }
    table.cells_.push_back(std::move(cells));
  }
  if (table.cells_.empty()) {
    throw DataError("empty dataset: " + path.string());
  }
  return table;
}

bool CsvTable::has_column(const std::string& name) const
{
  return std::find(header_.begin(), header_.end(), name) != header_.end();
}

std::size_t CsvTable::column_index(const std::string& name) const
{
  auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) {
    throw DataError("missing column '" + name + "' in " + path_.string());
  }
  return static_cast<std::size_t>(it - header_.begin());
}

Vector CsvTable::column(const std::string& name) const
{
  return columns({ name }).col(0);
}

Matrix CsvTable::columns(const std::vector<std::string>& names) const
{
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& name : names) {
    idx.push_back(column_index(name));
  }
  Matrix out(static_cast<Eigen::Index>(cells_.size()),
             static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& cell = cells_[i][idx[j]];
      double v = 0.0;
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(i + 1) + ", column '" +
                        names[j] + "': invalid value '" + cell + "'");
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& target_column,
                 const std::vector<std::string>& exclude)
{
  auto table = CsvTable::read(path);
  if (!table.has_column(target_column)) {
    throw DataError("missing target column '" + target_column + "' in " +
                    path.string());
  }
  std::vector<std::string> feature_names;
  for (const auto& name : table.header()) {
    if (name == target_column ||
        std::find(exclude.begin(), exclude.end(), name) != exclude.end()) {
      continue;
    }
    feature_names.push_back(name);
  }
  if (feature_names.empty()) {
    throw DataError("no feature columns besides target in " + path.string());
  }
  Dataset data;
  data.target = table.column(target_column);
  data.features = table.columns(feature_names);
  data.feature_names = std::move(feature_names);
  data.target_name = target_column;
  data.validate();
  return data;
}

std::string format_double(double value)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    throw std::runtime_error("failed to format number");
  }
  return std::string(buf, ptr);
}

void save_csv(const std::filesystem::path& path, const Dataset& data)
{
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write file: " + path.string());
  }
  for (const auto& name : data.feature_names) {
    out << name << ',';
  }
  out << data.target_name << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dims(); ++j) {
      out << format_double(data.features(i, j)) << ',';
    }
    out << format_double(data.target(i)) << '\n';
  }
  if (!out) {
    throw DataError("write failed: " + path.string());
  }
}

} // namespace regcal

#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "regcal/calibrator.hpp"
#include "regcal/dataset.hpp"
#include "regcal/metrics.hpp"
#include "regcal/model_io.hpp"
#include "regcal/synth.hpp"

namespace regcal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Collects output files in memory and writes them together; anything
// already written is removed if the command does not commit.
class OutputSet
{
public:
  ~OutputSet()
  {
    if (!committed_) {
      std::error_code ec;
      for (const auto& p : written_) {
        fs::remove(p, ec);
      }
    }
  }

  void write(const fs::path& path, const std::string& content)
  {
    if (path.has_parent_path()) {
      fs::create_directories(path.parent_path());
    }
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out) {
      throw DataError("cannot write " + path.string());
    }
  }

  void commit() { committed_ = true; }

private:
  std::vector<fs::path> written_;
  bool committed_ = false;
};

std::string num(double v)
{
  return format_double(v);
}

// Flags shared by every command that calibrates a model.
struct ModelFlags
{
  std::string regressor = "knn";
  std::size_t knn_k = 20;
  std::string external_column = "prediction";
  std::string bandwidth = "auto";
  std::size_t min_neighbors = 1;
  std::size_t folds = 5;
  std::vector<double> candidates;
  std::size_t max_eval_per_fold = 500;
  std::size_t distance_sample = 1000;
  double lipschitz = -1.0;
  bool rate_rescale = false;
  double fraction_train = 0.5;
  bool no_shuffle = false;
  std::string projection = "none";
  long d0 = 1;
  bool marginal = false;

  void add_to(CLI::App* app)
  {
    app->add_option("--regressor", regressor, "Base regressor: ols, knn or external")
      ->check(CLI::IsMember({ "ols", "knn", "external" }))
      ->capture_default_str();
    app->add_option("--knn-k", knn_k, "Neighbors averaged by the knn regressor")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    app->add_option("--external-column", external_column,
                    "Column with precomputed predictions (external regressor)")
      ->capture_default_str();
    app->add_option("--bandwidth", bandwidth, "Kernel radius, or 'auto' for cross-validation")
      ->capture_default_str();
    app->add_option("--min-neighbors", min_neighbors, "Smallest local sample size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    app->add_option("--folds", folds, "Cross-validation folds")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
    app->add_option("--candidates", candidates, "Candidate radii (comma separated)")
      ->delimiter(',');
    app->add_option("--max-eval-per-fold", max_eval_per_fold,
                    "Held-out points scored per fold (0 = all)")
      ->capture_default_str();
    app->add_option("--distance-sample", distance_sample,
                    "Points used for the default candidate grid")
      ->capture_default_str();
    app->add_option("--lipschitz", lipschitz,
                    "Lipschitz constant hint for the rate-based candidate (negative = none)");
    app->add_flag("--rate-rescale", rate_rescale,
                  "Rescale the selected radius from fold size to full size");
    app->add_option("--fraction-train", fraction_train, "Share of rows used to fit the regressor")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
    app->add_flag("--no-shuffle", no_shuffle, "Split rows in file order");
    app->add_option("--projection", projection, "none, gaussian or covariate")
      ->check(CLI::IsMember({ "none", "identity", "gaussian", "random_gaussian", "covariate",
                              "covariate_select" }))
      ->capture_default_str();
    app->add_option("--d0", d0, "Projected dimension")->check(CLI::PositiveNumber);
    app->add_flag("--marginal", marginal, "Ignore features when estimating residual quantiles");
  }

  CalibrationConfig config(std::uint64_t seed) const
  {
    CalibrationConfig cfg;
    cfg.split.fraction_train = fraction_train;
    cfg.split.shuffle = !no_shuffle;
    cfg.regressor.kind = regressor_kind_from_string(regressor);
    cfg.regressor.knn_k = knn_k;
    cfg.regressor.external_column = external_column;
    cfg.min_neighbors = min_neighbors;
    if (bandwidth != "auto") {
      double h = 0.0;
      try {
        std::size_t used = 0;
        h = std::stod(bandwidth, &used);
        if (used != bandwidth.size()) {
          throw std::invalid_argument("trailing characters");
        }
      } catch (const std::exception&) {
        throw UsageError("--bandwidth must be a number or 'auto', got '" + bandwidth + "'");
      }
      if (!(h >= 0.0) || !std::isfinite(h)) {
        throw UsageError("--bandwidth must be a finite nonnegative number");
      }
      cfg.bandwidth = h;
    }
    cfg.search.folds = folds;
    cfg.search.candidates = candidates;
    cfg.search.max_eval_per_fold = max_eval_per_fold;
    cfg.search.distance_sample = distance_sample;
    if (lipschitz >= 0.0) {
      cfg.search.lipschitz_hint = lipschitz;
    }
    cfg.search.rate_rescale = rate_rescale;
    cfg.projection.kind = projection_kind_from_string(projection);
    cfg.projection.d0 = d0;
    cfg.marginal = marginal;
    cfg.with_seed(seed);
    return cfg;
  }
};

// Flags shared by every command that computes metrics.
struct MetricFlags
{
  std::vector<double> taus;
  std::size_t agce_groups = 20;
  double agce_fraction = 0.1;
  std::size_t agce_min_size = 50;
  bool agce_no_replacement = false;

  void add_to(CLI::App* app)
  {
    app->add_option("--taus", taus, "Quantile levels (default 0.01..0.99)")->delimiter(',');
    app->add_option("--agce-groups", agce_groups, "AGCE subsample count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    app->add_option("--agce-fraction", agce_fraction, "AGCE subsample fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
    app->add_option("--agce-min-size", agce_min_size, "Smallest AGCE subsample")
      ->capture_default_str();
    app->add_flag("--agce-no-replacement", agce_no_replacement,
                  "Draw AGCE subsamples without replacement");
  }

  TauGrid grid() const { return taus.empty() ? TauGrid::uniform99() : TauGrid(taus); }

  AgceConfig agce(std::uint64_t seed) const
  {
    AgceConfig cfg;
    cfg.groups = agce_groups;
    cfg.group_fraction = agce_fraction;
    cfg.min_group_size = agce_min_size;
    cfg.with_replacement = !agce_no_replacement;
    cfg.seed = seed;
    return cfg;
  }
};

std::string bandwidth_text(const CalibratedModel& model)
{
  const double h = model.estimator().kernel().bandwidth;
  std::string how = model.config.marginal ? "marginal"
                    : model.bandwidth_selection ? "cross-validated"
                                                : "fixed";
  return (std::isinf(h) ? std::string("inf") : num(h)) + " (" + how + ")";
}

void print_calibration_summary(std::ostream& out, const CalibratedModel& model, std::uint64_t seed)
{
  out << "split: fit=" << model.fit_rows.size()
      << " calibration=" << model.calibration_rows.size() << '\n';
  out << "bandwidth: " << bandwidth_text(model) << '\n';
  out << "seed: " << seed << '\n';
}

std::optional<Vector> external_from_table(const CsvTable& table, const CalibratedModel& model)
{
  if (model.regressor().kind() != RegressorKind::external) {
    return std::nullopt;
  }
  const auto& ext = std::get<ExternalModel>(model.regressor().state());
  return table.column(ext.column);
}

std::optional<std::span<const double>> as_span(const std::optional<Vector>& v)
{
  if (!v) {
    return std::nullopt;
  }
  return std::span<const double>(v->data(), static_cast<std::size_t>(v->size()));
}

// Feature matrix for `model` from a table; every non-reserved column must be
// a model feature and vice versa.
Matrix model_features(const CsvTable& table,
                      const CalibratedModel& model,
                      const std::set<std::string>& reserved)
{
  std::size_t other = 0;
  for (const auto& name : table.header()) {
    if (!reserved.contains(name)) {
      ++other;
    }
  }
  const auto d = static_cast<std::size_t>(model.dims());
  std::size_t present = 0;
  for (const auto& name : model.feature_names()) {
    if (table.has_column(name) && !reserved.contains(name)) {
      ++present;
    }
  }
  for (const auto& name : model.feature_names()) {
    if (reserved.contains(name)) {
      ++present;
      ++other;
    }
  }
  if (other != d || present != d) {
    throw DataError("schema mismatch: model expects " + std::to_string(d) +
                    " feature columns, input has " + std::to_string(other));
  }
  return table.columns(model.feature_names());
}

std::string curves_csv(const MetricReport& report)
{
  std::ostringstream csv;
  csv << "tau,observed,check_score";
  if (report.group_coverage) {
    for (std::size_t b = 0; b < report.group_coverage->bin_sizes.size(); ++b) {
      csv << ",coverage_bin" << b;
    }
  }
  csv << '\n';
  for (std::size_t j = 0; j < report.levels.size(); ++j) {
    csv << num(report.levels[j]) << ',' << num(report.per_tau_observed[j]) << ','
        << num(report.per_tau_check[j]);
    if (report.group_coverage) {
      for (Eigen::Index b = 0; b < report.group_coverage->coverage.rows(); ++b) {
        csv << ',' << num(report.group_coverage->coverage(b, static_cast<Eigen::Index>(j)));
      }
    }
    csv << '\n';
  }
  return csv.str();
}

std::string with_suffix(const std::string& path, const std::string& suffix)
{
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

// ---------------------------------------------------------------- calibrate

struct CalibrateCmd
{
  std::string input;
  std::string target;
  std::string output;
  std::uint64_t seed = 0;
  ModelFlags model;

  void add_to(CLI::App* app)
  {
    app->add_option("--input", input, "Training CSV")->required();
    app->add_option("--target", target, "Target column")->required();
    app->add_option("--output", output, "Model JSON path")->required();
    app->add_option("--seed", seed, "Seed for split, cross-validation and projection")
      ->capture_default_str();
    model.add_to(app);
  }

  int run(std::ostream& out) const
  {
    auto cfg = model.config(seed);
    std::vector<std::string> exclude;
    if (cfg.regressor.kind == RegressorKind::external) {
      exclude.push_back(cfg.regressor.external_column);
    }
    auto data = load_csv(input, target, exclude);
    std::optional<Vector> external;
    if (cfg.regressor.kind == RegressorKind::external) {
      external = CsvTable::read(input).column(cfg.regressor.external_column);
    }
    auto calibrated = calibrate(data, cfg, as_span(external));

    OutputSet files;
    files.write(output, model_to_json(calibrated).dump(1) + "\n");
    files.commit();
    print_calibration_summary(out, calibrated, seed);
    out << "model: " << output << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------------ predict

struct PredictCmd
{
  std::string model_path;
  std::string input;
  std::string output;
  std::vector<double> taus;
  double alpha = 0.05;

  void add_to(CLI::App* app)
  {
    app->add_option("--model", model_path, "Model JSON")->required();
    app->add_option("--input", input, "CSV with the model's feature columns")->required();
    app->add_option("--output", output, "Prediction CSV")->required();
    app->add_option("--taus", taus, "Extra quantile levels (comma separated)")->delimiter(',');
    app->add_option("--alpha", alpha, "Interval miscoverage; columns lo, hi")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  }

  int run(std::ostream& out) const
  {
    auto model = load_model(model_path);
    auto table = CsvTable::read(input);
    Matrix xs = table.columns(model.feature_names());
    auto external = external_from_table(table, model);
    Vector mean = model.predict_mean(xs, as_span(external));
    Matrix intervals = model.predict_intervals(xs, alpha, as_span(external));
    Matrix extra;
    if (!taus.empty()) {
      extra = model.predict_quantiles(xs, TauGrid(taus), as_span(external));
    }

    std::ostringstream csv;
    csv << "row,mean,lo,hi";
    for (double t : taus) {
      csv << ",q_" << num(t);
    }
    csv << '\n';
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      csv << i << ',' << num(mean(i)) << ',' << num(intervals(i, 0)) << ','
          << num(intervals(i, 1));
      for (Eigen::Index j = 0; j < extra.cols(); ++j) {
        csv << ',' << num(extra(i, j));
      }
      csv << '\n';
    }
    OutputSet files;
    files.write(output, csv.str());
    files.commit();
    out << "predictions: " << xs.rows() << " rows -> " << output << '\n';
    return kExitOk;
  }
};

// ----------------------------------------------------------------- evaluate

struct EvaluateCmd
{
  std::string model_path;
  std::string input;
  std::string output;
  std::string curves;
  std::string target;
  std::string group_column;
  std::size_t group_bins = 2;
  std::uint64_t seed = 0;
  MetricFlags metrics;

  void add_to(CLI::App* app)
  {
    app->add_option("--model", model_path, "Model JSON")->required();
    app->add_option("--input", input, "Evaluation CSV with target column")->required();
    app->add_option("--output", output, "Report JSON")->required();
    app->add_option("--curves", curves, "Per-level CSV (default: <output>.curves.csv)");
    app->add_option("--target", target, "Target column (default: the model's)");
    app->add_option("--group-column", group_column, "Column whose quantile bins form groups");
    app->add_option("--group-bins", group_bins, "Number of equal-count bins")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    app->add_option("--seed", seed, "AGCE subsampling seed")->capture_default_str();
    metrics.add_to(app);
  }

  int run(std::ostream& out) const
  {
    auto model = load_model(model_path);
    auto table = CsvTable::read(input);
    const std::string target_name = target.empty() ? model.target_name() : target;
    std::set<std::string> reserved{ target_name };
    if (model.regressor().kind() == RegressorKind::external) {
      reserved.insert(std::get<ExternalModel>(model.regressor().state()).column);
    }
    if (!group_column.empty()) {
      table.column_index(group_column);
      const auto& names = model.feature_names();
      if (std::find(names.begin(), names.end(), group_column) == names.end()) {
        reserved.insert(group_column);
      }
    }
    Matrix xs = model_features(table, model, reserved);
    Vector y = table.column(target_name);
    auto external = external_from_table(table, model);

    const auto grid = metrics.grid();
    Matrix q = model.predict_quantiles(xs, grid, as_span(external));
    auto report = evaluate_predictions(q, y, grid, metrics.agce(seed));
    if (!group_column.empty()) {
      auto bins = quantile_bins(table.column(group_column), group_bins);
      report.group_coverage = regcal::group_coverage(q, y, bins, group_bins, grid);
    }

    json doc;
    doc["input"] = input;
    doc["model"] = model_path;
    doc["rows"] = xs.rows();
    doc["seed"] = seed;
    if (!group_column.empty()) {
      doc["group_column"] = group_column;
      doc["group_bins"] = group_bins;
    }
    doc["metrics"] = report_to_json(report);

    const std::string curves_path = curves.empty() ? with_suffix(output, ".curves.csv") : curves;
    OutputSet files;
    files.write(output, doc.dump(1) + "\n");
    files.write(curves_path, curves_csv(report));
    files.commit();
    out << "mace: " << num(report.mace) << '\n'
        << "agce: " << num(report.agce) << '\n'
        << "check_score: " << num(report.check_score) << '\n';
    return kExitOk;
  }
};

// --------------------------------------------------------------------- demo

struct DemoCmd
{
  std::string name;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  double alpha = 0.05;
  ModelFlags model;

  void add_to(CLI::App* app)
  {
    app->add_option("--name", name, "example1, sine or scaled_uniform")
      ->required()
      ->check(CLI::IsMember({ "example1", "sine", "scaled_uniform" }));
    app->add_option("--n", n, "Sample size (default depends on the demo)");
    app->add_option("--seed", seed, "Data and model seed")->capture_default_str();
    app->add_option("--output-dir", output_dir, "Directory for report files")
      ->capture_default_str();
    app->add_option("--alpha", alpha, "Interval miscoverage for the sine demo")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
    model.add_to(app);
  }

  int run(std::ostream& out) const
  {
    if (name == "example1") {
      return example1(out);
    }
    if (name == "sine") {
      return sine(out);
    }
    return scaled_uniform(out);
  }

  int example1(std::ostream& out) const
  {
    const std::size_t size = n ? n : 20000;
    const double tau = 0.9;
    auto train = generate({ GeneratorKind::uniform_triangle, size, seed, 0 });
    auto test = generate({ GeneratorKind::uniform_triangle, size, seed + 1, 0 });
    auto calibrated = calibrate(train, model.config(seed));

    Matrix nrc = calibrated.predict_quantiles(test.features, TauGrid({ tau }));
    Matrix sharp(test.rows(), 1);
    std::vector<std::size_t> bins(static_cast<std::size_t>(test.rows()));
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const double x = test.features(i, 0);
      sharp(i, 0) = sharpness_counterexample_predictor(x, tau);
      bins[static_cast<std::size_t>(i)] = x <= 0.9 ? 0 : 1;
    }
    const TauGrid grid({ tau });
    auto cov_sharp = group_coverage(sharp, test.target, bins, 2, grid);
    auto cov_nrc = group_coverage(nrc, test.target, bins, 2, grid);

    // Bin 0 is [0, 0.9], bin 1 is (0.9, 1].
    const double bounds[] = { 0.0, 0.9, 1.0 };
    std::ostringstream csv;
    csv << "bin,x_lo,x_hi,size,counterexample_coverage,nrc_coverage\n";
    json rows = json::array();
    for (Eigen::Index b = 0; b < 2; ++b) {
      const auto size = cov_sharp.bin_sizes[static_cast<std::size_t>(b)];
      csv << b << ',' << num(bounds[b]) << ',' << num(bounds[b + 1]) << ',' << size << ','
          << num(cov_sharp.coverage(b, 0)) << ',' << num(cov_nrc.coverage(b, 0)) << '\n';
      rows.push_back({ { "bin", b },
                       { "x_lo", bounds[b] },
                       { "x_hi", bounds[b + 1] },
                       { "size", size },
                       { "counterexample_coverage", cov_sharp.coverage(b, 0) },
                       { "nrc_coverage", cov_nrc.coverage(b, 0) } });
    }
    json doc;
    doc["demo"] = "example1";
    doc["n_train"] = size;
    doc["n_test"] = size;
    doc["tau"] = tau;
    doc["seed"] = seed;
    doc["bandwidth"] = calibrated.estimator().kernel().bandwidth;
    doc["bins"] = rows;
    doc["marginal_coverage"] = { { "counterexample",
                                   observed_level({ sharp.data(), static_cast<std::size_t>(sharp.size()) },
                                                  { test.target.data(), static_cast<std::size_t>(test.target.size()) }) },
                                 { "nrc",
                                   observed_level({ nrc.data(), static_cast<std::size_t>(nrc.size()) },
                                                  { test.target.data(), static_cast<std::size_t>(test.target.size()) }) } };

    OutputSet files;
    files.write(fs::path(output_dir) / "example1_report.json", doc.dump(1) + "\n");
    files.write(fs::path(output_dir) / "example1_coverage.csv", csv.str());
    files.commit();
    out << csv.str();
    return kExitOk;
  }

  int sine(std::ostream& out) const
  {
    const std::size_t size = n ? n : 5000;
    auto train = generate({ GeneratorKind::sine_hetero, size, seed, 0 });
    auto test = generate({ GeneratorKind::sine_hetero, size, seed + 1, 0 });
    auto calibrated = calibrate(train, model.config(seed));

    constexpr Eigen::Index points = 301;
    Matrix xs(points, 1);
    for (Eigen::Index i = 0; i < points; ++i) {
      xs(i, 0) = 15.0 * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    Matrix intervals = calibrated.predict_intervals(xs, alpha);
    std::ostringstream csv;
    csv << "x,q_lo,q_hi,oracle_lo,oracle_hi\n";
    for (Eigen::Index i = 0; i < points; ++i) {
      const double x = xs(i, 0);
      csv << num(x) << ',' << num(intervals(i, 0)) << ',' << num(intervals(i, 1)) << ','
          << num(analytic_quantile(GeneratorKind::sine_hetero, x, alpha / 2.0)) << ','
          << num(analytic_quantile(GeneratorKind::sine_hetero, x, 1.0 - alpha / 2.0)) << '\n';
    }
    const auto grid = TauGrid::uniform99();
    Matrix q = calibrated.predict_quantiles(test.features, grid);
    AgceConfig agce_cfg;
    agce_cfg.seed = seed;
    auto report = evaluate_predictions(q, test.target, grid, agce_cfg);

    json doc;
    doc["demo"] = "sine";
    doc["n_train"] = size;
    doc["n_test"] = size;
    doc["seed"] = seed;
    doc["alpha"] = alpha;
    doc["bandwidth"] = calibrated.estimator().kernel().bandwidth;
    doc["test_metrics"] = { { "mace", report.mace },
                            { "agce", report.agce },
                            { "check_score", report.check_score } };
    OutputSet files;
    files.write(fs::path(output_dir) / "sine_intervals.csv", csv.str());
    files.write(fs::path(output_dir) / "sine_report.json", doc.dump(1) + "\n");
    files.commit();
    out << "bandwidth: " << bandwidth_text(calibrated) << '\n'
        << "test mace: " << num(report.mace) << '\n'
        << "intervals: " << (fs::path(output_dir) / "sine_intervals.csv").string() << '\n';
    return kExitOk;
  }

  int scaled_uniform(std::ostream& out) const
  {
    const std::size_t size = n ? n : 5000;
    auto train = generate({ GeneratorKind::scaled_uniform, size, seed, 0 });
    auto calibrated = calibrate(train, model.config(seed));
    const TauGrid taus({ 0.1, 0.25, 0.5, 0.75, 0.9 });
    constexpr Eigen::Index points = 101;
    Matrix xs(points, 1);
    for (Eigen::Index i = 0; i < points; ++i) {
      xs(i, 0) = static_cast<double>(i) / static_cast<double>(points - 1);
    }
    Matrix q = calibrated.predict_quantiles(xs, taus);
    std::ostringstream csv;
    csv << "x,tau,q_nrc,q_oracle\n";
    double abs_err = 0.0;
    for (Eigen::Index i = 0; i < points; ++i) {
      for (std::size_t j = 0; j < taus.size(); ++j) {
        const double oracle = analytic_quantile(GeneratorKind::scaled_uniform, xs(i, 0), taus[j]);
        const double est = q(i, static_cast<Eigen::Index>(j));
        abs_err += std::abs(est - oracle);
        csv << num(xs(i, 0)) << ',' << num(taus[j]) << ',' << num(est) << ',' << num(oracle)
            << '\n';
      }
    }
    abs_err /= static_cast<double>(points) * static_cast<double>(taus.size());
    json doc;
    doc["demo"] = "scaled_uniform";
    doc["n_train"] = size;
    doc["seed"] = seed;
    doc["bandwidth"] = calibrated.estimator().kernel().bandwidth;
    doc["mean_abs_error_vs_oracle"] = abs_err;
    OutputSet files;
    files.write(fs::path(output_dir) / "scaled_uniform_quantiles.csv", csv.str());
    files.write(fs::path(output_dir) / "scaled_uniform_report.json", doc.dump(1) + "\n");
    files.commit();
    out << "mean |q_nrc - q_oracle|: " << num(abs_err) << '\n';
    return kExitOk;
  }
};

// ----------------------------------------------------------------- covshift

struct CovshiftCmd
{
  std::string input;
  std::string target;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  double pool_fraction = 0.1;
  std::size_t resample_count = 1000;
  double variance_scale = 0.3;
  ModelFlags model;
  MetricFlags metrics;

  void add_to(CLI::App* app)
  {
    app->add_option("--input", input, "Dataset CSV")->required();
    app->add_option("--target", target, "Target column")->required();
    app->add_option("--output-dir", output_dir, "Directory for report files")
      ->capture_default_str();
    app->add_option("--seed", seed, "Seed for the shift, split and metrics")
      ->capture_default_str();
    app->add_option("--pool-fraction", pool_fraction, "Share of rows held out as test pool")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
    app->add_option("--resample-count", resample_count, "Rows drawn for the shifted test set")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    app->add_option("--variance-scale", variance_scale, "Covariance scale of the resampling density")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
    model.add_to(app);
    metrics.add_to(app);
  }

  int run(std::ostream& out) const
  {
    auto cfg = model.config(seed);
    if (cfg.regressor.kind == RegressorKind::external) {
      throw UsageError("covshift trains its own regressor; use ols or knn");
    }
    auto data = load_csv(input, target);
    ShiftSpec shift{ pool_fraction, resample_count, variance_scale, seed };
    auto parts = covariate_shift_testset(data, shift);

    auto nrc = calibrate(parts.train, cfg);
    auto baseline_cfg = cfg;
    baseline_cfg.marginal = true;
    baseline_cfg.bandwidth.reset();
    auto baseline = calibrate(parts.train, baseline_cfg);

    const auto grid = metrics.grid();
    const auto& test = parts.shifted_test;
    auto nrc_report = evaluate_predictions(
      nrc.predict_quantiles(test.features, grid), test.target, grid, metrics.agce(seed));
    auto base_report = evaluate_predictions(
      baseline.predict_quantiles(test.features, grid), test.target, grid, metrics.agce(seed));

    json doc;
    doc["input"] = input;
    doc["seed"] = seed;
    doc["shift"] = { { "pool_fraction", pool_fraction },
                     { "resample_count", resample_count },
                     { "variance_scale", variance_scale },
                     { "train_rows", parts.train_rows.size() },
                     { "pool_rows", parts.pool_rows.size() },
                     { "shifted_rows", test.rows() },
                     { "seed_point", std::vector<double>(parts.seed_point.data(),
                                                         parts.seed_point.data() +
                                                           parts.seed_point.size()) } };
    doc["models"] = json::array(
      { { { "name", "nrc" },
          { "bandwidth", nrc.estimator().kernel().bandwidth },
          { "metrics", report_to_json(nrc_report) } },
        { { "name", "marginal" }, { "metrics", report_to_json(base_report) } } });

    std::ostringstream csv;
    csv << "tau,nrc_observed,marginal_observed,nrc_check_score,marginal_check_score\n";
    for (std::size_t j = 0; j < grid.size(); ++j) {
      csv << num(grid[j]) << ',' << num(nrc_report.per_tau_observed[j]) << ','
          << num(base_report.per_tau_observed[j]) << ',' << num(nrc_report.per_tau_check[j])
          << ',' << num(base_report.per_tau_check[j]) << '\n';
    }
    std::ostringstream shifted_csv;
    {
      for (const auto& name : test.feature_names) {
        shifted_csv << name << ',';
      }
      shifted_csv << test.target_name << '\n';
      for (Eigen::Index i = 0; i < test.rows(); ++i) {
        for (Eigen::Index j = 0; j < test.dims(); ++j) {
          shifted_csv << num(test.features(i, j)) << ',';
        }
        shifted_csv << num(test.target(i)) << '\n';
      }
    }

    OutputSet files;
    files.write(fs::path(output_dir) / "covshift_report.json", doc.dump(1) + "\n");
    files.write(fs::path(output_dir) / "covshift_curves.csv", csv.str());
    files.write(fs::path(output_dir) / "covshift_test.csv", shifted_csv.str());
    files.commit();
    out << "shifted rows: " << test.rows() << '\n'
        << "nrc mace: " << num(nrc_report.mace) << "  marginal mace: " << num(base_report.mace)
        << '\n'
        << "nrc check: " << num(nrc_report.check_score)
        << "  marginal check: " << num(base_report.check_score) << '\n'
        << "seed: " << seed << '\n';
    return kExitOk;
  }
};

// Fills options that were not given on the command line from a key=value file.
void apply_config(CLI::App* sub, const std::string& path)
{
  for (const auto& [key, value] : read_config_file(path)) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("unknown key '" + key + "' in config file " + path);
    }
    if (opt->count() > 0) {
      continue;
    }
    std::stringstream parts(value);
    std::string item;
    if (opt->get_expected_max() > 1) {
      while (std::getline(parts, item, ',')) {
        opt->add_result(item);
      }
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

} // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot open config file " + path);
  }
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) {
      key.erase(0, 2);
    }
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app("Nonparametric residual-quantile calibration for regression models", "regcal");
  app.require_subcommand(1);

  struct Entry
  {
    CLI::App* app;
    std::string config;
    // Checked after the config file is applied, so it may supply them.
    std::vector<CLI::Option*> required;
  };
  CalibrateCmd calibrate_cmd;
  PredictCmd predict_cmd;
  EvaluateCmd evaluate_cmd;
  DemoCmd demo_cmd;
  CovshiftCmd covshift_cmd;

  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* desc, auto& cmd) {
    auto* sub = app.add_subcommand(name, desc);
    cmd.add_to(sub);
    entries.push_back({ sub, {}, {} });
    for (auto* opt : sub->get_options()) {
      if (opt->get_required()) {
        entries.back().required.push_back(opt);
        opt->required(false);
      }
    }
    sub->add_option("--config", entries.back().config, "key=value file; flags take precedence");
    return sub;
  };
  entries.reserve(5);
  auto* calibrate_app = add("calibrate", "Fit a calibrated model and save it as JSON", calibrate_cmd);
  auto* predict_app = add("predict", "Write mean, interval and quantile predictions", predict_cmd);
  auto* evaluate_app = add("evaluate", "Compute MACE, AGCE, CheckScore and group coverage", evaluate_cmd);
  auto* demo_app = add("demo", "Run a synthetic demonstration", demo_cmd);
  auto* covshift_app = add("covshift", "Compare NRC and a marginal baseline under covariate shift", covshift_cmd);

  std::vector<std::string> argv_storage{ "regcal" };
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) {
    argv.push_back(a.c_str());
  }

  try {
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    for (const auto& entry : entries) {
      if (entry.app->parsed() && !entry.config.empty()) {
        try {
          apply_config(entry.app, entry.config);
        } catch (const CLI::ParseError& e) {
          err << "error: config file: " << e.what() << '\n';
          return kExitUsage;
        }
      }
      if (entry.app->parsed()) {
        for (const auto* opt : entry.required) {
          if (opt->count() == 0) {
            throw UsageError(opt->get_name() + " is required");
          }
        }
      }
    }
    if (calibrate_app->parsed()) {
      return calibrate_cmd.run(out);
    }
    if (predict_app->parsed()) {
      return predict_cmd.run(out);
    }
    if (evaluate_app->parsed()) {
      return evaluate_cmd.run(out);
    }
    if (demo_app->parsed()) {
      return demo_cmd.run(out);
    }
    if (covshift_app->parsed()) {
      return covshift_cmd.run(out);
    }
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

} // namespace regcal::cli

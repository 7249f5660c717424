#include "regcal/model_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace regcal {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "regcal-model";
constexpr int kVersion = 1;

json vector_json(const Vector& v)
{
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from(const json& j)
{
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

template<class M>
json matrix_json(const M& m)
{
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      flat.push_back(m(i, j));
    }
  }
  return { { "rows", m.rows() }, { "cols", m.cols() }, { "data", flat } };
}

Matrix matrix_from(const json& j)
{
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw DataError("matrix payload does not match its shape");
  }
  return Eigen::Map<const Matrix>(flat.data(), rows, cols);
}

json bandwidth_json(double h)
{
  if (std::isinf(h)) {
    return "inf";
  }
  return h;
}

double bandwidth_from(const json& j)
{
  if (j.is_string()) {
    if (j.get<std::string>() != "inf") {
      throw DataError("invalid bandwidth value");
    }
    return std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

json regressor_json(const FittedRegressor& reg)
{
  json j;
  j["kind"] = to_string(reg.kind());
  j["dims"] = reg.dims();
  if (const auto* ols = std::get_if<OlsModel>(&reg.state())) {
    j["coefficients"] = vector_json(ols->coefficients);
    j["ridge_fallback"] = ols->ridge_fallback;
  } else if (const auto* knn = std::get_if<KnnModel>(&reg.state())) {
    j["k"] = knn->k;
    j["points"] = matrix_json(knn->points);
    j["targets"] = vector_json(knn->targets);
  } else if (const auto* ext = std::get_if<ExternalModel>(&reg.state())) {
    j["column"] = ext->column;
  }
  return j;
}

FittedRegressor regressor_from(const json& j)
{
  switch (regressor_kind_from_string(j.at("kind").get<std::string>())) {
    case RegressorKind::ols: {
      OlsModel m;
      m.coefficients = vector_from(j.at("coefficients"));
      m.ridge_fallback = j.value("ridge_fallback", false);
      return FittedRegressor(std::move(m));
    }
    case RegressorKind::knn: {
      KnnModel m;
      m.k = j.at("k").get<std::size_t>();
      m.points = matrix_from(j.at("points"));
      m.targets = vector_from(j.at("targets"));
      if (m.points.rows() != m.targets.size() || m.points.rows() == 0 || m.k < 1) {
        throw DataError("invalid knn regressor payload");
      }
      return FittedRegressor(std::move(m));
    }
    case RegressorKind::external:
      return FittedRegressor(
        ExternalModel{ j.at("column").get<std::string>(), j.at("dims").get<Eigen::Index>() });
  }
  throw DataError("unknown regressor kind");
}

json projection_json(const ProjectionMap& p)
{
  json j;
  j["kind"] = to_string(p.kind);
  j["input_dims"] = p.input_dims;
  j["output_dims"] = p.output_dims;
  if (p.kind == ProjectionKind::random_gaussian) {
    j["matrix"] = matrix_json(p.matrix);
  }
  if (p.kind == ProjectionKind::covariate_select) {
    j["selected"] = p.selected;
  }
  return j;
}

ProjectionMap projection_from(const json& j)
{
  ProjectionMap p;
  p.kind = projection_kind_from_string(j.at("kind").get<std::string>());
  p.input_dims = j.at("input_dims").get<Eigen::Index>();
  p.output_dims = j.at("output_dims").get<Eigen::Index>();
  if (p.kind == ProjectionKind::random_gaussian) {
    Matrix m = matrix_from(j.at("matrix"));
    p.matrix = m;
  }
  if (p.kind == ProjectionKind::covariate_select) {
    p.selected = j.at("selected").get<std::vector<std::size_t>>();
  }
  p.validate();
  return p;
}

json config_json(const CalibratedModel& model)
{
  const auto& cfg = model.config;
  json j;
  j["split"] = { { "fraction_train", cfg.split.fraction_train },
                 { "seed", cfg.split.seed },
                 { "shuffle", cfg.split.shuffle } };
  j["regressor"] = { { "kind", to_string(cfg.regressor.kind) },
                     { "knn_k", cfg.regressor.knn_k },
                     { "external_column", cfg.regressor.external_column } };
  j["min_neighbors"] = cfg.min_neighbors;
  j["marginal"] = cfg.marginal;
  j["projection"] = { { "kind", to_string(cfg.projection.kind) },
                      { "d0", cfg.projection.d0 },
                      { "seed", cfg.projection.seed } };
  if (cfg.bandwidth) {
    j["bandwidth_mode"] = "fixed";
    j["bandwidth"] = *cfg.bandwidth;
  } else if (cfg.marginal) {
    j["bandwidth_mode"] = "marginal";
  } else {
    j["bandwidth_mode"] = "auto";
    j["search"] = { { "folds", cfg.search.folds },
                    { "seed", cfg.search.seed },
                    { "max_eval_per_fold", cfg.search.max_eval_per_fold },
                    { "distance_sample", cfg.search.distance_sample },
                    { "rate_rescale", cfg.search.rate_rescale },
                    { "tau_levels", cfg.search.tau_grid.size() } };
    if (cfg.search.lipschitz_hint) {
      j["search"]["lipschitz_hint"] = *cfg.search.lipschitz_hint;
    }
  }
  if (model.bandwidth_selection) {
    j["cross_validation"] = { { "candidates", model.bandwidth_selection->candidates },
                              { "scores", model.bandwidth_selection->scores },
                              { "selected", model.bandwidth_selection->bandwidth } };
  }
  // Row indices into the calibration input, for auditing the split.
  j["fit_rows"] = model.fit_rows;
  j["calibration_rows"] = model.calibration_rows;
  return j;
}

void config_from(const json& j, CalibratedModel& model)
{
  auto& cfg = model.config;
  const auto& split = j.at("split");
  cfg.split.fraction_train = split.at("fraction_train").get<double>();
  cfg.split.seed = split.at("seed").get<std::uint64_t>();
  cfg.split.shuffle = split.at("shuffle").get<bool>();
  const auto& reg = j.at("regressor");
  cfg.regressor.kind = regressor_kind_from_string(reg.at("kind").get<std::string>());
  cfg.regressor.knn_k = reg.at("knn_k").get<std::size_t>();
  cfg.regressor.external_column = reg.at("external_column").get<std::string>();
  cfg.min_neighbors = j.at("min_neighbors").get<std::size_t>();
  cfg.marginal = j.at("marginal").get<bool>();
  const auto& proj = j.at("projection");
  cfg.projection.kind = projection_kind_from_string(proj.at("kind").get<std::string>());
  cfg.projection.d0 = proj.at("d0").get<Eigen::Index>();
  cfg.projection.seed = proj.at("seed").get<std::uint64_t>();
  const auto mode = j.at("bandwidth_mode").get<std::string>();
  if (mode == "fixed") {
    cfg.bandwidth = j.at("bandwidth").get<double>();
  } else if (mode == "auto") {
    const auto& s = j.at("search");
    cfg.search.folds = s.at("folds").get<std::size_t>();
    cfg.search.seed = s.at("seed").get<std::uint64_t>();
    cfg.search.max_eval_per_fold = s.at("max_eval_per_fold").get<std::size_t>();
    cfg.search.distance_sample = s.at("distance_sample").get<std::size_t>();
    cfg.search.rate_rescale = s.at("rate_rescale").get<bool>();
    if (s.contains("lipschitz_hint")) {
      cfg.search.lipschitz_hint = s.at("lipschitz_hint").get<double>();
    }
  }
  model.fit_rows = j.at("fit_rows").get<std::vector<std::size_t>>();
  model.calibration_rows = j.at("calibration_rows").get<std::vector<std::size_t>>();
  if (j.contains("cross_validation")) {
    const auto& cv = j.at("cross_validation");
    BandwidthSelection sel;
    sel.candidates = cv.at("candidates").get<std::vector<double>>();
    for (const auto& s : cv.at("scores")) {
      sel.scores.push_back(s.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                       : s.get<double>());
    }
    sel.bandwidth = cv.at("selected").get<double>();
    model.bandwidth_selection = std::move(sel);
  }
}

} // namespace

json model_to_json(const CalibratedModel& model)
{
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["feature_names"] = model.feature_names();
  j["target_name"] = model.target_name();
  j["regressor"] = regressor_json(model.regressor());
  j["standardizer"] = { { "means", vector_json(model.standardizer().means) },
                        { "stddevs", vector_json(model.standardizer().stddevs) } };
  j["projection"] = projection_json(model.projection());
  const auto& est = model.estimator();
  j["estimator"] = { { "bandwidth", bandwidth_json(est.kernel().bandwidth) },
                     { "min_neighbors", est.kernel().min_neighbors },
                     { "points", matrix_json(est.points()) },
                     { "values", vector_json(est.values()) } };
  j["config"] = config_json(model);
  return j;
}

CalibratedModel model_from_json(const json& doc)
{
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw DataError("not a regcal model document");
    }
    if (doc.at("version").get<int>() != kVersion) {
      throw DataError("unsupported model version");
    }
    Standardizer standardizer;
    standardizer.means = vector_from(doc.at("standardizer").at("means"));
    standardizer.stddevs = vector_from(doc.at("standardizer").at("stddevs"));
    if (standardizer.means.size() != standardizer.stddevs.size()) {
      throw DataError("standardizer payload is inconsistent");
    }
    const auto& e = doc.at("estimator");
    KernelConfig kernel;
    kernel.bandwidth = bandwidth_from(e.at("bandwidth"));
    kernel.min_neighbors = e.at("min_neighbors").get<std::size_t>();
    auto estimator =
      QuantileEstimator::fit(matrix_from(e.at("points")), vector_from(e.at("values")), kernel);

    CalibratedModel model(regressor_from(doc.at("regressor")),
                          std::move(standardizer),
                          projection_from(doc.at("projection")),
                          std::move(estimator),
                          doc.at("feature_names").get<std::vector<std::string>>(),
                          doc.at("target_name").get<std::string>());
    config_from(doc.at("config"), model);
    return model;
  } catch (const json::exception& ex) {
    throw DataError(std::string("malformed model document: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw DataError(std::string("invalid model document: ") + ex.what());
  }
}

void save_model(const std::filesystem::path& path, const CalibratedModel& model)
{
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write model file: " + path.string());
  }
  out << model_to_json(model).dump(1) << '\n';
  if (!out) {
    throw DataError("write failed: " + path.string());
  }
}

CalibratedModel load_model(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open model file: " + path.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw DataError("model file is not valid JSON: " + path.string());
  }
  return model_from_json(doc);
}

json report_to_json(const MetricReport& report)
{
  json j;
  j["mace"] = report.mace;
  j["agce"] = report.agce;
  j["check_score"] = report.check_score;
  j["levels"] = report.levels;
  j["per_tau_observed"] = report.per_tau_observed;
  j["per_tau_check_score"] = report.per_tau_check;
  const auto& a = report.agce_config;
  j["agce_config"] = { { "groups", a.groups },
                       { "group_fraction", a.group_fraction },
                       { "min_group_size", a.min_group_size },
                       { "with_replacement", a.with_replacement },
                       { "include_full_set", a.include_full_set },
                       { "seed", a.seed } };
  j["agce_groups"] = report.agce_groups;
  if (report.group_coverage) {
    const auto& gc = *report.group_coverage;
    json bins = json::array();
    for (std::size_t b = 0; b < gc.bin_sizes.size(); ++b) {
      std::vector<double> row(static_cast<std::size_t>(gc.coverage.cols()));
      for (Eigen::Index t = 0; t < gc.coverage.cols(); ++t) {
        row[static_cast<std::size_t>(t)] = gc.coverage(static_cast<Eigen::Index>(b), t);
      }
      bins.push_back({ { "bin", b }, { "size", gc.bin_sizes[b] }, { "coverage", row } });
    }
    j["group_coverage"] = bins;
  }
  return j;
}

} // namespace regcal

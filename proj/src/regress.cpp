#include "regcal/regress.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace regcal {

namespace {

template<class... Ts>
struct overloaded : Ts...
{
  using Ts::operator()...;
};
template<class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

OlsModel fit_ols(const Dataset& train)
{
  const auto n = train.rows();
  const auto d = train.dims();
  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = train.features;

  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::VectorXd rhs = design.transpose() * train.target;

  OlsModel model;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) {
    model.coefficients = llt.solve(rhs);
  } else {
    gram.diagonal().array() += kRidgeFallback;
    model.coefficients = gram.ldlt().solve(rhs);
    model.ridge_fallback = true;
  }
  if (!model.coefficients.allFinite()) {
    throw std::runtime_error("least squares produced non-finite coefficients");
  }
  return model;
}

Vector predict_knn(const KnnModel& model, const Matrix& xs)
{
  const auto n = static_cast<std::size_t>(model.points.rows());
  const auto k = std::min(model.k, n);
  // Walk outward from the query along the first coordinate; a point whose
  // first-coordinate gap alone exceeds the current k-th distance cannot win.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return model.points(static_cast<Eigen::Index>(a), 0) <
           model.points(static_cast<Eigen::Index>(b), 0);
  });
  std::vector<double> keys(n);
  for (std::size_t t = 0; t < n; ++t) {
    keys[t] = model.points(static_cast<Eigen::Index>(order[t]), 0);
  }

  using Entry = std::pair<double, std::size_t>;
  Vector out(xs.rows());
  std::vector<Entry> best;
  best.reserve(k + 1);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const double x0 = xs(i, 0);
    best.clear();
    // Max-heap on (squared distance, index); pair ordering breaks distance
    // ties by the lower training index.
    auto consider = [&](std::size_t pos) {
      const auto t = order[pos];
      Entry e{ (model.points.row(static_cast<Eigen::Index>(t)) - xs.row(i)).squaredNorm(), t };
      if (best.size() < k) {
        best.push_back(e);
        std::push_heap(best.begin(), best.end());
      } else if (e < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = e;
        std::push_heap(best.begin(), best.end());
      }
    };
    auto pruned = [&](std::size_t pos) {
      const double g = keys[pos] - x0;
      return best.size() == k && g * g > best.front().first;
    };
    const auto mid = static_cast<std::size_t>(
      std::lower_bound(keys.begin(), keys.end(), x0) - keys.begin());
    std::size_t left = mid;
    std::size_t right = mid;
    bool left_open = left > 0;
    bool right_open = right < n;
    while (left_open || right_open) {
      if (right_open) {
        if (pruned(right)) {
          right_open = false;
        } else {
          consider(right);
          right_open = ++right < n;
        }
      }
      if (left_open) {
        if (pruned(left - 1)) {
          left_open = false;
        } else {
          consider(left - 1);
          left_open = --left > 0;
        }
      }
    }
    std::sort_heap(best.begin(), best.end());
    double sum = 0.0;
    for (const auto& e : best) {
      sum += model.targets(static_cast<Eigen::Index>(e.second));
    }
    out(i) = sum / static_cast<double>(k);
  }
  return out;
}

} // namespace

std::string to_string(RegressorKind kind)
{
  switch (kind) {
    case RegressorKind::ols:
      return "ols";
    case RegressorKind::knn:
      return "knn";
    case RegressorKind::external:
      return "external";
  }
  return "unknown";
}

RegressorKind regressor_kind_from_string(const std::string& name)
{
  if (name == "ols") {
    return RegressorKind::ols;
  }
  if (name == "knn") {
    return RegressorKind::knn;
  }
  if (name == "external") {
    return RegressorKind::external;
  }
  throw std::invalid_argument("unknown regressor kind '" + name + "'");
}

void RegressorSpec::validate() const
{
  if (kind == RegressorKind::knn && knn_k < 1) {
    throw std::invalid_argument("knn_k must be at least 1");
  }
  if (kind == RegressorKind::external && external_column.empty()) {
    throw std::invalid_argument("external regressor needs a column name");
  }
}

FittedRegressor::FittedRegressor(State state)
  : state_(std::move(state))
{}

RegressorKind FittedRegressor::kind() const
{
  return std::visit(overloaded{
                      [](const OlsModel&) { return RegressorKind::ols; },
                      [](const KnnModel&) { return RegressorKind::knn; },
                      [](const ExternalModel&) { return RegressorKind::external; },
                    },
                    state_);
}

Eigen::Index FittedRegressor::dims() const
{
  return std::visit(overloaded{
                      [](const OlsModel& m) { return m.coefficients.size() - 1; },
                      [](const KnnModel& m) { return m.points.cols(); },
                      [](const ExternalModel& m) { return m.dims; },
                    },
                    state_);
}

Vector FittedRegressor::predict(const Matrix& xs,
                                std::optional<std::span<const double>> external) const
{
  if (xs.cols() != dims()) {
    throw std::invalid_argument("regressor expects " + std::to_string(dims()) +
                                " features, got " + std::to_string(xs.cols()));
  }
  return std::visit(
    overloaded{
      [&](const OlsModel& m) -> Vector {
        Vector out = xs * m.coefficients.tail(m.coefficients.size() - 1);
        out.array() += m.coefficients(0);
        return out;
      },
      [&](const KnnModel& m) -> Vector { return predict_knn(m, xs); },
      [&](const ExternalModel& m) -> Vector {
        if (!external) {
          throw std::invalid_argument("external regressor needs predictions from column '" +
                                      m.column + "'");
        }
        if (static_cast<Eigen::Index>(external->size()) != xs.rows()) {
          throw std::invalid_argument("external predictions have " +
                                      std::to_string(external->size()) + " rows, expected " +
                                      std::to_string(xs.rows()));
        }
        return Eigen::Map<const Vector>(external->data(), xs.rows());
      },
    },
    state_);
}

FittedRegressor fit_regressor(const RegressorSpec& spec, const Dataset& train)
{
  spec.validate();
  if (train.rows() < 1) {
    throw std::invalid_argument("cannot fit a regressor on an empty dataset");
  }
  switch (spec.kind) {
    case RegressorKind::ols:
      return FittedRegressor(fit_ols(train));
    case RegressorKind::knn:
      return FittedRegressor(KnnModel{ train.features, train.target, spec.knn_k });
    case RegressorKind::external:
      return FittedRegressor(ExternalModel{ spec.external_column, train.dims() });
  }
  throw std::invalid_argument("unknown regressor kind");
}

ResidualSample residuals(const FittedRegressor& model,
                         const Dataset& data,
                         std::optional<std::span<const double>> external)
{
  Vector pred = model.predict(data.features, external);
  return { data.features, data.target - pred };
}

} // namespace regcal

#include "nnqf/regression.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace nnqf {

Eigen::MatrixXd expand(const Eigen::MatrixXd& X, const PolynomialSpec& spec) {
  if (spec.degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
  const auto S = X.cols();
  Eigen::MatrixXd A(X.rows(), static_cast<Eigen::Index>(spec.width(static_cast<std::size_t>(S))));
  A.col(0).setOnes();
  Eigen::Index col = 1;
  for (Eigen::Index s = 0; s < S; ++s) {
    Eigen::VectorXd power = X.col(s);
    for (int p = 1; p <= spec.degree; ++p) {
      if (p > 1) power = power.cwiseProduct(X.col(s));
      A.col(col++) = power;
    }
  }
  return A;
}

Eigen::RowVectorXd expand_row(std::span<const double> x, const PolynomialSpec& spec) {
  Eigen::RowVectorXd a(static_cast<Eigen::Index>(spec.width(x.size())));
  a(0) = 1.0;
  Eigen::Index col = 1;
  for (double v : x) {
    double power = v;
    for (int p = 1; p <= spec.degree; ++p) {
      if (p > 1) power *= v;
      a(col++) = power;
    }
  }
  return a;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double ridge) {
  Eigen::MatrixXd gram = A.transpose() * A;
  gram.diagonal().array() += ridge;
  return gram.ldlt().solve(A.transpose() * y);
}

SequentialFit fit_sequential(const Eigen::MatrixXd& A, const TransformedTargets& targets, const FitOptions& options) {
  if (targets.values.rows() != A.rows()) throw std::invalid_argument("targets and design have different row counts");
  if (!(A.col(0).array() == 1.0).all()) throw std::invalid_argument("design column 0 must be the intercept");

  const LowerBoundedLeastSquares solver(A, options.ridge);
  const Eigen::Index p = A.cols();
  SequentialFit fit;
  Eigen::VectorXd previous = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(A.rows());
  for (std::size_t j = 0; j < targets.grid.size(); ++j) {
    const Eigen::VectorXd y = targets.level(j);
    const ActiveSetResult res = solver.solve(y, lower, options.solver);
    if (!res.converged) {
      throw SolverError("active-set solve for q=" + std::to_string(targets.grid[j]) + " did not converge after " +
                        std::to_string(res.iterations) + " iterations");
    }
    const KktResiduals kkt = solver.kkt(y, lower, res);
    if (kkt.primal_feasibility > options.solver.feasibility_tol) {
      throw SolverError("solution for q=" + std::to_string(targets.grid[j]) + " violates its constraints by " +
                        std::to_string(kkt.primal_feasibility));
    }
    fit.diagnostics.push_back({targets.grid[j], res.iterations, res.active.size(), res.objective, kkt.max()});
    fit.coefficients.push_back(res.theta);
    previous = res.theta;
    lower = A * previous;
  }
  return fit;
}

void correct_crossing(std::span<double> values) {
  if (values.empty()) return;
  values[0] = std::max(values[0], 0.0);
  for (std::size_t j = 1; j < values.size(); ++j) values[j] = std::max(values[j], values[j - 1]);
}

std::vector<double> QuantileModelSet::predict(std::span<const double> x, bool night) const {
  if (x.size() != features.size()) {
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, model expects " +
                                std::to_string(features.size()));
  }
  std::vector<double> out(coefficients.size(), 0.0);
  if (night) return out;
  const Eigen::RowVectorXd a = expand_row(x, polynomial);
  for (std::size_t j = 0; j < coefficients.size(); ++j) out[j] = a.dot(coefficients[j]);
  correct_crossing(out);
  return out;
}

Eigen::MatrixXd QuantileModelSet::predict(const Eigen::MatrixXd& X, const std::vector<std::uint8_t>& night) const {
  if (static_cast<std::size_t>(X.cols()) != features.size()) throw std::invalid_argument("feature count mismatch");
  if (night.size() != static_cast<std::size_t>(X.rows())) throw std::invalid_argument("night flag count mismatch");
  const Eigen::MatrixXd A = expand(X, polynomial);
  Eigen::MatrixXd theta(A.cols(), static_cast<Eigen::Index>(coefficients.size()));
  for (std::size_t j = 0; j < coefficients.size(); ++j) theta.col(static_cast<Eigen::Index>(j)) = coefficients[j];
  Eigen::MatrixXd out = A * theta;
  std::vector<double> row(coefficients.size());
  for (Eigen::Index n = 0; n < out.rows(); ++n) {
    if (night[static_cast<std::size_t>(n)]) {
      out.row(n).setZero();
      continue;
    }
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = out(n, static_cast<Eigen::Index>(j));
    correct_crossing(row);
    for (std::size_t j = 0; j < row.size(); ++j) out(n, static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

std::string model_to_json(const QuantileModelSet& model) {
  nlohmann::ordered_json j;
  j["format"] = "nnqf-quantile-model";
  j["version"] = 1;
  j["household"] = model.household_id;
  j["technique"] = model.technique();
  j["degree"] = model.polynomial.degree;
  j["knn"] = model.knn;
  j["night_threshold"] = model.night_threshold;
  const auto& fs = model.feature_spec;
  j["feature_spec"] = {{"horizon", fs.horizon},
                       {"max_lag", fs.max_lag},
                       {"period", fs.period},
                       {"window_days", fs.window_days},
                       {"num_features", fs.num_features},
                       {"exogenous_channels", fs.exogenous_channels},
                       {"selected", fs.selected}};
  auto& features = j["features"] = nlohmann::ordered_json::array();
  for (const auto& d : model.features) features.push_back(d.name());
  j["columns"] = nlohmann::ordered_json::array();
  j["columns"].push_back("1");
  for (const auto& d : model.features) {
    for (int p = 1; p <= model.polynomial.degree; ++p) j["columns"].push_back(d.name() + "^" + std::to_string(p));
  }
  j["levels"] = model.grid.levels();
  auto& coef = j["coefficients"] = nlohmann::ordered_json::array();
  for (const auto& c : model.coefficients) coef.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  return j.dump(1) + "\n";
}

QuantileModelSet model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format").get<std::string>() != "nnqf-quantile-model") throw std::invalid_argument("not a quantile model document");
  QuantileModelSet m;
  m.household_id = j.at("household").get<std::string>();
  m.polynomial.degree = j.at("degree").get<int>();
  m.knn = j.at("knn").get<std::size_t>();
  m.night_threshold = j.at("night_threshold").get<double>();
  const auto& fs = j.at("feature_spec");
  m.feature_spec.horizon = fs.at("horizon").get<int>();
  m.feature_spec.max_lag = fs.at("max_lag").get<int>();
  m.feature_spec.period = fs.at("period").get<int>();
  m.feature_spec.window_days = fs.at("window_days").get<int>();
  m.feature_spec.num_features = fs.at("num_features").get<std::size_t>();
  m.feature_spec.exogenous_channels = fs.at("exogenous_channels").get<std::vector<std::string>>();
  m.feature_spec.selected = fs.at("selected").get<std::vector<std::size_t>>();
  for (const auto& name : j.at("features")) m.features.push_back(FeatureDescriptor::parse(name.get<std::string>()));
  m.grid = QuantileGrid(j.at("levels").get<std::vector<double>>());
  const std::size_t width = m.polynomial.width(m.features.size());
  for (const auto& c : j.at("coefficients")) {
    auto v = c.get<std::vector<double>>();
    if (v.size() != width) throw std::invalid_argument("coefficient vector has the wrong width");
    m.coefficients.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  if (m.coefficients.size() != m.grid.size()) throw std::invalid_argument("one coefficient vector per level expected");
  return m;
}

void save_model(const std::filesystem::path& path, const QuantileModelSet& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << model_to_json(model);
}

QuantileModelSet load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

SelectionResult forward_select(std::size_t pool_size, const std::function<Eigen::VectorXd(std::size_t)>& column,
                               const Eigen::VectorXd& y, std::size_t count, const SubsetScorer& scorer) {
  if (pool_size == 0) throw std::invalid_argument("empty candidate pool");
  if (count > pool_size) throw std::invalid_argument("cannot select more features than candidates");
  SelectionResult result;
  std::vector<char> taken(pool_size, 0);
  Eigen::MatrixXd chosen(y.size(), 0);
  for (std::size_t step = 0; step < count; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = pool_size;
    Eigen::MatrixXd trial(y.size(), chosen.cols() + 1);
    trial.leftCols(chosen.cols()) = chosen;
    for (std::size_t c = 0; c < pool_size; ++c) {
      if (taken[c]) continue;
      double score = 0.0;
      try {
        trial.col(chosen.cols()) = column(c);
        score = scorer(trial, y);
      } catch (const std::exception& e) {
        result.warnings.push_back("candidate " + std::to_string(c) + " skipped: " + e.what());
        continue;
      }
      if (!std::isfinite(score)) {
        result.warnings.push_back("candidate " + std::to_string(c) + " skipped: non-finite score");
        continue;
      }
      if (score < best) {
        best = score;
        best_index = c;
      }
    }
    if (best_index == pool_size) throw std::runtime_error("no candidate could be scored");
    taken[best_index] = 1;
    result.chosen.push_back(best_index);
    result.scores.push_back(best);
    chosen.conservativeResize(Eigen::NoChange, chosen.cols() + 1);
    chosen.col(chosen.cols() - 1) = column(best_index);
  }
  return result;
}

SelectionResult forward_select(const CandidatePool& pool, std::size_t count, const SubsetScorer& scorer) {
  return forward_select(pool.size(), [&](std::size_t c) { return pool.column(c); }, pool.target(), count, scorer);
}

SubsetScorer holdout_mse_scorer(PolynomialSpec spec, double holdout_fraction, HoldoutMode mode, std::uint64_t seed,
                                double ridge) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  return [=](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const auto N = static_cast<std::size_t>(X.rows());
    const auto n_hold = static_cast<std::size_t>(std::floor(static_cast<double>(N) * holdout_fraction));
    if (n_hold == 0 || n_hold >= N) throw std::invalid_argument("too few rows for a holdout split");
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    if (mode == HoldoutMode::Random) {
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
    }
    const std::size_t n_train = N - n_hold;
    const Eigen::MatrixXd A = expand(X, spec);
    Eigen::MatrixXd A_train(static_cast<Eigen::Index>(n_train), A.cols());
    Eigen::VectorXd y_train(static_cast<Eigen::Index>(n_train));
    for (std::size_t i = 0; i < n_train; ++i) {
      A_train.row(static_cast<Eigen::Index>(i)) = A.row(static_cast<Eigen::Index>(order[i]));
      y_train(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(order[i]));
    }
    const Eigen::VectorXd theta = least_squares(A_train, y_train, ridge);
    double sse = 0.0;
    for (std::size_t i = n_train; i < N; ++i) {
      const auto r = static_cast<Eigen::Index>(order[i]);
      const double e = y(r) - A.row(r).dot(theta);
      sse += e * e;
    }
    return sse / static_cast<double>(n_hold);
  };
}

}  // namespace nnqf

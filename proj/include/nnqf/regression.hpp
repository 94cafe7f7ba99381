#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nnqf/constrained_lsq.hpp"
#include "nnqf/features.hpp"
#include "nnqf/knn_quantile.hpp"

namespace nnqf {

/// Polynomial without cross terms: columns 1, then x_s^p for s = 1..S
/// (outer) and p = 1..d (inner).
struct PolynomialSpec {
  int degree = 1;

  std::size_t width(std::size_t features) const { return 1 + features * static_cast<std::size_t>(degree); }
  std::string technique() const { return "Poly" + std::to_string(degree); }
};

Eigen::MatrixXd expand(const Eigen::MatrixXd& X, const PolynomialSpec& spec);
Eigen::RowVectorXd expand_row(std::span<const double> x, const PolynomialSpec& spec);

struct FitOptions {
  double ridge = 1e-8;
  ActiveSetOptions solver;
};

struct FitDiagnostics {
  double level = 0.0;
  std::size_t iterations = 0;
  std::size_t active_constraints = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
};

struct SequentialFit {
  std::vector<Eigen::VectorXd> coefficients;
  std::vector<FitDiagnostics> diagnostics;
};

/// Fits the grid in ascending order: the lowest level is constrained to
/// A theta >= 0, every later level to A theta_q >= A theta_prev on all design
/// rows. Column 0 of A must be the intercept.
SequentialFit fit_sequential(const Eigen::MatrixXd& A, const TransformedTargets& targets, const FitOptions& options = {});

/// Unconstrained ridge least squares via the normal equations.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double ridge = 1e-8);

/// Running-maximum repair: out[0] = max(in[0], 0), out[j] = max(in[j], out[j-1]).
void correct_crossing(std::span<double> values);

/// Polynomial quantile models for one (household, degree, k_NN).
struct QuantileModelSet {
  std::string household_id;
  PolynomialSpec polynomial;
  std::size_t knn = 0;
  FeatureSpec feature_spec;  // geometry and selected candidate indices
  std::vector<FeatureDescriptor> features;
  double night_threshold = 1e-4;
  QuantileGrid grid;
  std::vector<Eigen::VectorXd> coefficients;

  std::string technique() const { return polynomial.technique(); }

  /// Corrected quantile curve at one input; night inputs return all zeros.
  std::vector<double> predict(std::span<const double> x, bool night = false) const;
  /// One corrected curve per row of X (rows x levels).
  Eigen::MatrixXd predict(const Eigen::MatrixXd& X, const std::vector<std::uint8_t>& night) const;
};

std::string model_to_json(const QuantileModelSet& model);
QuantileModelSet model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const QuantileModelSet& model);
QuantileModelSet load_model(const std::filesystem::path& path);

/// Score of a candidate feature subset; lower is better.
using SubsetScorer = std::function<double(const Eigen::MatrixXd& X, const Eigen::VectorXd& y)>;

struct SelectionResult {
  std::vector<std::size_t> chosen;
  std::vector<double> scores;  // best score after each greedy step
  std::vector<std::string> warnings;
};

/// Greedy forward selection of `count` columns. Ties keep the lower candidate
/// index; a candidate whose score throws or is not finite is skipped.
SelectionResult forward_select(std::size_t pool_size, const std::function<Eigen::VectorXd(std::size_t)>& column,
                               const Eigen::VectorXd& y, std::size_t count, const SubsetScorer& scorer);
SelectionResult forward_select(const CandidatePool& pool, std::size_t count, const SubsetScorer& scorer);

enum class HoldoutMode { Chronological, Random };

/// Mean squared error on a holdout of a mean (unconstrained) polynomial
/// regression fitted on the remaining rows. Chronological takes the last
/// `holdout_fraction` of the rows; Random draws them with `seed`.
SubsetScorer holdout_mse_scorer(PolynomialSpec spec, double holdout_fraction = 0.2,
                                HoldoutMode mode = HoldoutMode::Chronological, std::uint64_t seed = 0,
                                double ridge = 1e-8);

}  // namespace nnqf

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nnqf/knn_quantile.hpp"

namespace nnqf {

/// (1/N) #{n : y_n < yhat_n} - q.
double reliability_deviation_quantile(std::span<const double> truth, std::span<const double> predicted, double q);

/// mean_n (y_n - yhat_n)(q - I(y_n < yhat_n)).
double pinball_quantile(std::span<const double> truth, std::span<const double> predicted, double q);

/// Central interval built from the q_u and q_l quantile predictions.
struct IntervalPair {
  double upper_level = 0.0;
  double lower_level = 0.0;
  std::span<const double> upper;
  std::span<const double> lower;

  double coverage() const { return upper_level - lower_level; }
};

/// (1/N) #{n : lower_n <= y_n < upper_n} - (q_u - q_l).
double reliability_deviation_interval(std::span<const double> truth, const IntervalPair& pair);

/// Mean width plus 2/(1 - coverage) times the distance to the violated bound.
/// Requires q_u = 1 - q_l.
double pinball_interval(std::span<const double> truth, const IntervalPair& pair);

/// Level pairs (0.51, 0.49), (0.52, 0.48), ..., (0.99, 0.01) as grid positions.
struct IntervalLevels {
  std::size_t upper;
  std::size_t lower;
  double coverage;
};
std::vector<IntervalLevels> build_intervals(const QuantileGrid& grid);

/// Scores of one model set (household, technique, k_NN) on day pairs.
struct EvalReport {
  std::string household_id;
  std::string technique;
  std::size_t knn = 0;
  std::size_t day_pairs = 0;
  std::vector<double> levels;
  std::vector<double> quantile_reliability;  // signed, per level
  std::vector<double> quantile_pinball;
  std::vector<double> coverages;
  std::vector<double> interval_reliability;  // signed, per coverage
  std::vector<double> interval_pinball;

  double mean_abs_quantile_reliability() const;
  double mean_quantile_pinball() const;
  double mean_abs_interval_reliability() const;
  double mean_signed_interval_reliability() const;
  double mean_interval_pinball() const;
};

/// `predictions` is N x grid.size() with corrected curves for day pairs only.
EvalReport evaluate(const Eigen::VectorXd& truth, const Eigen::MatrixXd& predictions, const QuantileGrid& grid);

/// Table-shaped averages for one (technique, k_NN) over households and levels.
struct SummaryRow {
  std::string technique;
  std::size_t knn = 0;
  std::size_t reports = 0;
  double quantile_reliability = 0.0;  // mean |dRl_q|
  double quantile_pinball = 0.0;
  double interval_reliability = 0.0;  // mean |dRl_(qu-ql)|
  double interval_pinball = 0.0;
  double interval_reliability_signed = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;  // ordered by technique, then k_NN

  std::vector<std::string> techniques() const;
  std::vector<std::size_t> knns() const;
  const SummaryRow* find(const std::string& technique, std::size_t knn) const;
};

SummaryTable aggregate(const std::vector<EvalReport>& reports);

/// Signed per-level curves averaged across households for one (technique, k_NN).
struct LevelCurves {
  std::string technique;
  std::size_t knn = 0;
  std::vector<double> levels, quantile_reliability, quantile_pinball;
  std::vector<double> coverages, interval_reliability, interval_pinball;
};
std::vector<LevelCurves> level_curves(const std::vector<EvalReport>& reports);

/// technique,k_NN,metric,value_percent
void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table);
/// technique,k_NN,level_or_coverage,metric,value
void write_per_level_csv(const std::filesystem::path& path, const std::vector<LevelCurves>& curves);
/// Full per-household reports, readable by read_reports_csv.
void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_reports_csv(const std::filesystem::path& path);

/// One table: rows are k_NN, columns techniques, values in percent.
enum class TableMetric { QuantileReliability, QuantilePinball, IntervalReliability, IntervalPinball };
void write_table_csv(const std::filesystem::path& path, const SummaryTable& table, TableMetric metric);

}  // namespace nnqf

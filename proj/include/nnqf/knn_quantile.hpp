#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nnqf {

/// Ascending probability levels for which quantile models are built.
class QuantileGrid {
public:
  QuantileGrid() = default;
  explicit QuantileGrid(std::vector<double> levels);

  /// 0.01, 0.02, ..., 0.99.
  static QuantileGrid standard();

  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }
  const std::vector<double>& levels() const { return levels_; }
  /// Position of `level` in the grid (matched to 1e-9), or size() if absent.
  std::size_t find(double level) const;

private:
  std::vector<double> levels_;
};

/// Inverse-variance feature weights for the weighted Euclidean distance.
struct DistanceWeights {
  Eigen::VectorXd w;
  double epsilon = 1e-12;
};

/// w_s = 1 / max(var(X(:, s)), epsilon) with the population variance.
DistanceWeights compute_weights(const Eigen::MatrixXd& X, double epsilon = 1e-12);

double weighted_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                         const DistanceWeights& weights);

/// Row-major k-nearest-neighbor lists, ascending by (distance, row index).
struct NeighborTable {
  std::size_t k = 0;
  std::size_t rows = 0;
  std::vector<std::int32_t> index;
  std::vector<double> distance;

  std::span<const std::int32_t> neighbors(std::size_t row) const { return {index.data() + row * k, k}; }
  std::span<const double> distances(std::size_t row) const { return {distance.data() + row * k, k}; }
  /// The first `k` entries of every list; equal to a search with that k.
  NeighborTable prefix(std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static NeighborTable load(const std::filesystem::path& path);
};

struct NeighborOptions {
  bool include_self = true;
};

/// Exact search over all row pairs. Throws if k exceeds the number of
/// candidate rows (N, or N - 1 when the row itself is excluded).
NeighborTable pairwise_neighbors(const Eigen::MatrixXd& X, const DistanceWeights& weights, std::size_t k,
                                 NeighborOptions options = {});

/// Quantile of sorted samples with plotting positions (j - 0.5) / n, linear
/// interpolation between positions and clamping outside [0.5/n, (n-0.5)/n].
double empirical_quantile(std::span<const double> sorted, double q);

/// Per-level replacement targets; column j holds y_q for grid level j.
struct TransformedTargets {
  QuantileGrid grid;
  std::size_t k = 0;
  Eigen::MatrixXd values;  // N x grid.size()

  Eigen::VectorXd level(std::size_t j) const { return values.col(static_cast<Eigen::Index>(j)); }
};

TransformedTargets transform_targets(const Eigen::VectorXd& y, const NeighborTable& table, const QuantileGrid& grid);

/// Audit dump with columns row,q,value.
void write_transformed_csv(const std::filesystem::path& path, const TransformedTargets& targets);

}  // namespace nnqf

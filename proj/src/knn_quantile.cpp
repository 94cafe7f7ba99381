#include "nnqf/knn_quantile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>

#include "nnqf/csv.hpp"

namespace nnqf {

QuantileGrid::QuantileGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw std::invalid_argument("quantile grid is empty");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!(levels_[i] > 0.0 && levels_[i] < 1.0)) throw std::invalid_argument("quantile levels must lie in (0, 1)");
    if (i > 0 && !(levels_[i] > levels_[i - 1])) throw std::invalid_argument("quantile levels must be increasing");
  }
}

QuantileGrid QuantileGrid::standard() {
  std::vector<double> levels;
  for (int i = 1; i <= 99; ++i) levels.push_back(i / 100.0);
  return QuantileGrid(std::move(levels));
}

std::size_t QuantileGrid::find(double level) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (std::abs(levels_[i] - level) < 1e-9) return i;
  }
  return levels_.size();
}

DistanceWeights compute_weights(const Eigen::MatrixXd& X, double epsilon) {
  if (X.rows() < 2) throw std::invalid_argument("distance weights need at least two rows");
  DistanceWeights out;
  out.epsilon = epsilon;
  out.w.resize(X.cols());
  const auto n = static_cast<double>(X.rows());
  for (Eigen::Index s = 0; s < X.cols(); ++s) {
    const double mean = X.col(s).mean();
    const double var = (X.col(s).array() - mean).square().sum() / n;
    out.w(s) = 1.0 / std::max(var, epsilon);
  }
  return out;
}

double weighted_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                         const DistanceWeights& weights) {
  return std::sqrt((weights.w.transpose().array() * (a - b).array().square()).sum());
}

NeighborTable NeighborTable::prefix(std::size_t kk) const {
  if (kk > k) throw std::invalid_argument("prefix longer than the neighbor lists");
  NeighborTable out;
  out.k = kk;
  out.rows = rows;
  out.index.reserve(rows * kk);
  out.distance.reserve(rows * kk);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto idx = neighbors(i);
    const auto dist = distances(i);
    out.index.insert(out.index.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk));
    out.distance.insert(out.distance.end(), dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk));
  }
  return out;
}

void NeighborTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  const std::uint64_t header[2] = {k, rows};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(index.data()), static_cast<std::streamsize>(index.size() * sizeof(std::int32_t)));
  out.write(reinterpret_cast<const char*>(distance.data()), static_cast<std::streamsize>(distance.size() * sizeof(double)));
}

NeighborTable NeighborTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::uint64_t header[2] = {0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  NeighborTable t;
  t.k = header[0];
  t.rows = header[1];
  t.index.resize(t.k * t.rows);
  t.distance.resize(t.k * t.rows);
  in.read(reinterpret_cast<char*>(t.index.data()), static_cast<std::streamsize>(t.index.size() * sizeof(std::int32_t)));
  in.read(reinterpret_cast<char*>(t.distance.data()), static_cast<std::streamsize>(t.distance.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated neighbor table '" + path.string() + "'");
  return t;
}

NeighborTable pairwise_neighbors(const Eigen::MatrixXd& X, const DistanceWeights& weights, std::size_t k,
                                 NeighborOptions options) {
  const auto N = static_cast<std::size_t>(X.rows());
  const std::size_t available = options.include_self ? N : (N == 0 ? 0 : N - 1);
  if (k == 0) throw std::invalid_argument("k_NN must be positive");
  if (k > available) {
    throw std::invalid_argument("k_NN = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                                " available training rows");
  }
  if (weights.w.size() != X.cols()) throw std::invalid_argument("weight count does not match feature count");

  // Column-major copy per row for a tight inner loop.
  const auto S = static_cast<std::size_t>(X.cols());
  std::vector<double> rows(N * S);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < S; ++s) rows[i * S + s] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
  }
  std::vector<double> w(weights.w.data(), weights.w.data() + S);

  NeighborTable table;
  table.k = k;
  table.rows = N;
  table.index.resize(N * k);
  table.distance.resize(N * k);

  using Entry = std::pair<double, std::int32_t>;  // (squared distance, row); lexicographic order
  std::vector<Entry> heap;
  heap.reserve(k + 1);
  for (std::size_t i = 0; i < N; ++i) {
    heap.clear();
    const double* xi = &rows[i * S];
    for (std::size_t j = 0; j < N; ++j) {
      if (!options.include_self && j == i) continue;
      const double* xj = &rows[j * S];
      double d2 = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double diff = xi[s] - xj[s];
        d2 += w[s] * diff * diff;
      }
      const Entry e{d2, static_cast<std::int32_t>(j)};
      if (heap.size() < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end());
      } else if (e < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort_heap(heap.begin(), heap.end());
    for (std::size_t r = 0; r < k; ++r) {
      table.index[i * k + r] = heap[r].second;
      table.distance[i * k + r] = std::sqrt(heap[r].first);
    }
  }
  return table;
}

double empirical_quantile(std::span<const double> sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("empirical quantile of an empty sample");
  // Position of q on the 1-based plotting-position scale: p_j = (j - 0.5) / n  <=>  j = n q + 0.5.
  double h = static_cast<double>(n) * q + 0.5;
  const double nearest = std::round(h);
  if (std::abs(h - nearest) < 1e-9) h = nearest;
  if (h <= 1.0) return sorted.front();
  if (h >= static_cast<double>(n)) return sorted.back();
  const auto j = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(j);
  const double lo = sorted[j - 1];
  const double hi = sorted[j];
  return frac == 0.0 ? lo : lo + frac * (hi - lo);
}

TransformedTargets transform_targets(const Eigen::VectorXd& y, const NeighborTable& table, const QuantileGrid& grid) {
  if (static_cast<std::size_t>(y.size()) != table.rows) {
    throw std::invalid_argument("neighbor table was built on a different learning set");
  }
  TransformedTargets out;
  out.grid = grid;
  out.k = table.k;
  out.values.resize(y.size(), static_cast<Eigen::Index>(grid.size()));
  std::vector<double> outputs(table.k);
  for (std::size_t i = 0; i < table.rows; ++i) {
    const auto idx = table.neighbors(i);
    for (std::size_t r = 0; r < table.k; ++r) outputs[r] = y(idx[r]);
    std::sort(outputs.begin(), outputs.end());
    for (std::size_t j = 0; j < grid.size(); ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = empirical_quantile(outputs, grid[j]);
    }
  }
  return out;
}

void write_transformed_csv(const std::filesystem::path& path, const TransformedTargets& targets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "row,q,value\n";
  for (Eigen::Index i = 0; i < targets.values.rows(); ++i) {
    for (std::size_t j = 0; j < targets.grid.size(); ++j) {
      out << i << ',' << csv::format_double(targets.grid[j]) << ','
          << csv::format_double(targets.values(i, static_cast<Eigen::Index>(j))) << '\n';
    }
  }
}

}  // namespace nnqf

#include "nnqf/constrained_lsq.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>

namespace nnqf {

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

double KktResiduals::max() const {
  return std::max({stationarity, dual_feasibility, primal_feasibility, complementarity});
}

LowerBoundedLeastSquares::LowerBoundedLeastSquares(const Eigen::MatrixXd& A, double ridge) : A_(A), ridge_(ridge) {
  if (A.rows() == 0 || A.cols() == 0) throw std::invalid_argument("empty design matrix");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be nonnegative");
  gram_ = A.transpose() * A;
  gram_.diagonal().array() += ridge;
  llt_.compute(gram_);
  if (llt_.info() != Eigen::Success) throw SolverError("Gram matrix is not positive definite; add a ridge");
  const Eigen::MatrixXd linv = llt_.matrixL().solve(Eigen::MatrixXd::Identity(A.cols(), A.cols()));
  scaled_rows_ = A_ * linv.transpose();
}

double LowerBoundedLeastSquares::objective(const Eigen::VectorXd& y, const Eigen::VectorXd& theta) const {
  return (y - A_ * theta).squaredNorm() + ridge_ * theta.squaredNorm();
}

// Goldfarb-Idnani dual method on 1/2 theta^T G theta - c^T theta. Starting
// from the unconstrained minimum, the most violated row is added; rows whose
// multiplier would turn negative are dropped on the way (partial steps). The
// dual objective rises monotonically, so degenerate vertices cannot cycle.
ActiveSetResult LowerBoundedLeastSquares::solve(const Eigen::VectorXd& y, const Eigen::VectorXd& lower,
                                                const ActiveSetOptions& options) const {
  const Eigen::Index N = A_.rows();
  const Eigen::Index p = A_.cols();
  if (y.size() != N || lower.size() != N) throw std::invalid_argument("target/bound length does not match design rows");

  Eigen::VectorXd theta = llt_.solve(A_.transpose() * y);
  std::vector<Eigen::Index> working;
  std::vector<char> in_working(static_cast<std::size_t>(N), 0);
  Eigen::VectorXd mu(0);
  const double violated = 1e-13 * (1.0 + inf_norm(lower));

  ActiveSetResult result;
  std::size_t iter = 0;
  bool exhausted = false;
  while (!exhausted) {
    const Eigen::VectorXd slack = A_ * theta - lower;
    Eigen::Index add = -1;
    for (Eigen::Index i = 0; i < N; ++i) {
      if (in_working[static_cast<std::size_t>(i)] || slack(i) >= -violated) continue;
      if (add < 0 || slack(i) < slack(add)) add = i;
    }
    if (add < 0) {
      result.converged = true;
      break;
    }

    // In L^{-1}-scaled coordinates the working rows are the columns of B = Q R.
    const Eigen::VectorXd n_scaled = scaled_rows_.row(add).transpose();
    double mu_add = 0.0;
    while (true) {
      if (++iter > options.max_iterations) {
        exhausted = true;
        break;
      }
      const auto m = static_cast<Eigen::Index>(working.size());
      Eigen::MatrixXd B(p, m);
      for (Eigen::Index r = 0; r < m; ++r) B.col(r) = scaled_rows_.row(working[static_cast<std::size_t>(r)]).transpose();
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
      const Eigen::MatrixXd Q = qr.householderQ();
      const Eigen::VectorXd d = Q.transpose() * n_scaled;
      const Eigen::VectorXd d2 = d.tail(p - m);

      // Primal direction in the null space of the working rows, dual direction r.
      const bool free_direction = d2.norm() > 1e-10 * n_scaled.norm();
      const Eigen::VectorXd z = llt_.matrixU().solve(Eigen::VectorXd(Q.rightCols(p - m) * d2));
      Eigen::VectorXd r(m);
      if (m > 0) r = qr.matrixQR().topLeftCorner(m, m).triangularView<Eigen::Upper>().solve(d.head(m));

      double t_partial = std::numeric_limits<double>::infinity();
      Eigen::Index drop = -1;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (r(j) > 0.0 && mu(j) / r(j) < t_partial) {
          t_partial = std::max(mu(j), 0.0) / r(j);
          drop = j;
        }
      }
      double t_full = std::numeric_limits<double>::infinity();
      if (free_direction) t_full = -(A_.row(add).dot(theta) - lower(add)) / d2.squaredNorm();
      if (!free_direction && drop < 0) throw SolverError("constraints are infeasible");

      const double t = std::min(t_partial, t_full);
      if (m > 0) mu -= t * r;
      mu_add += t;
      if (free_direction) theta += t * z;
      if (t_full <= t_partial) {
        working.push_back(add);
        in_working[static_cast<std::size_t>(add)] = 1;
        mu.conservativeResize(m + 1);
        mu(m) = mu_add;
        break;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
      working.erase(working.begin() + drop);
      for (Eigen::Index j = drop; j + 1 < m; ++j) mu(j) = mu(j + 1);
      mu.conservativeResize(m - 1);
    }
  }

  result.iterations = iter;
  result.theta = theta;
  result.active = working;
  result.multipliers = mu;
  result.objective = objective(y, theta);
  return result;
}

KktResiduals LowerBoundedLeastSquares::kkt(const Eigen::VectorXd& y, const Eigen::VectorXd& lower,
                                           const ActiveSetResult& result) const {
  const Eigen::VectorXd c = A_.transpose() * y;
  const Eigen::VectorXd g = gram_ * result.theta - c;
  Eigen::VectorXd residual = g;
  for (std::size_t r = 0; r < result.active.size(); ++r) {
    residual -= result.multipliers(static_cast<Eigen::Index>(r)) * A_.row(result.active[r]).transpose();
  }
  const Eigen::VectorXd slack = A_ * result.theta - lower;
  const double scale = std::max({1.0, inf_norm(c), inf_norm(gram_ * result.theta)});

  KktResiduals out;
  out.stationarity = inf_norm(residual) / scale;
  out.primal_feasibility = std::max(0.0, -slack.minCoeff());
  for (std::size_t r = 0; r < result.active.size(); ++r) {
    const double m = result.multipliers(static_cast<Eigen::Index>(r));
    out.dual_feasibility = std::max(out.dual_feasibility, std::max(0.0, -m) / scale);
    out.complementarity = std::max(out.complementarity, std::abs(m * slack(result.active[r])) / scale);
  }
  return out;
}

}  // namespace nnqf

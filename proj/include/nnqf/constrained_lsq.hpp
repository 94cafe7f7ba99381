#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <stdexcept>
#include <vector>

namespace nnqf {

class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ActiveSetOptions {
  double feasibility_tol = 1e-9;  // accepted violation of a returned solution
  std::size_t max_iterations = 20000;
};

struct ActiveSetResult {
  Eigen::VectorXd theta;
  std::vector<Eigen::Index> active;  // working-set rows at termination
  Eigen::VectorXd multipliers;       // one per working-set row, >= 0 at optimum
  std::size_t iterations = 0;
  double objective = 0.0;  // ||y - A theta||^2 + ridge ||theta||^2
  bool converged = false;
};

struct KktResiduals {
  double stationarity = 0.0;
  double dual_feasibility = 0.0;
  double primal_feasibility = 0.0;
  double complementarity = 0.0;

  double max() const;
};

/// Solver for
///
///   minimize ||y - A theta||^2 + ridge ||theta||^2   subject to   A theta >= lower
///
/// with one inequality per row of A, by a dual active-set method: no feasible
/// start is needed and infeasible bounds raise SolverError. The Gram matrix
/// is factored once; repeated solves against the same design cost O(N p) per
/// added row plus a small QR of the working rows.
class LowerBoundedLeastSquares {
public:
  LowerBoundedLeastSquares(const Eigen::MatrixXd& A, double ridge);

  ActiveSetResult solve(const Eigen::VectorXd& y, const Eigen::VectorXd& lower,
                        const ActiveSetOptions& options = {}) const;

  /// Scaled residuals of the first-order conditions at a returned solution.
  KktResiduals kkt(const Eigen::VectorXd& y, const Eigen::VectorXd& lower, const ActiveSetResult& result) const;

  double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& theta) const;
  const Eigen::MatrixXd& design() const { return A_; }

private:
  Eigen::MatrixXd A_;
  double ridge_;
  Eigen::MatrixXd gram_;  // A^T A + ridge I = L L^T
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd scaled_rows_;  // rows of A L^{-T}
};

}  // namespace nnqf

#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gi::lp {

/// minimize c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,
/// x_j >= 0 unless free_var[j].
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  std::vector<bool> free_var;  // empty means all nonnegative

  explicit LinearProgram(Eigen::Index n_vars)
      : c(Eigen::VectorXd::Zero(n_vars)), A_ub(0, n_vars), b_ub(0), A_eq(0, n_vars), b_eq(0) {}

  Eigen::Index n_vars() const { return c.size(); }
  void add_le(const Eigen::RowVectorXd& row, double rhs);
  void add_eq(const Eigen::RowVectorXd& row, double rhs);
};

enum class Status { Optimal, Infeasible, Unbounded };

struct Result {
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
Result solve(const LinearProgram& lp, double tol = 1e-10);

}  // namespace gi::lp

#include "gi/simplex.hpp"

#include <cmath>
#include <limits>

#include "gi/errors.hpp"

namespace gi::lp {

void LinearProgram::add_le(const Eigen::RowVectorXd& row, double rhs) {
  A_ub.conservativeResize(A_ub.rows() + 1, n_vars());
  A_ub.row(A_ub.rows() - 1) = row;
  b_ub.conservativeResize(b_ub.size() + 1);
  b_ub(b_ub.size() - 1) = rhs;
}

void LinearProgram::add_eq(const Eigen::RowVectorXd& row, double rhs) {
  A_eq.conservativeResize(A_eq.rows() + 1, n_vars());
  A_eq.row(A_eq.rows() - 1) = row;
  b_eq.conservativeResize(b_eq.size() + 1);
  b_eq(b_eq.size() - 1) = rhs;
}

namespace {

class Tableau {
 public:
  Tableau(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::Index n_structural, double tol)
      : t_(a.rows(), a.cols() + 1), basis_(a.rows()), n_structural_(n_structural), tol_(tol) {
    t_.leftCols(a.cols()) = a;
    t_.col(a.cols()) = b;
  }

  Eigen::Index rows() const { return t_.rows(); }
  Eigen::Index cols() const { return t_.cols() - 1; }
  double rhs(Eigen::Index i) const { return t_(i, cols()); }
  std::vector<Eigen::Index>& basis() { return basis_; }

  void pivot(Eigen::Index r, Eigen::Index c) {
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[r] = c;
  }

  // Runs Bland's-rule iterations for the given cost vector over columns
  // [0, allowed_cols). Returns false on unboundedness.
  bool optimize(const Eigen::VectorXd& cost, Eigen::Index allowed_cols) {
    const Eigen::Index max_iter = 50 * (t_.rows() + t_.cols()) + 1000;
    for (Eigen::Index iter = 0; iter < max_iter; ++iter) {
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < allowed_cols; ++j) {
        double d = cost(j);
        for (Eigen::Index i = 0; i < t_.rows(); ++i) d -= cost(basis_[i]) * t_(i, j);
        if (d < -tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < t_.rows(); ++i) {
        const double a = t_(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = rhs(i) / a;
        if (ratio < best - tol_ || (std::abs(ratio - best) <= tol_ && leave >= 0 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw NumericalError("simplex: iteration limit exceeded");
  }

  double objective(const Eigen::VectorXd& cost) const {
    double z = 0.0;
    for (Eigen::Index i = 0; i < t_.rows(); ++i) z += cost(basis_[i]) * rhs(i);
    return z;
  }

  // Pivots artificial variables (columns >= n_structural) out of the basis;
  // rows that cannot be cleared are redundant and are dropped.
  void drive_out_artificials() {
    for (Eigen::Index i = 0; i < t_.rows();) {
      if (basis_[i] < n_structural_) {
        ++i;
        continue;
      }
      Eigen::Index col = -1;
      for (Eigen::Index j = 0; j < n_structural_; ++j)
        if (std::abs(t_(i, j)) > kPivotTol) {
          col = j;
          break;
        }
      if (col >= 0) {
        pivot(i, col);
        ++i;
      } else {
        remove_row(i);
      }
    }
  }

  Eigen::VectorXd solution() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_structural_);
    for (Eigen::Index i = 0; i < t_.rows(); ++i)
      if (basis_[i] < n_structural_) x(basis_[i]) = rhs(i);
    return x;
  }

 private:
  static constexpr double kPivotTol = 1e-11;

  void remove_row(Eigen::Index r) {
    const Eigen::Index last = t_.rows() - 1;
    if (r != last) {
      t_.row(r) = t_.row(last);
      basis_[r] = basis_[last];
    }
    t_.conservativeResize(last, Eigen::NoChange);
    basis_.pop_back();
  }

  Eigen::MatrixXd t_;
  std::vector<Eigen::Index> basis_;
  Eigen::Index n_structural_;
  double tol_;
};

}  // namespace

Result solve(const LinearProgram& lp, double tol) {
  const Eigen::Index n = lp.n_vars();
  const Eigen::Index m_ub = lp.A_ub.rows();
  const Eigen::Index m_eq = lp.A_eq.rows();
  const Eigen::Index m = m_ub + m_eq;
  if (lp.A_ub.cols() != n || lp.A_eq.cols() != n || lp.b_ub.size() != m_ub || lp.b_eq.size() != m_eq)
    throw ConfigError("simplex: inconsistent problem dimensions");
  if (!lp.free_var.empty() && static_cast<Eigen::Index>(lp.free_var.size()) != n)
    throw ConfigError("simplex: free_var size mismatch");

  // Column map: original variable -> (positive column, negative column or -1).
  std::vector<Eigen::Index> pos_col(n), neg_col(n, -1);
  Eigen::Index n_cols = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    pos_col[j] = n_cols++;
    if (!lp.free_var.empty() && lp.free_var[j]) neg_col[j] = n_cols++;
  }
  const Eigen::Index slack0 = n_cols;
  n_cols += m_ub;
  const Eigen::Index n_structural = n_cols;
  const Eigen::Index art0 = n_cols;
  n_cols += m;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n_cols);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool ub = i < m_ub;
    const Eigen::RowVectorXd row = ub ? lp.A_ub.row(i) : lp.A_eq.row(i - m_ub);
    double rhs = ub ? lp.b_ub(i) : lp.b_eq(i - m_ub);
    for (Eigen::Index j = 0; j < n; ++j) {
      a(i, pos_col[j]) = row(j);
      if (neg_col[j] >= 0) a(i, neg_col[j]) = -row(j);
    }
    if (ub) a(i, slack0 + i) = 1.0;
    if (rhs < 0) {
      a.row(i) = -a.row(i);
      rhs = -rhs;
    }
    a(i, art0 + i) = 1.0;
    b(i) = rhs;
  }

  Tableau tab(a, b, n_structural, tol);
  for (Eigen::Index i = 0; i < m; ++i) tab.basis()[i] = art0 + i;

  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n_cols);
  phase1.tail(m).setOnes();
  tab.optimize(phase1, n_cols);
  const double scale = 1.0 + (m > 0 ? b.cwiseAbs().maxCoeff() : 0.0);
  Result res;
  if (tab.objective(phase1) > 1e-8 * scale) {
    res.status = Status::Infeasible;
    return res;
  }
  tab.drive_out_artificials();

  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(n_cols);
  for (Eigen::Index j = 0; j < n; ++j) {
    phase2(pos_col[j]) = lp.c(j);
    if (neg_col[j] >= 0) phase2(neg_col[j]) = -lp.c(j);
  }
  if (!tab.optimize(phase2, n_structural)) {
    res.status = Status::Unbounded;
    return res;
  }
  const Eigen::VectorXd xs = tab.solution();
  res.x.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) res.x(j) = xs(pos_col[j]) - (neg_col[j] >= 0 ? xs(neg_col[j]) : 0.0);
  res.objective = lp.c.dot(res.x);
  res.status = Status::Optimal;
  return res;
}

}  // namespace gi::lp

#include "gi/game.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gi/errors.hpp"
#include "gi/simplex.hpp"

namespace gi {

CharacteristicFunction::CharacteristicFunction(int n) : n_players(n) {
  if (n < 0 || n > kMaxPlayers) throw ConfigError("player count must lie in [0, " + std::to_string(kMaxPlayers) + "]");
  values = Eigen::VectorXd::Zero(Eigen::Index{1} << n);
}

CharacteristicFunction::CharacteristicFunction(int n, Eigen::VectorXd v) : n_players(n), values(std::move(v)) {
  check_charfn(*this);
}

void check_charfn(const CharacteristicFunction& u) {
  if (u.n_players < 0 || u.n_players > kMaxPlayers)
    throw ConfigError("player count must lie in [0, " + std::to_string(kMaxPlayers) + "]");
  if (u.values.size() != (Eigen::Index{1} << u.n_players))
    throw ConfigError("characteristic function needs 2^N = " + std::to_string(1L << u.n_players) + " values, got " +
                      std::to_string(u.values.size()));
  if (!u.values.allFinite()) throw ConfigError("characteristic function has non-finite values");
  if (u.values(0) != 0.0) throw ConfigError("characteristic function must vanish on the empty coalition");
}

nlohmann::json charfn_to_json(const CharacteristicFunction& u) {
  return {{"n_players", u.n_players}, {"values", std::vector<double>(u.values.begin(), u.values.end())}};
}

CharacteristicFunction charfn_from_json(const nlohmann::json& j) {
  try {
    const auto v = j.at("values").get<std::vector<double>>();
    return {j.at("n_players").get<int>(), Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed game JSON: ") + e.what());
  }
}

double coalition_payoff(const Allocation& pi, Coalition s) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pi.size(); ++i)
    if (contains(s, static_cast<int>(i))) sum += pi(i);
  return sum;
}

Eigen::VectorXd fisher_traces(const std::vector<SensorSpec>& sensors) {
  Eigen::VectorXd tr(static_cast<Eigen::Index>(sensors.size()));
  Eigen::Index d = -1;
  for (std::size_t j = 0; j < sensors.size(); ++j) {
    const auto& s = sensors[j];
    const std::string who = "sensor " + std::to_string(j);
    if (d < 0) d = s.H.cols();
    if (s.H.cols() != d) throw ConfigError(who + ": parameter dimension differs from sensor 0");
    if (s.R.rows() != s.H.rows() || s.R.cols() != s.H.rows())
      throw ConfigError(who + ": R must be " + std::to_string(s.H.rows()) + "x" + std::to_string(s.H.rows()));
    if (s.U < 1) throw ConfigError(who + ": measurement count must be positive");
    if (!s.R.isApprox(s.R.transpose(), 1e-12)) throw ConfigError(who + ": R is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(s.R);
    if (llt.info() != Eigen::Success) throw ConfigError(who + ": R is singular or not positive-definite");
    const Eigen::MatrixXd fim = s.H.transpose() * llt.solve(s.H);
    tr(static_cast<Eigen::Index>(j)) = s.U * fim.trace();
  }
  return tr;
}

CharacteristicFunction fisher_charfn(const std::vector<SensorSpec>& sensors) {
  const Eigen::VectorXd tr = fisher_traces(sensors);
  CharacteristicFunction u(static_cast<int>(sensors.size()));
  for (Coalition s = 1; s < u.size(); ++s) u(s) = coalition_payoff(tr, s);
  return u;
}

bool is_in_core(const CharacteristicFunction& u, const Allocation& pi, double tol) {
  if (pi.size() != u.n_players) throw ConfigError("allocation length differs from player count");
  if (std::abs(pi.sum() - u(u.grand())) > tol) return false;
  for (Coalition s = 1; s < u.size(); ++s)
    if (coalition_payoff(pi, s) < u(s) - tol) return false;
  return true;
}

std::vector<double> excess_vector(const CharacteristicFunction& u, const Allocation& pi) {
  std::vector<double> e(u.size());
  for (Coalition s = 0; s < u.size(); ++s) e[s] = u(s) - coalition_payoff(pi, s);
  std::sort(e.begin(), e.end(), std::greater<>());
  return e;
}

namespace {

Eigen::RowVectorXd indicator(Coalition s, int n, bool with_t) {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n + (with_t ? 1 : 0));
  for (int i = 0; i < n; ++i)
    if (contains(s, i)) r(i) = 1.0;
  return r;
}

struct Fixed {
  Coalition s;
  double level;
};

class NucleolusSolver {
 public:
  explicit NucleolusSolver(const CharacteristicFunction& u) : u_(u), n_(u.n_players) {
    const double scale = 1.0 + u.values.cwiseAbs().maxCoeff();
    tight_tol_ = 1e-9 * scale;
    for (Coalition s = 1; s < u.grand(); ++s) active_.push_back(s);
  }

  Allocation run() {
    if (n_ == 0) return Allocation(0);
    Allocation pi;
    bool first = true;
    while (!active_.empty()) {
      lp::LinearProgram stage = base();
      stage.c(n_) = 1.0;
      const auto res = lp::solve(stage);
      if (res.status != lp::Status::Optimal) {
        if (first)
          throw NumericalError("nucleolus: efficiency and nonnegativity constraints (sum pi = u(N), pi >= 0) are infeasible");
        throw NumericalError("nucleolus: stage linear program failed after fixing tight coalitions");
      }
      first = false;
      const double t = res.x(n_);
      pi = res.x.head(n_);

      std::vector<Coalition> fix;
      std::vector<Coalition> tight;
      for (Coalition s : active_) {
        if (std::abs(u_(s) - coalition_payoff(pi, s) - t) > tight_tol_) continue;
        tight.push_back(s);
        if (always_tight(s, t)) fix.push_back(s);
      }
      if (fix.empty()) fix = tight;
      if (fix.empty()) throw NumericalError("nucleolus: no tight coalition at stage optimum");
      for (Coalition s : fix) fixed_.push_back({s, t});
      prune();
    }
    for (Eigen::Index i = 0; i < pi.size(); ++i)
      if (pi(i) < 0.0 && pi(i) > -1e-12) pi(i) = 0.0;
    return pi;
  }

 private:
  lp::LinearProgram base() const {
    lp::LinearProgram lp(n_ + 1);
    lp.free_var.assign(static_cast<std::size_t>(n_ + 1), false);
    lp.free_var.back() = true;
    lp.add_eq(indicator(u_.grand(), n_, true), u_(u_.grand()));
    for (const auto& f : fixed_) lp.add_eq(indicator(f.s, n_, true), u_(f.s) - f.level);
    for (Coalition s : active_) {
      Eigen::RowVectorXd row = -indicator(s, n_, true);
      row(n_) = -1.0;
      lp.add_le(row, -u_(s));
    }
    return lp;
  }

  // True when s keeps excess t in every optimum of the current stage.
  bool always_tight(Coalition s, double t) const {
    lp::LinearProgram lp = base();
    Eigen::RowVectorXd pin = Eigen::RowVectorXd::Zero(n_ + 1);
    pin(n_) = 1.0;
    lp.add_eq(pin, t);
    lp.c.head(n_) = -indicator(s, n_, false).transpose();
    const auto res = lp::solve(lp);
    if (res.status != lp::Status::Optimal) return true;
    return u_(s) - coalition_payoff(res.x.head(n_), s) >= t - tight_tol_;
  }

  // Drops active coalitions whose excess is already pinned down by the
  // fixed equalities together with efficiency.
  void prune() {
    std::vector<Eigen::RowVectorXd> rows{indicator(u_.grand(), n_, false)};
    for (const auto& f : fixed_) rows.push_back(indicator(f.s, n_, false));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), n_);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    const auto rank_of = [](const Eigen::MatrixXd& a) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
      lu.setThreshold(1e-10);
      return lu.rank();
    };
    const Eigen::Index base_rank = rank_of(m);
    std::vector<Coalition> keep;
    for (Coalition s : active_) {
      if (std::any_of(fixed_.begin(), fixed_.end(), [&](const Fixed& f) { return f.s == s; })) continue;
      if (base_rank == n_) continue;
      Eigen::MatrixXd ext(m.rows() + 1, n_);
      ext << m, indicator(s, n_, false);
      if (rank_of(ext) > base_rank) keep.push_back(s);
    }
    active_ = std::move(keep);
  }

  const CharacteristicFunction& u_;
  int n_;
  double tight_tol_;
  std::vector<Coalition> active_;
  std::vector<Fixed> fixed_;
};

}  // namespace

Allocation nucleolus(const CharacteristicFunction& u) {
  check_charfn(u);
  if (u.n_players == 1) return Allocation::Constant(1, u(1));
  return NucleolusSolver(u).run();
}

Allocation shapley(const CharacteristicFunction& u) {
  check_charfn(u);
  const int n = u.n_players;
  // weight[s] = s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
  std::vector<double> weight(static_cast<std::size_t>(std::max(n, 1)));
  for (int s = 0; s < n; ++s) {
    double binom = 1.0;
    for (int k = 1; k <= s; ++k) binom = binom * (n - 1 - s + k) / k;
    weight[static_cast<std::size_t>(s)] = 1.0 / (n * binom);
  }
  Allocation phi = Allocation::Zero(n);
  for (Coalition s = 0; s < u.size(); ++s)
    for (int i = 0; i < n; ++i) {
      if (contains(s, i)) continue;
      phi(i) += weight[static_cast<std::size_t>(coalition_size(s))] * (u(s | (Coalition{1} << i)) - u(s));
    }
  return phi;
}

bool is_null_player(const CharacteristicFunction& u, int i, double tol) {
  if (i < 0 || i >= u.n_players) throw ConfigError("player index out of range");
  for (Coalition s = 0; s < u.size(); ++s)
    if (!contains(s, i) && std::abs(u(s | (Coalition{1} << i)) - u(s)) > tol) return false;
  return true;
}

bool is_modular(const CharacteristicFunction& u, double tol) {
  for (int j = 0; j < u.n_players; ++j) {
    const Coalition bit = Coalition{1} << j;
    const double ref = u(bit) - u(0);
    for (Coalition s = 0; s < u.size(); ++s)
      if (!contains(s, j) && std::abs(u(s | bit) - u(s) - ref) > tol) return false;
  }
  return true;
}

RuleProbabilities rule_probabilities(const Allocation& pi, const RuleAssignment& assignment, const Grammar& g) {
  const auto n = static_cast<int>(pi.size());
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (const auto& [id, players] : assignment) {
    if (!g.find_rule(id)) throw ConfigError("rule assignment names unknown rule '" + id + "'");
    for (int j : players) {
      if (j < 0 || j >= n) throw ConfigError("rule '" + id + "' assigned to player " + std::to_string(j) + " out of range");
      seen[static_cast<std::size_t>(j)] = true;
    }
  }
  for (int j = 0; j < n; ++j)
    if (!seen[static_cast<std::size_t>(j)]) throw ConfigError("player " + std::to_string(j) + " owns no rule");

  RuleProbabilities out;
  for (const auto& [key, idx] : g.groups()) {
    std::vector<double> mass;
    for (auto i : idx) {
      const auto& r = g.rules[i];
      if (r.is_noise()) throw ConfigError("assign rule probabilities before adding noise rules");
      auto it = assignment.find(r.id);
      if (it == assignment.end()) throw ConfigError("rule '" + r.id + "' has no assigned players");
      double m = 0.0;
      for (int j : it->second) m += pi(j);
      mass.push_back(m);
    }
    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0) out.unreachable_groups.insert(key);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.prob[g.rules[idx[k]].id] = total > 0.0 ? mass[k] / total : 0.0;
  }
  return out;
}

Grammar with_probabilities(const Grammar& g, const RuleProbabilities& p) {
  Grammar out = g;
  for (auto& r : out.rules)
    if (auto it = p.prob.find(r.id); it != p.prob.end()) r.prob = it->second;
  return out;
}

}  // namespace gi

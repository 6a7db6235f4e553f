#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gi/grammar.hpp"

namespace gi {

/// Bit i set means player i participates.
using Coalition = std::uint32_t;

inline constexpr int kMaxPlayers = 20;

inline bool contains(Coalition s, int i) { return (s >> i) & 1U; }
inline int coalition_size(Coalition s) { return __builtin_popcount(s); }

/// Dense table of coalition values in bitmask order.
struct CharacteristicFunction {
  int n_players = 0;
  Eigen::VectorXd values;

  CharacteristicFunction() = default;
  explicit CharacteristicFunction(int n);
  CharacteristicFunction(int n, Eigen::VectorXd v);

  Coalition grand() const { return (Coalition{1} << n_players) - 1; }
  std::size_t size() const { return std::size_t{1} << n_players; }
  double operator()(Coalition s) const { return values(static_cast<Eigen::Index>(s)); }
  double& operator()(Coalition s) { return values(static_cast<Eigen::Index>(s)); }
};

using Allocation = Eigen::VectorXd;

/// Throws ConfigError when u(empty) != 0, values are non-finite or the table
/// size does not match the player count.
void check_charfn(const CharacteristicFunction& u);

nlohmann::json charfn_to_json(const CharacteristicFunction& u);
CharacteristicFunction charfn_from_json(const nlohmann::json& j);

/// Sum of pi over the members of s.
double coalition_payoff(const Allocation& pi, Coalition s);

struct SensorSpec {
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  int U = 1;
};

/// U_j tr(H_j' R_j^-1 H_j) per sensor.
Eigen::VectorXd fisher_traces(const std::vector<SensorSpec>& sensors);

/// u(S) = tr(sum_{j in S} U_j H_j' R_j^-1 H_j).
CharacteristicFunction fisher_charfn(const std::vector<SensorSpec>& sensors);

bool is_in_core(const CharacteristicFunction& u, const Allocation& pi, double tol = 1e-9);

/// All 2^N excesses u(S) - pi(S), including the empty coalition, sorted
/// non-increasing.
std::vector<double> excess_vector(const CharacteristicFunction& u, const Allocation& pi);

/// Lexicographic minimizer of the sorted excess vector over efficient,
/// nonnegative allocations, by sequential linear programs.
Allocation nucleolus(const CharacteristicFunction& u);

Allocation shapley(const CharacteristicFunction& u);

bool is_null_player(const CharacteristicFunction& u, int i, double tol = 1e-9);
bool is_modular(const CharacteristicFunction& u, double tol = 1e-9);

/// Production-rule id -> players assigned to it.
using RuleAssignment = std::map<std::string, std::vector<int>>;

struct RuleProbabilities {
  std::map<std::string, double> prob;
  /// Keys of LHS groups whose assigned payoff mass is zero.
  std::set<std::string> unreachable_groups;
};

/// P(r) = sum_{j in I_r} pi_j / sum_{r' ~ r} sum_{j in I_r'} pi_j, with r' ranging
/// over rules sharing the left-hand side of r.
RuleProbabilities rule_probabilities(const Allocation& pi, const RuleAssignment& assignment, const Grammar& g);

/// Copy of g carrying the given probabilities.
Grammar with_probabilities(const Grammar& g, const RuleProbabilities& p);

}  // namespace gi

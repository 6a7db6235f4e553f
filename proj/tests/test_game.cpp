#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gi/errors.hpp"
#include "gi/game.hpp"
#include "gi/grammar.hpp"
#include "gi/simplex.hpp"
#include "oracles.hpp"

using namespace gi;

namespace {

CharacteristicFunction table(int n, std::vector<double> v) {
  return CharacteristicFunction(n, Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

CharacteristicFunction from_traces(const std::vector<double>& t) {
  const int n = static_cast<int>(t.size());
  CharacteristicFunction u(n);
  for (Coalition s = 0; s < u.size(); ++s)
    for (int i = 0; i < n; ++i)
      if (contains(s, i)) u(s) += t[static_cast<std::size_t>(i)];
  return u;
}

SensorSpec trace_sensor(double t) {
  return {std::sqrt(t / 2.0) * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), 1};
}

Grammar one_group(int rules) {
  Grammar g;
  g.nonterminals = {"S"};
  g.terminals = {"a"};
  g.start = "S";
  for (int r = 0; r < rules; ++r) g.rules.push_back({"r" + std::to_string(r + 1), {"S"}, {"a"}, 1.0 / rules});
  return g;
}

}  // namespace

TEST_SUITE("game") {

TEST_CASE("simplex solves a small LP") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6
  lp::LinearProgram p(2);
  p.c = Eigen::Vector2d(-1, -1);
  p.add_le(Eigen::RowVector2d(1, 2), 4);
  p.add_le(Eigen::RowVector2d(3, 1), 6);
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(r.x(0) == doctest::Approx(1.6));
  CHECK(r.x(1) == doctest::Approx(1.2));
}

TEST_CASE("simplex reports infeasible and unbounded problems") {
  lp::LinearProgram inf(1);
  inf.c = Eigen::VectorXd::Ones(1);
  inf.add_le(Eigen::RowVectorXd::Ones(1), -1);
  CHECK(lp::solve(inf).status == lp::Status::Infeasible);
  lp::LinearProgram unb(1);
  unb.c = -Eigen::VectorXd::Ones(1);
  CHECK(lp::solve(unb).status == lp::Status::Unbounded);
  lp::LinearProgram fr(2);
  fr.c = Eigen::Vector2d(1, 0);
  fr.free_var = {true, false};
  fr.add_eq(Eigen::RowVector2d(1, 1), -3);
  fr.add_le(Eigen::RowVector2d(-1, 0), 5);
  const auto r = lp::solve(fr);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(r.x(0) == doctest::Approx(-5));
}

TEST_CASE("fisher characteristic function") {
  const std::vector<SensorSpec> one{{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), 1}};
  CHECK(fisher_charfn(one)(1) == doctest::Approx(2.0));

  const auto u = fisher_charfn({trace_sensor(2), trace_sensor(3), trace_sensor(5)});
  CHECK(u(7) == doctest::Approx(10));
  CHECK(u(0) == 0.0);
  CHECK(u(5) == doctest::Approx(7));

  std::mt19937_64 rng(1);
  const auto u2 = fisher_charfn(oracle::random_sensors(4, rng, {2}));
  CHECK(is_null_player(u2, 2));
  for (Coalition s = 0; s < u2.size(); ++s)
    if (!contains(s, 2)) CHECK(u2(s | 4U) == doctest::Approx(u2(s)));
}

TEST_CASE("fisher inputs are validated") {
  SensorSpec bad{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(2, 2), 1};
  CHECK_THROWS_AS(fisher_charfn({bad}), ConfigError);
  SensorSpec a{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), 1};
  SensorSpec b{Eigen::MatrixXd::Identity(2, 3), Eigen::MatrixXd::Identity(2, 2), 1};
  CHECK_THROWS_AS(fisher_charfn({a, b}), ConfigError);
  SensorSpec c{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), 0};
  CHECK_THROWS_AS(fisher_charfn({c}), ConfigError);
}

TEST_CASE("core membership") {
  const auto m = from_traces({1, 2, 3});
  CHECK(is_in_core(m, Eigen::Vector3d(1, 2, 3)));
  const auto u = table(3, {0, 0, 0, 0, 0, 0, 0, 1});
  CHECK(is_in_core(u, Eigen::Vector3d(1, 0, 0)));
  CHECK_FALSE(is_in_core(u, Eigen::Vector3d(0.5, 0.5, 0.5)));
  const auto v = table(3, {0, 0, 0, 1, 0, 0, 0, 1});
  CHECK_FALSE(is_in_core(v, Eigen::Vector3d(0, 0, 1)));
}

TEST_CASE("excess vector") {
  const auto m = from_traces({1, 2, 3});
  for (double e : excess_vector(m, Eigen::Vector3d(1, 2, 3))) CHECK(e == doctest::Approx(0.0));
  const auto u = table(2, {0, 1, 0, 2});
  const auto e = excess_vector(u, Eigen::Vector2d(1, 1));
  REQUIRE(e.size() == 4);
  CHECK(e == std::vector<double>{0, 0, 0, -1});
  const auto e2 = excess_vector(u, Eigen::Vector2d(1.1, 1));
  CHECK(e2[1] < e[1]);
}

TEST_CASE("nucleolus goldens") {
  const auto sym = table(3, {0, 0, 0, 0, 0, 0, 0, 1});
  const auto n1 = nucleolus(sym);
  for (int i = 0; i < 3; ++i) CHECK(n1(i) == doctest::Approx(1.0 / 3).epsilon(1e-9));

  const auto n2 = nucleolus(fisher_charfn({trace_sensor(2), trace_sensor(3), trace_sensor(5)}));
  CHECK((n2 - Eigen::Vector3d(2, 3, 5)).cwiseAbs().maxCoeff() < 1e-8);

  // glove-like game: the whole surplus goes to the scarce player
  const auto glove = table(3, {0, 0, 0, 1, 0, 1, 0, 1});
  const auto n3 = nucleolus(glove);
  CHECK((n3 - Eigen::Vector3d(1, 0, 0)).cwiseAbs().maxCoeff() < 1e-8);

  CHECK(nucleolus(table(1, {0, 4}))(0) == doctest::Approx(4));
  CHECK(nucleolus(table(2, {0, 0, 0, 0})).isZero());
}

TEST_CASE("nucleolus with an empty core still minimises excess") {
  // every pair worth 1, grand coalition 1: core is empty, nucleolus is the centre
  const auto u = table(3, {0, 0, 0, 1, 0, 1, 1, 1});
  const auto n = nucleolus(u);
  CHECK(n.sum() == doctest::Approx(1));
  for (int i = 0; i < 3; ++i) CHECK(n(i) == doctest::Approx(1.0 / 3).epsilon(1e-9));
}

TEST_CASE("nucleolus rejects infeasible games") {
  CHECK_THROWS_AS(nucleolus(table(2, {0, 1, 1, -1})), NumericalError);
}

TEST_CASE("nucleolus matches the grid oracle on a few games") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> val(0, 10);
  for (int t = 0; t < 5; ++t) {
    CharacteristicFunction u(3);
    for (Coalition s = 1; s < 8; ++s) u(s) = val(rng);
    const Eigen::Vector3d want = oracle::grid_nucleolus(u, 1e-2, 2e-2);
    CHECK((nucleolus(u) - want).cwiseAbs().maxCoeff() < 5e-2);
  }
}

TEST_CASE("nucleolus properties on random games") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> val(0, 4);
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + t % 4;
    CharacteristicFunction u(n);
    for (Coalition s = 1; s < u.size(); ++s) u(s) = val(rng) * coalition_size(s);
    const auto pi = nucleolus(u);
    CHECK(pi.sum() == doctest::Approx(u(u.grand())).epsilon(1e-10));
    CHECK(pi.minCoeff() >= -1e-12);

    // relabelling players permutes the allocation
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CharacteristicFunction v(n);
    for (Coalition s = 0; s < u.size(); ++s) {
      Coalition img = 0;
      for (int i = 0; i < n; ++i)
        if (contains(s, i)) img |= 1U << perm[static_cast<std::size_t>(i)];
      v(img) = u(s);
    }
    const auto pv = nucleolus(v);
    const auto sv = shapley(v), su = shapley(u);
    for (int i = 0; i < n; ++i) {
      CHECK(pv(perm[static_cast<std::size_t>(i)]) == doctest::Approx(pi(i)).epsilon(1e-7));
      CHECK(sv(perm[static_cast<std::size_t>(i)]) == doctest::Approx(su(i)).epsilon(1e-10));
    }
  }
}

TEST_CASE("nucleolus lies in a nonempty core") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    // convex games have nonempty cores: u(S) = (sum of weights)^2
    const int n = 3 + t % 3;
    std::uniform_real_distribution<double> w(0, 2);
    std::vector<double> wts(static_cast<std::size_t>(n));
    for (auto& x : wts) x = w(rng);
    CharacteristicFunction u(n);
    for (Coalition s = 0; s < u.size(); ++s) {
      double a = 0;
      for (int i = 0; i < n; ++i)
        if (contains(s, i)) a += wts[static_cast<std::size_t>(i)];
      u(s) = a * a;
    }
    CHECK(is_in_core(u, nucleolus(u), 1e-6));
    CHECK(is_in_core(u, shapley(u), 1e-6));
  }
}

TEST_CASE("shapley goldens and oracle") {
  CHECK((shapley(from_traces({2, 3, 5})) - Eigen::Vector3d(2, 3, 5)).cwiseAbs().maxCoeff() < 1e-12);
  const auto s2 = shapley(table(2, {0, 1, 0, 3}));
  CHECK(s2(0) == doctest::Approx(2));
  CHECK(s2(1) == doctest::Approx(1));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> val(-2, 5);
  for (int n = 1; n <= 6; ++n) {
    CharacteristicFunction u(n);
    for (Coalition s = 1; s < u.size(); ++s) u(s) = val(rng);
    const auto phi = shapley(u);
    CHECK((phi - oracle::shapley_by_orders(u)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(phi.sum() == doctest::Approx(u(u.grand())).epsilon(1e-12));
  }
  CHECK_THROWS_AS(shapley(CharacteristicFunction(21)), ConfigError);
}

TEST_CASE("null players and modularity") {
  std::mt19937_64 rng(2);
  const auto u = fisher_charfn(oracle::random_sensors(3, rng, {1}));
  CHECK(is_null_player(u, 1));
  CHECK_FALSE(is_null_player(u, 0));
  CHECK(shapley(u)(1) == doctest::Approx(0).epsilon(1e-12));
  CHECK(is_null_player(table(1, {0, 0}), 0));
  CHECK(is_modular(u));
  CHECK_FALSE(is_modular(table(2, {0, 1, 1, 3})));
  auto w = u;
  w(3) += 1.0;
  CHECK_FALSE(is_modular(w));
}

TEST_CASE("charfn json") {
  const auto u = from_traces({1, 2, 4});
  const auto back = charfn_from_json(charfn_to_json(u));
  CHECK(back.n_players == 3);
  CHECK(back.values == u.values);
  CHECK_THROWS_AS(charfn_from_json(nlohmann::json{{"n_players", 2}, {"values", {1, 2, 3, 4}}}), ConfigError);
  CHECK_THROWS_AS(charfn_from_json(nlohmann::json{{"n_players", 2}, {"values", {0, 2, 3}}}), ConfigError);
}

TEST_CASE("rule probabilities") {
  const Eigen::Vector3d pi(2, 3, 5);
  auto g = one_group(2);
  const auto p = rule_probabilities(pi, {{"r1", {0}}, {"r2", {1, 2}}}, g);
  CHECK(p.prob.at("r1") == doctest::Approx(0.2));
  CHECK(p.prob.at("r2") == doctest::Approx(0.8));
  CHECK(p.unreachable_groups.empty());

  auto g3 = one_group(3);
  const auto q = rule_probabilities(Eigen::Vector3d(1, 1, 1), {{"r1", {0}}, {"r2", {1}}, {"r3", {2}}}, g3);
  for (const auto& [r, v] : q.prob) CHECK(v == doctest::Approx(1.0 / 3));

  const auto z = rule_probabilities(Eigen::Vector3d(0, 1, 1), {{"r1", {0}}, {"r2", {1}}, {"r3", {2}}}, g3);
  CHECK(z.prob.at("r1") == 0.0);

  auto g1 = one_group(1);
  CHECK(rule_probabilities(Eigen::Vector2d(1, 2), {{"r1", {0, 1}}}, g1).prob.at("r1") == doctest::Approx(1));
  const auto dead = rule_probabilities(Eigen::VectorXd::Zero(1), {{"r1", {0}}}, g1);
  CHECK(dead.prob.at("r1") == 0.0);
  CHECK(dead.unreachable_groups.count("S") == 1);
}

TEST_CASE("rule assignments are validated") {
  auto g = one_group(2);
  CHECK_THROWS_AS(rule_probabilities(Eigen::Vector2d(1, 1), {{"r1", {0}}}, g), ConfigError);
  CHECK_THROWS_AS(rule_probabilities(Eigen::Vector2d(1, 1), {{"r1", {0}}, {"r2", {0}}}, g), ConfigError);
  CHECK_THROWS_AS(rule_probabilities(Eigen::Vector2d(1, 1), {{"r1", {0}}, {"r2", {2}}}, g), ConfigError);
  CHECK_THROWS_AS(rule_probabilities(Eigen::Vector2d(1, 1), {{"r1", {0}}, {"r2", {1}}, {"r9", {1}}}, g), ConfigError);
}

TEST_CASE("rule probabilities normalise every live group on the triangle grammar") {
  const auto g = builtin_grammar("triangle");
  RuleAssignment a;
  for (const char* r : {"I", "II", "III"}) a[r] = {0};
  for (const char* r : {"IV", "V", "VI"}) a[r] = {1};
  for (const char* r : {"VII", "VIII", "IX", "X", "XI", "XII"}) a[r] = {2};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> val(0, 3);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector3d pi(val(rng), val(rng), val(rng));
    const auto p = rule_probabilities(pi, a, g);
    const auto h = with_probabilities(g, p);
    CHECK(validate(h).empty());
    for (const auto& [key, idx] : h.groups()) {
      if (p.unreachable_groups.count(key)) continue;
      double s = 0;
      for (auto i : idx) s += h.rules[i].prob;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

}

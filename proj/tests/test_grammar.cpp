#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "gi/errors.hpp"
#include "gi/grammar.hpp"

using namespace gi;

namespace {

std::set<std::string> roman(int from, int to) {
  static const char* names[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"};
  std::set<std::string> out;
  for (int i = from; i <= to; ++i) out.insert(names[i - 1]);
  return out;
}

Grammar restricted(int from, int to) { return restrict_rules(builtin_grammar("triangle"), roman(from, to)); }

std::size_t count(const std::vector<std::string>& s, const std::string& t) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), t));
}

bool reachable(const Grammar& g, const std::string& target, int seeds) {
  for (int s = 0; s < seeds; ++s) {
    try {
      if (join_symbols(generate(g, static_cast<std::uint64_t>(s)), "") == target) return true;
    } catch (const NonTerminationError&) {
    }
  }
  return false;
}

}  // namespace

TEST_SUITE("grammar") {

TEST_CASE("triangle grammar validates") {
  const auto g = builtin_grammar("triangle");
  CHECK(g.rules.size() == 12);
  CHECK(validate(g).empty());
  CHECK(g.find_rule("IV")->prob == doctest::Approx(1.0 / 6));
  CHECK(g.find_rule("IX")->prob == 1.0);
  for (const auto& name : builtin_grammar_names()) CHECK(validate(builtin_grammar(name)).empty());
  CHECK_THROWS_AS(builtin_grammar("nope"), ConfigError);
}

TEST_CASE("validation reports offending rules and groups") {
  auto g = builtin_grammar("triangle");
  g.find_rule("VI")->prob = 1.2;
  auto v = validate(g);
  REQUIRE(!v.empty());
  CHECK(std::any_of(v.begin(), v.end(), [](const std::string& m) { return m.find("VI") != std::string::npos; }));

  g = builtin_grammar("triangle");
  g.find_rule("III")->prob = 0.9;
  v = validate(g);
  REQUIRE(!v.empty());
  CHECK(std::any_of(v.begin(), v.end(), [](const std::string& m) { return m.find("'D'") != std::string::npos; }));

  g = builtin_grammar("triangle");
  g.rules.push_back({"bad", {"S"}, {"q"}, 0.0});
  CHECK(!validate(g).empty());
  g = builtin_grammar("triangle");
  g.rules.push_back({"bad", {"d"}, {"b"}, 0.0});
  CHECK(!validate(g).empty());
}

TEST_CASE("classification") {
  CHECK(classify(restricted(1, 3)) == GrammarClass::SRG);
  CHECK(classify(restricted(1, 6)) == GrammarClass::SCFG);
  CHECK(classify(restricted(1, 12)) == GrammarClass::SCSG);
  CHECK(classify(builtin_grammar("triangle-srg")) == GrammarClass::SRG);
  CHECK(classify(builtin_grammar("triangle-scfg")) == GrammarClass::SCFG);
  CHECK(classify(builtin_grammar("triangle-scsg")) == GrammarClass::SCSG);
}

TEST_CASE("zeroing rules never raises the class") {
  std::mt19937_64 rng(3);
  const auto g = builtin_grammar("triangle");
  for (int t = 0; t < 200; ++t) {
    std::set<std::string> keep;
    for (const auto& r : g.rules)
      if (rng() % 2) keep.insert(r.id);
    const auto a = restrict_rules(g, keep);
    std::set<std::string> fewer;
    for (const auto& id : keep)
      if (rng() % 3) fewer.insert(id);
    const auto b = restrict_rules(a, fewer);
    CHECK(static_cast<int>(classify(b)) <= static_cast<int>(classify(a)));
  }
}

TEST_CASE("restriction renormalises surviving rules") {
  const auto g = restricted(4, 6);
  CHECK(g.find_rule("I")->prob == 0.0);
  CHECK(g.find_rule("IV")->prob == doctest::Approx(0.5));
  CHECK(g.find_rule("III")->prob == 0.0);
  CHECK(validate(g).empty());
}

TEST_CASE("noise channel") {
  const auto g = builtin_grammar("triangle");
  const auto n0 = apply_noise(g, 0.0);
  for (const auto& r : g.rules) CHECK(n0.find_rule(r.id)->prob == r.prob);
  CHECK(n0.has_noise_rules());
  for (const auto& r : n0.rules)
    if (r.is_noise()) CHECK(r.prob == 0.0);

  const auto n1 = apply_noise(restricted(4, 6), 0.1);
  CHECK(n1.find_rule("IV")->prob == doctest::Approx(0.45).epsilon(1e-14));
  for (const auto& q : {0.0, 0.1, 0.3, 0.99}) {
    const auto h = apply_noise(g, q);
    CHECK(validate(h).empty());
    for (const auto& [key, idx] : h.groups()) {
      double s = 0, noise = 0;
      for (auto i : idx) {
        s += h.rules[i].prob;
        if (h.rules[i].is_noise()) noise = h.rules[i].prob;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
      CHECK(noise == q);
    }
  }
  CHECK_THROWS_AS(apply_noise(g, 1.0), ConfigError);
  CHECK_THROWS_AS(apply_noise(g, -0.1), ConfigError);
  CHECK_THROWS_AS(apply_noise(n0, 0.1), ConfigError);
}

TEST_CASE("disabled groups get a zero mass noise rule") {
  const auto g = apply_noise(restricted(1, 3), 0.2);
  for (const auto& [key, idx] : g.groups()) {
    double s = 0;
    for (auto i : idx) s += g.rules[i].prob;
    if (key == "B" || key == "d B" || key == "b C" || key == "C B" || key == "c C") CHECK(s == 0.0);
    else CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("hand derivation of a single d") {
  auto g = restricted(1, 3);
  g.find_rule("I")->prob = 0.0;
  g.find_rule("II")->prob = 1.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = derivation_trace(g, s);
    CHECK(d.string == std::vector<std::string>{"d"});
    REQUIRE(d.steps.size() == 2);
    CHECK(d.steps[0].rule_id == "II");
    CHECK(d.steps[1].rule_id == "III");
  }
}

TEST_CASE("triangle strings are reachable") {
  CHECK(reachable(restricted(1, 3), "ddd", 200));
  CHECK(reachable(restricted(3, 6), "ddbb", 200));
  CHECK(reachable(restricted(6, 12), "ddbbcc", 500));
  CHECK(reachable(restricted(4, 12), "dddbbbcc", 4000));
  CHECK(reachable(builtin_grammar("triangle"), "dddddbbbcc", 20000));
}

TEST_CASE("without B -> b the pair rules dead end") {
  // only the first B can become b through dB -> db
  const auto g = restricted(7, 12);
  int dead = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    try {
      const auto out = generate(g, s);
      CHECK(count(out, "b") <= 1);
    } catch (const NonTerminationError& e) {
      ++dead;
      CHECK(!e.partial_form().empty());
    }
  }
  CHECK(dead > 0);
}

TEST_CASE("generation is deterministic and replayable") {
  const auto g = apply_noise(builtin_grammar("triangle"), 0.3);
  for (std::uint64_t s = 0; s < 300; ++s) {
    Derivation d;
    try {
      d = derivation_trace(g, s);
    } catch (const NonTerminationError&) {
      continue;
    }
    CHECK(generate(g, s) == d.string);
    CHECK(replay(g, d.steps) == d.string);
    for (const auto& t : d.string) CHECK(g.is_terminal(t));
    for (const auto& st : d.steps)
      if (g.find_rule(st.rule_id)->is_noise()) CHECK(st.noise_terminal.has_value());
  }
}

TEST_CASE("step budget is enforced") {
  Grammar g;
  g.nonterminals = {"S"};
  g.terminals = {"a"};
  g.start = "S";
  g.rules = {{"loop", {"S"}, {"a", "S"}, 1.0}};
  try {
    generate(g, 1, 50);
    FAIL("expected a non-termination error");
  } catch (const NonTerminationError& e) {
    CHECK(e.partial_form().find("S") != std::string::npos);
  }
  CHECK_THROWS_AS(generate(g, 1, 0), ConfigError);
}

TEST_CASE("terminal counts of the triangle language") {
  const auto g = builtin_grammar("triangle");
  const auto pairs = restricted(6, 12);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto out = generate(g, s);
    const auto d = count(out, "d"), b = count(out, "b"), c = count(out, "c");
    CHECK(d >= b);
    CHECK(b >= c);
    try {
      const auto p = generate(pairs, s);
      CHECK(count(p, "b") == count(p, "c"));
      CHECK(count(p, "d") == count(p, "b"));
    } catch (const NonTerminationError&) {
      FAIL("pair grammar with B -> b must terminate");
    }
  }
}

TEST_CASE("empirical rule frequencies follow the configured probabilities") {
  auto g = builtin_grammar("triangle");
  // skew the S group so the test is not just uniformity
  const std::map<std::string, double> p{{"I", 0.3}, {"II", 0.25}, {"IV", 0.1}, {"V", 0.15}, {"VII", 0.05}, {"VIII", 0.15}};
  for (const auto& [id, v] : p) g.find_rule(id)->prob = v;
  REQUIRE(validate(g).empty());
  std::map<std::string, double> hits;
  double total = 0;
  for (std::uint64_t s = 0; s < 10000; ++s)
    for (const auto& st : derivation_trace(g, s).steps)
      if (p.count(st.rule_id)) {
        hits[st.rule_id] += 1;
        total += 1;
      }
  for (const auto& [id, v] : p) {
    const double se = std::sqrt(v * (1 - v) / total);
    CHECK(std::abs(hits[id] / total - v) < 3 * se);
  }
}

TEST_CASE("grammar json round trip") {
  const auto g = apply_noise(builtin_grammar("triangle"), 0.2);
  const auto h = grammar_from_json(nlohmann::json::parse(grammar_to_json(g).dump()));
  REQUIRE(h.rules.size() == g.rules.size());
  for (std::size_t i = 0; i < g.rules.size(); ++i) {
    CHECK(h.rules[i].id == g.rules[i].id);
    CHECK(h.rules[i].lhs == g.rules[i].lhs);
    CHECK(h.rules[i].rhs == g.rules[i].rhs);
    CHECK(h.rules[i].prob == g.rules[i].prob);
  }
  CHECK(h.lcfrs_table.size() == g.lcfrs_table.size());
  CHECK(h.direction_of("c") == Direction::NegL2);
  CHECK_THROWS_AS(grammar_from_json(nlohmann::json{{"rules", 3}}), ConfigError);
  CHECK_THROWS_AS(load_grammar("/no/such/file.json"), ConfigError);
  CHECK(load_grammar("builtin:triangle-srg").find_rule("IV")->prob == 0.0);
}

}

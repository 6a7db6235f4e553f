#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "gi/errors.hpp"
#include "gi/lcfrs.hpp"
#include "gi/metaparse.hpp"
#include "oracles.hpp"

using namespace gi;

namespace {

std::set<std::string> roman(int from, int to) {
  static const char* names[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"};
  std::set<std::string> out;
  for (int i = from; i <= to; ++i) out.insert(names[i - 1]);
  return out;
}

Grammar restricted(int from, int to) { return restrict_rules(builtin_grammar("triangle"), roman(from, to)); }

std::vector<std::string> chars(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::map<std::string, int> multiset(const ParseTree& t) {
  std::map<std::string, int> m;
  for (const auto& l : t.rule_labels()) ++m[l];
  return m;
}

MultiTargetFrame frame(const std::vector<Eigen::Vector2d>& velocities) {
  MultiTargetFrame f;
  for (const auto& v : velocities) {
    TrackEstimate e;
    e.mean = Eigen::Vector4d(0, 0, v.x(), v.y());
    e.covariance = Eigen::Matrix4d::Identity();
    f.push_back(e);
  }
  return f;
}

// random positive probabilities, normalised per group
Grammar randomised(Grammar g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (const auto& [key, idx] : g.groups()) {
    double s = 0;
    for (auto i : idx)
      if (g.rules[i].prob > 0) s += (g.rules[i].prob = u(rng));
    for (auto i : idx) g.rules[i].prob /= s > 0 ? s : 1;
  }
  return g;
}

}  // namespace

TEST_SUITE("metaparse") {

TEST_CASE("encode the hierarchical example") {
  const Eigen::Vector2d l1(1, 0), l4 = direction_vector(Direction::L4), m2 = direction_vector(Direction::NegL2),
                        z(0, 0);
  std::vector<MultiTargetFrame> frames;
  for (int k = 0; k < 9; ++k) {
    const Eigen::Vector2d v1 = k < 3 ? l1 : z;
    const Eigen::Vector2d v2 = k < 3 ? l1 : k < 6 ? l4 : z;
    const Eigen::Vector2d v3 = k < 3 ? l1 : k < 6 ? l4 : m2;
    frames.push_back(frame({v1, v2, v3}));
  }
  const auto seqs = encode(frames);
  REQUIRE(seqs.size() == 3);
  CHECK(to_string(seqs[0]) == "l1 l1 l1 0 0 0 0 0 0");
  CHECK(to_string(seqs[1]) == "l1 l1 l1 l4 l4 l4 0 0 0");
  CHECK(to_string(seqs[2]) == "l1 l1 l1 l4 l4 l4 -l2 -l2 -l2");
  CHECK(to_string(merge_tracks(seqs)) == "l1 l1 l1 l4 l4 l4 -l2 -l2 -l2");

  // permuting targets permutes the sequences only
  std::vector<MultiTargetFrame> swapped = frames;
  for (auto& f : swapped) std::swap(f[0], f[2]);
  const auto s2 = encode(swapped);
  CHECK(s2[0] == seqs[2]);
  CHECK(s2[2] == seqs[0]);

  CHECK_THROWS_AS(encode({}), ConfigError);
  const auto still = encode({frame({z}), frame({z})});
  CHECK(to_string(still[0]) == "0 0");
}

TEST_CASE("merge goldens") {
  auto m = [](std::vector<std::string> seqs) {
    std::vector<SymbolString> in;
    for (const auto& s : seqs) in.push_back(parse_symbol_string(s));
    return to_string(merge_tracks(in));
  };
  CHECK(m({"l1 l1 l1 0 0 0 0 0 0", "l1 l1 l1 l4 l4 l4 0 0 0", "l1 l1 l1 l4 l4 l4 -l2 -l2 -l2"}) ==
        "l1 l1 l1 l4 l4 l4 -l2 -l2 -l2");
  CHECK(m({"l1 l1 l1 l4 l4 l4", "l2 l2 l2 -l4 -l4 -l4"}) == "l1 l1 l1 l2 l2 l2 l4 l4 l4");
  CHECK(m({"l1 l2 l1 -l4 l4 l4", "l2 l1 l2 l4 -l4 -l4"}) == "l1 l1 l1 l2 l2 l2 l4 l4 l4");
  CHECK(m({"0 0 0"}).empty());
  CHECK(m({"l3 -l3 l3"}) == "l3 l3 l3");
}

TEST_CASE("merge ignores target order") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<SymbolString> seqs(2 + t % 3);
    for (auto& s : seqs) {
      const auto len = 1 + rng() % 8;
      for (std::size_t k = 0; k < len; ++k) s.push_back(kAllDirections[rng() % 9]);
    }
    const auto a = merge_tracks(seqs);
    std::shuffle(seqs.begin(), seqs.end(), rng);
    CHECK(merge_tracks(seqs) == a);
  }
}

TEST_CASE("terminal mapping") {
  const auto g = builtin_grammar("triangle");
  const auto s = parse_symbol_string("l1 l1 l4 -l2");
  CHECK(to_terminals(s, g) == chars("ddbc"));
  CHECK(to_directions(chars("ddbc"), g) == s);
  CHECK_THROWS_AS(to_terminals(parse_symbol_string("l3"), g), NoParseError);
  CHECK_THROWS_AS(parse_symbol_string("l9"), ConfigError);
}

TEST_CASE("rule text parsing") {
  const auto r = lcfrs::parse_rule("P(d x, y z) <- OpenB(x, y) Cb(z)");
  CHECK(r.lhs == "P");
  REQUIRE(r.components.size() == 2);
  CHECK(r.components[0][0].terminal == "d");
  CHECK(r.components[0][1].child == 0);
  CHECK(r.components[1][1].child == 1);
  CHECK(r.rhs == std::vector<std::string>{"OpenB", "Cb"});
  const auto leaf = lcfrs::parse_rule("B(b)");
  CHECK(leaf.rhs.empty());
}

TEST_CASE("single d under the regular rules") {
  auto g = restricted(1, 3);
  const auto t = parse(chars("d"), g);
  CHECK(t.rule_labels() == std::vector<std::string>{"II", "III"});
  CHECK(t.yield() == chars("d"));
  CHECK(t.nodes.size() == 3);
  CHECK(t.log_prob == doctest::Approx(std::log(0.5)));
}

TEST_CASE("triangle goldens") {
  {
    const auto t = parse(chars("ddbb"), restricted(3, 6));
    CHECK(t.yield() == chars("ddbb"));
    CHECK(multiset(t) == std::map<std::string, int>{{"IV", 1}, {"V", 1}, {"VI", 2}});
  }
  {
    const auto t = parse(chars("ddbbcc"), restricted(6, 12));
    CHECK(t.yield() == chars("ddbbcc"));
    CHECK(multiset(t) == std::map<std::string, int>{
                             {"VII", 1}, {"VIII", 1}, {"IX", 1}, {"VI", 1}, {"X", 1}, {"XI", 1}, {"XII", 1}});
    // one node per rule application plus one per leaf
    CHECK(t.nodes.size() == 13);
    for (const auto& n : t.nodes) CHECK(n.spans.size() <= 2);
  }
  {
    const auto t = parse(chars("dddbbbcc"), restricted(4, 12));
    CHECK(t.yield() == chars("dddbbbcc"));
  }
  CHECK_THROWS_AS(parse(chars("cab"), builtin_grammar("triangle")), NoParseError);
  CHECK_THROWS_AS(parse(chars("dbd"), builtin_grammar("triangle")), NoParseError);
  CHECK_THROWS_AS(parse(chars("ddbbcc"), restricted(1, 6)), NoParseError);
}

TEST_CASE("derivation table strings") {
  struct Row {
    const char* s;
    int from, to;
  };
  // ddbbcc needs VI as well, see the dead end test in the grammar suite
  for (const Row& r : {Row{"dd", 1, 3}, Row{"ddd", 1, 3}, Row{"ddddd", 1, 3}, Row{"ddbb", 3, 6}, Row{"dddbbb", 3, 6},
                       Row{"dddddbbb", 1, 6}, Row{"ddbbcc", 6, 12}, Row{"dddbbbcc", 4, 12}, Row{"dddddbbbcc", 1, 12}}) {
    CAPTURE(r.s);
    CHECK(parse(chars(r.s), restricted(r.from, r.to)).yield() == chars(r.s));
  }
}

TEST_CASE("parse tree agrees with the derivation that produced the string") {
  const auto g = builtin_grammar("triangle");
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto d = derivation_trace(g, s);
    if (d.string.size() > 12) continue;
    const auto p = parse(d.string, g);
    const auto h = derivation_tree(g, d);
    CHECK(p.yield() == d.string);
    CHECK(h.yield() == d.string);
    CHECK(p.log_prob >= h.log_prob - 1e-9);
  }
}

TEST_CASE("Viterbi probability equals the exhaustive optimum") {
  std::mt19937_64 rng(12);
  for (const std::string name : {"triangle-srg", "triangle-scfg", "triangle"}) {
    for (int rep = 0; rep < 3; ++rep) {
      const auto g = randomised(builtin_grammar(name), rng);
      std::set<std::vector<std::string>> strings;
      for (std::uint64_t s = 0; s < 400 && strings.size() < 25; ++s) {
        const auto out = generate(g, s);
        if (out.size() <= 6) strings.insert(out);
      }
      for (const auto& str : strings) {
        const double best = oracle::DerivationSearch(g, str).best();
        REQUIRE(best > 0);
        const auto t = parse(str, g);
        CHECK(t.log_prob == doctest::Approx(std::log(best)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("round trip on the built in grammars") {
  for (const auto& name : builtin_grammar_names()) {
    const auto g = builtin_grammar(name);
    const auto sys = lcfrs::compile(g);
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto str = generate(g, s);
      CHECK(parse(str, sys).yield() == str);
    }
  }
}

TEST_CASE("ties go to the smaller label sequence") {
  // S -> A | B, both emitting a with equal probability
  Grammar g;
  g.nonterminals = {"S", "A", "B"};
  g.terminals = {"a"};
  g.start = "S";
  g.rules = {{"r2", {"S"}, {"B"}, 0.5}, {"r1", {"S"}, {"A"}, 0.5}, {"r3", {"A"}, {"a"}, 1}, {"r4", {"B"}, {"a"}, 1}};
  for (int k = 0; k < 3; ++k) CHECK(parse({"a"}, g).rule_labels() == std::vector<std::string>{"r1", "r3"});
}

TEST_CASE("context free compilation handles long rules and noise") {
  Grammar g;
  g.nonterminals = {"S", "A"};
  g.terminals = {"a", "b"};
  g.start = "S";
  g.rules = {{"long", {"S"}, {"a", "A", "b", "A", "a"}, 1}, {"leaf", {"A"}, {"b"}, 1}};
  const auto t = parse(chars("abbba"), g);
  CHECK(t.rule_labels() == std::vector<std::string>{"long", "leaf", "leaf"});
  const auto noisy = apply_noise(g, 0.2);
  const auto u = parse(chars("aabaa"), noisy);
  CHECK(u.yield() == chars("aabaa"));
  CHECK(u.log_prob == doctest::Approx(std::log(0.8 * 0.2 * 0.5 * 0.2 * 0.5)));
}

TEST_CASE("unsupported conversions and limits") {
  auto g = apply_noise(builtin_grammar("triangle"), 0.1);
  CHECK_THROWS_AS(lcfrs::compile(g), UnsupportedGrammarError);
  auto h = builtin_grammar("triangle");
  h.lcfrs_table.clear();
  CHECK_THROWS_AS(lcfrs::compile(h), UnsupportedGrammarError);
  CHECK_THROWS_AS(parse(std::vector<std::string>(200, "d"), restricted(1, 3), {200}), ConfigError);
  CHECK_THROWS_AS(parse(std::vector<std::string>(80, "d"), restricted(1, 3)), ConfigError);
}

TEST_CASE("chart growth stays polynomial") {
  const auto g = builtin_grammar("triangle");
  const auto n8 = chart_items(chars("ddddbbbc"), g);
  const auto n16 = chart_items(chars("ddddddddbbbbbccc"), g);
  CHECK(n16 <= 64 * n8);
}

TEST_CASE("derivation trees") {
  const auto g = builtin_grammar("triangle");
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto d = derivation_trace(g, s);
    const auto t = derivation_tree(g, d);
    CHECK(t.yield() == d.string);
    CHECK(t.rule_labels().size() == d.steps.size());
    CHECK(t.edges.size() + 1 == t.nodes.size());
  }
}

TEST_CASE("feature graphs") {
  ParseTree chain;
  chain.nodes = {{0, "S", {}, false}, {1, "X", {}, false}, {2, "a", {{0, 1}}, true}};
  chain.edges = {{0, 1}, {1, 2}};
  const auto g = tree_to_graph(chain);
  CHECK(g.n_nodes() == 3);
  CHECK(g.n_edges() == 2);
  CHECK(g.dim() == 16);
  CHECK(g.neighbors[0].size() == 1);
  CHECK(g.neighbors[1].size() == 2);
  CHECK(g.neighbors[2].size() == 1);
  CHECK(g.features(0, 0) == 1);
  CHECK(g.features(0, 1) == 0);
  CHECK(g.features(2, 1) == 1);
  CHECK(g.features.col(2).isZero());
  CHECK(g.features(0, 3) == 0);
  CHECK(g.features(2, 3) == 2);
  for (int i = 0; i < 3; ++i) CHECK(g.features.row(i).tail(12).sum() == 1.0);

  const auto t = parse(chars("ddbbcc"), restricted(6, 12));
  const auto h = tree_to_graph(t, {8, {}});
  CHECK(h.dim() == 8);
  CHECK(h.features.col(2).isZero());
  const auto back = graph_from_json(graph_to_json(h));
  CHECK(back.features == h.features);
  CHECK(back.edges == h.edges);

  // triangle has clustering one everywhere
  const auto tri = make_graph(Eigen::MatrixXd::Zero(3, 4), {{0, 1}, {1, 2}, {2, 0}, {1, 0}});
  CHECK(tri.n_edges() == 3);
  CHECK(clustering_coefficients(tri).isApprox(Eigen::Vector3d::Ones()));
  CHECK_THROWS_AS(make_graph(Eigen::MatrixXd::Zero(2, 4), {{1, 1}}), ConfigError);
}

}

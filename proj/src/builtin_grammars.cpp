#include "gi/grammar.hpp"

#include "gi/errors.hpp"

namespace gi {

namespace {

ProductionRule rule(std::string id, std::string lhs, std::string rhs) {
  return {std::move(id), split_symbols(lhs), split_symbols(rhs), 0.0};
}

// Fan-out-2 rewriting of the triangle grammar. The trailing region after
// the d-prefix is read as a left-to-right list of units, one per push rule:
//   U   a lone B (IV),  P  a B ... C pair (VII) whose window holds the
//   complete units a C must be swapped across (one XI per b in the window).
// The d-prefix of each unit is its own d plus the d-prefix of its window.
// BF is the first trailing B, the only one that can follow a d (IX).
std::vector<LcfrsRuleSpec> triangle_table() {
  std::vector<LcfrsRuleSpec> t;
  auto add = [&](std::string r, std::string label = {}, std::vector<std::string> w = {},
                 std::optional<LcfrsRuleSpec::Scale> s = std::nullopt) {
    t.push_back({std::move(r), std::move(label), std::move(w), std::move(s)});
  };
  const LcfrsRuleSpec::Scale swaps{"XI", 0, 0};

  add("B(b)", "VI", {"VI"});
  add("BF(b)", "VI", {"VI"});
  add("BF(b)", "IX", {"IX"});
  add("Cb(c)", "X", {"X"});
  add("Cc(c)", "XII", {"XII"});

  add("U(d, y) <- B(y)", "IV", {"IV"});
  add("UF_D(d, y) <- BF(y)", "IV", {"IV"});
  add("UF_V(d, y) <- BF(y)", "V", {"V"});

  for (const std::string b : {"B", "BF"}) {
    const std::string sfx = b == "B" ? "" : "F";
    add("OpenB" + sfx + "(x, y1 y2) <- " + b + "(y1) Wb(x, y2)");
    add("OpenC" + sfx + "(x, y1 y2) <- " + b + "(y1) Wc(x, y2)");
  }
  struct PairKind {
    std::string name, open_sfx, b, rule;
  };
  for (const auto& k : {PairKind{"P", "", "B", "VII"}, PairKind{"PF_D", "F", "BF", "VII"},
                        PairKind{"PF_V", "F", "BF", "VIII"}}) {
    add(k.name + "(d x, y z) <- OpenB" + k.open_sfx + "(x, y) Cb(z)", k.rule, {k.rule}, swaps);
    add(k.name + "(d x, y z) <- OpenC" + k.open_sfx + "(x, y) Cc(z)", k.rule, {k.rule}, swaps);
    add(k.name + "(d, y z) <- " + k.b + "(y) Cb(z)", k.rule, {k.rule});
  }

  add("Wb(x, y) <- U(x, y)");
  add("Wc(x, y) <- P(x, y)");
  for (const std::string w : {"Wb", "Wc"}) {
    add("Wb(x1 x2, y1 y2) <- " + w + "(x1, y1) U(x2, y2)");
    add("Wc(x1 x2, y1 y2) <- " + w + "(x1, y1) P(x2, y2)");
  }

  for (const std::string v : {"D", "V"}) {
    const std::string l = "L" + v;
    add(l + "(x, y) <- UF_" + v + "(x, y)");
    add(l + "(x, y) <- PF_" + v + "(x, y)");
    add(l + "(x1 x2, y1 y2) <- " + l + "(x1, y1) U(x2, y2)");
    add(l + "(x1 x2, y1 y2) <- " + l + "(x1, y1) P(x2, y2)");
  }

  add("E(d)", "I", {"I"});
  add("E(d x) <- E(x)", "I", {"I"});
  add("DD(x) <- D3(x)", "II", {"II"});
  add("D3(d)", "III", {"III"});
  add("H_D(x) <- DD(x)");
  add("H_D(x1 x2) <- E(x1) DD(x2)");

  add("ROOT(x) <- H_D(x)");
  add("ROOT(x1 x2 y) <- H_D(x1) LD(x2, y)");
  add("ROOT(x y) <- LV(x, y)");
  add("ROOT(x1 x2 y) <- E(x1) LV(x2, y)");
  return t;
}

Grammar triangle() {
  Grammar g;
  g.nonterminals = {"S", "D", "B", "C"};
  g.terminals = {"d", "b", "c"};
  g.start = "S";
  g.rules = {
      rule("I", "S", "d S"),        rule("II", "S", "D"),        rule("III", "D", "d"),
      rule("IV", "S", "d S B"),     rule("V", "S", "d B"),       rule("VI", "B", "b"),
      rule("VII", "S", "d S B C"),  rule("VIII", "S", "d B C"),  rule("IX", "d B", "d b"),
      rule("X", "b C", "b c"),      rule("XI", "C B", "B C"),    rule("XII", "c C", "c c"),
  };
  for (const auto& [key, idx] : g.groups())
    for (auto i : idx) g.rules[i].prob = 1.0 / static_cast<double>(idx.size());
  g.directions = {{"d", Direction::L1}, {"b", Direction::L4}, {"c", Direction::NegL2}};
  g.lcfrs_table = triangle_table();
  return g;
}

std::set<std::string> roman_range(int from, int to) {
  static const char* names[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"};
  std::set<std::string> out;
  for (int i = from; i <= to; ++i) out.insert(names[i - 1]);
  return out;
}

}  // namespace

std::vector<std::string> builtin_grammar_names() { return {"triangle", "triangle-srg", "triangle-scfg", "triangle-scsg"}; }

Grammar builtin_grammar(const std::string& name) {
  if (name == "triangle" || name == "triangle-scsg") return triangle();
  if (name == "triangle-srg") return restrict_rules(triangle(), roman_range(1, 3));
  if (name == "triangle-scfg") return restrict_rules(triangle(), roman_range(1, 6));
  throw ConfigError("unknown built-in grammar '" + name + "'");
}

}  // namespace gi

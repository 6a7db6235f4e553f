#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gi/direction.hpp"

namespace gi {

/// Reserved name of the noise symbol. It behaves like a terminal that is
/// realized as a uniformly random terminal of the grammar.
inline constexpr const char* kNoiseSymbol = "<eps>";

enum class SymbolKind { Terminal, Nonterminal, Noise };

struct ProductionRule {
  std::string id;
  std::vector<std::string> lhs;
  std::vector<std::string> rhs;
  double prob = 0.0;

  bool is_noise() const { return rhs.size() == 1 && rhs.front() == kNoiseSymbol; }
};

/// One entry of a hand-written LCFRS conversion table, e.g.
///   rule:   "P(d x, y z) <- OpenB(x, y) Cb(z)"
///   label:  "VII"     (empty: structural node, spliced out of parse trees)
///   weight: {"VII"}   (grammar rule ids whose probabilities multiply)
///   scale:  optional {rule id, child, component}: multiplies
///           P(rule)^len(child.component), for rules applied once per symbol
///           inside a child span.
struct LcfrsRuleSpec {
  struct Scale {
    std::string rule;
    int child = 0;
    int component = 0;
  };
  std::string rule;
  std::string label;
  std::vector<std::string> weight;
  std::optional<Scale> scale;
};

enum class GrammarClass { SRG, SCFG, SCSG };

std::string to_string(GrammarClass c);

/// G = (nonterminals, terminals, rules, probabilities) with a start symbol.
/// Rules sharing an identical left-hand side sequence form one
/// normalization group.
struct Grammar {
  std::vector<std::string> nonterminals;
  std::vector<std::string> terminals;
  std::string start;
  std::vector<ProductionRule> rules;
  /// Optional mapping terminal -> velocity symbol; terminals that are
  /// themselves direction names map to themselves.
  std::map<std::string, Direction> directions;
  /// Optional LCFRS table used to parse context-sensitive rule sets.
  std::vector<LcfrsRuleSpec> lcfrs_table;

  SymbolKind kind_of(const std::string& symbol) const;
  bool is_terminal(const std::string& s) const;
  bool is_nonterminal(const std::string& s) const;
  const ProductionRule* find_rule(const std::string& id) const;
  ProductionRule* find_rule(const std::string& id);

  /// Rule indices per LHS group, keyed by the space-joined LHS.
  std::map<std::string, std::vector<std::size_t>> groups() const;
  bool has_noise_rules() const;

  /// Velocity symbol for a terminal, if known.
  std::optional<Direction> direction_of(const std::string& terminal) const;
};

std::string lhs_key(const std::vector<std::string>& lhs);

/// Invariant check. Empty iff the grammar is well formed. An LHS group may
/// carry total mass 0 (disabled) or 1; anything else is reported.
std::vector<std::string> validate(const Grammar& g);

/// Class of the positive-probability rule set. Regular means right-linear
/// (A -> t* B? with a single nonterminal LHS).
GrammarClass classify(const Grammar& g);

/// Adds LHS -> <eps> with probability q to every group of positive mass and
/// scales the original rules by (1 - q). Disabled groups get a zero-mass
/// noise rule.
Grammar apply_noise(const Grammar& g, double q);

/// Sets the probability of every rule not in `active` to 0 and renormalizes
/// each group over its surviving rules.
Grammar restrict_rules(const Grammar& g, const std::set<std::string>& active);

struct DerivationStep {
  std::string rule_id;
  std::size_t position = 0;
  /// Surface terminal drawn for a noise rule application.
  std::optional<std::string> noise_terminal;
};

struct Derivation {
  std::vector<std::string> string;
  std::vector<DerivationStep> steps;
};

inline constexpr std::size_t kDefaultMaxSteps = 10000;

/// Samples a terminal string. Each step picks uniformly among the positions
/// of the sentential form where some positive-probability rule's LHS
/// matches, then a rule among those matching there with probability
/// proportional to P(rule).
std::vector<std::string> generate(const Grammar& g, std::uint64_t seed, std::size_t max_steps = kDefaultMaxSteps);

/// Same sampling as generate(), also recording every application.
Derivation derivation_trace(const Grammar& g, std::uint64_t seed, std::size_t max_steps = kDefaultMaxSteps);

/// Deterministically replays recorded steps from the start symbol.
std::vector<std::string> replay(const Grammar& g, const std::vector<DerivationStep>& steps);

std::string join_symbols(const std::vector<std::string>& symbols, const std::string& sep = " ");
std::vector<std::string> split_symbols(const std::string& text);

nlohmann::json grammar_to_json(const Grammar& g);
Grammar grammar_from_json(const nlohmann::json& j);
Grammar load_grammar(const std::string& path_or_builtin);

/// Built-in grammars: "triangle" (all twelve rules of the triangle grammar,
/// uniform per group), "triangle-srg" (rules I-III), "triangle-scfg" (rules I-VI),
/// "triangle-scsg" (same as triangle).
Grammar builtin_grammar(const std::string& name);
std::vector<std::string> builtin_grammar_names();

}  // namespace gi

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gi/grammar.hpp"

namespace gi::lcfrs {

/// Half-open interval of input positions.
struct Span {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// One piece of an LHS component: a child variable or an inline terminal.
struct Piece {
  int child = -1;      // >= 0 for a variable
  int component = 0;   // component of that child
  std::string terminal;
  bool is_var() const { return child >= 0; }
};

struct Rule {
  std::string lhs;
  std::vector<std::vector<Piece>> components;
  std::vector<std::string> rhs;
  double log_weight = 0.0;
  /// Empty label: structural node, spliced out of the returned tree.
  std::string label;
  struct Scale {
    double log_weight;
    int child;
    int component;
    std::string label;  // one childless node per application in the tree
  };
  std::optional<Scale> scale;
};

/// Parses "P(d x, y z) <- OpenB(x, y) Cb(z)". Arguments of the RHS are
/// variables; every other LHS token is a terminal.
Rule parse_rule(const std::string& text);

struct System {
  std::vector<Rule> rules;
  std::string root;
  std::vector<std::string> terminals;
};

inline constexpr int kMaxFanOut = 2;

/// Conversion of a grammar whose positive-probability rules are all context
/// free: right-binarized, noise rules become one wildcard rule per terminal.
System compile_context_free(const Grammar& g);

/// Conversion through the grammar's hand-written table.
System compile_table(const Grammar& g);

/// Picks compile_context_free when possible, the table otherwise. Throws
/// UnsupportedGrammarError when neither applies.
System compile(const Grammar& g);

struct Node {
  std::string label;
  std::vector<Span> spans;
  std::vector<std::size_t> children;
  bool leaf = false;
};

struct Result {
  /// nodes[0] is the root.
  std::vector<Node> nodes;
  double log_prob = 0.0;
  std::size_t chart_items = 0;
};

inline constexpr std::size_t kDefaultMaxLength = 64;

/// Viterbi parse. Ties on probability go to the lexicographically smallest
/// preorder sequence of node labels. Throws NoParseError.
Result parse(const System& sys, const std::vector<std::string>& input, std::size_t max_length = kDefaultMaxLength);

}  // namespace gi::lcfrs

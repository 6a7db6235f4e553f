#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gi/direction.hpp"
#include "gi/grammar.hpp"
#include "gi/kinematics.hpp"
#include "gi/lcfrs.hpp"

namespace gi {

using SymbolString = std::vector<Direction>;

/// Quantizes every target's velocity estimate; element j of each frame is
/// read as target j of that frame.
std::vector<SymbolString> encode(const std::vector<MultiTargetFrame>& frames, double zero_threshold = 0.25);

/// Merges per-target sequences into one string. At each timestep the
/// motion families present across targets are collected (so overlapping
/// shared segments count once and 0 is dropped); a run is a maximal stretch
/// of timesteps in which a family is present. Each family keeps the sign it
/// had when it first appeared (positive on a simultaneous tie), and runs are
/// emitted by start time, then by family.
SymbolString merge_tracks(const std::vector<SymbolString>& sequences);

std::string to_string(const SymbolString& s);
SymbolString parse_symbol_string(const std::string& text);

/// Grammar terminals realizing each direction; throws NoParseError when a
/// direction has no terminal.
std::vector<std::string> to_terminals(const SymbolString& s, const Grammar& g);
SymbolString to_directions(const std::vector<std::string>& terminals, const Grammar& g);

struct ParseTree {
  struct Node {
    std::size_t id = 0;
    std::string label;
    std::vector<lcfrs::Span> spans;
    bool leaf = false;
  };
  std::vector<Node> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // parent -> child
  std::size_t root = 0;
  double log_prob = 0.0;

  std::vector<std::vector<std::size_t>> children() const;
  /// Leaf labels in reading order.
  std::vector<std::string> yield() const;
  std::vector<std::string> rule_labels() const;
};

nlohmann::json tree_to_json(const ParseTree& t);

struct ParseOptions {
  std::size_t max_length = lcfrs::kDefaultMaxLength;
};

/// Viterbi derivation tree of s under g.
ParseTree parse(const std::vector<std::string>& s, const Grammar& g, const ParseOptions& opt = {});
ParseTree parse(const std::vector<std::string>& s, const lcfrs::System& sys, const ParseOptions& opt = {});

/// Chart size of a parse, for growth checks.
std::size_t chart_items(const std::vector<std::string>& s, const Grammar& g, const ParseOptions& opt = {});

/// Tree of a recorded derivation: one node per rule application, attached
/// under the application that produced the first nonterminal of its LHS;
/// each final terminal is a leaf under the application that wrote it.
ParseTree derivation_tree(const Grammar& g, const Derivation& d);

struct FeatureGraph {
  Eigen::MatrixXd features;                      // n x d
  std::vector<std::pair<int, int>> edges;        // undirected, stored once
  std::vector<std::vector<int>> neighbors;

  int n_nodes() const { return static_cast<int>(features.rows()); }
  int n_edges() const { return static_cast<int>(edges.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

struct FeatureOptions {
  int dim = 16;
  /// Tag slot per label; labels not listed are hashed into the tag slots.
  std::vector<std::string> vocabulary;
};

inline constexpr int kStructuralFeatures = 4;

/// [out-degree, in-degree, clustering, depth, one-hot tag].
FeatureGraph tree_to_graph(const ParseTree& t, const FeatureOptions& opt = {});

FeatureGraph make_graph(Eigen::MatrixXd features, std::vector<std::pair<int, int>> edges);

/// Local clustering coefficient of every node.
Eigen::VectorXd clustering_coefficients(const FeatureGraph& g);

nlohmann::json graph_to_json(const FeatureGraph& g);
FeatureGraph graph_from_json(const nlohmann::json& j);

}  // namespace gi

#include "gi/metaparse.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "gi/errors.hpp"

namespace gi {

std::vector<SymbolString> encode(const std::vector<MultiTargetFrame>& frames, double zero_threshold) {
  if (frames.empty()) throw ConfigError("encode: no frames");
  const std::size_t n = frames.front().size();
  for (const auto& f : frames)
    if (f.size() != n) throw ConfigError("encode: target count changes between frames");
  std::vector<SymbolString> out(n);
  for (const auto& f : frames)
    for (std::size_t j = 0; j < n; ++j) {
      if (f[j].mean.size() != 4) throw ConfigError("encode: estimate mean must be a 4-vector");
      out[j].push_back(quantize_velocity(Eigen::Vector2d(f[j].mean(2), f[j].mean(3)), zero_threshold));
    }
  return out;
}

SymbolString merge_tracks(const std::vector<SymbolString>& sequences) {
  std::size_t horizon = 0;
  for (const auto& s : sequences) horizon = std::max(horizon, s.size());

  struct Run {
    std::size_t start;
    int fam;
    std::size_t length;
  };
  std::array<int, 5> sign{};  // 0 unknown, +1, -1
  std::array<std::optional<std::size_t>, 5> open{};
  std::vector<Run> runs;
  for (std::size_t k = 0; k <= horizon; ++k) {
    std::array<bool, 5> present{};
    std::array<bool, 5> pos{}, neg{};
    if (k < horizon)
      for (const auto& s : sequences) {
        if (k >= s.size()) continue;
        const int f = family(s[k]);
        if (f == 0) continue;
        present[static_cast<std::size_t>(f)] = true;
        (is_negative(s[k]) ? neg : pos)[static_cast<std::size_t>(f)] = true;
      }
    for (int f = 1; f <= 4; ++f) {
      const auto fi = static_cast<std::size_t>(f);
      if (present[fi] && sign[fi] == 0) sign[fi] = pos[fi] ? 1 : -1;
      if (present[fi] && !open[fi]) open[fi] = k;
      if (!present[fi] && open[fi]) {
        runs.push_back({*open[fi], f, k - *open[fi]});
        open[fi].reset();
      }
    }
  }
  std::stable_sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return a.start != b.start ? a.start < b.start : a.fam < b.fam;
  });
  SymbolString out;
  for (const auto& r : runs) {
    Direction d = positive_of_family(r.fam);
    if (sign[static_cast<std::size_t>(r.fam)] < 0) d = negate(d);
    out.insert(out.end(), r.length, d);
  }
  return out;
}

std::string to_string(const SymbolString& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += to_string(s[i]);
  }
  return out;
}

SymbolString parse_symbol_string(const std::string& text) {
  SymbolString out;
  for (const auto& tok : split_symbols(text)) {
    auto d = parse_direction(tok);
    if (!d) throw ConfigError("unknown velocity symbol '" + tok + "'");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::string> to_terminals(const SymbolString& s, const Grammar& g) {
  std::map<Direction, std::string> inverse;
  for (const auto& t : g.terminals)
    if (auto d = g.direction_of(t)) inverse.emplace(*d, t);
  std::vector<std::string> out;
  for (Direction d : s) {
    auto it = inverse.find(d);
    if (it == inverse.end())
      throw NoParseError("velocity symbol " + std::string(to_string(d)) + " has no terminal in the grammar");
    out.push_back(it->second);
  }
  return out;
}

SymbolString to_directions(const std::vector<std::string>& terminals, const Grammar& g) {
  SymbolString out;
  for (const auto& t : terminals) {
    auto d = g.direction_of(t);
    if (!d) throw ConfigError("terminal '" + t + "' has no velocity symbol");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::vector<std::size_t>> ParseTree::children() const {
  std::vector<std::vector<std::size_t>> ch(nodes.size());
  for (const auto& [p, c] : edges) ch[p].push_back(c);
  return ch;
}

std::vector<std::string> ParseTree::yield() const {
  std::vector<const Node*> leaves;
  for (const auto& n : nodes)
    if (n.leaf) leaves.push_back(&n);
  std::stable_sort(leaves.begin(), leaves.end(),
                   [](const Node* a, const Node* b) { return a->spans.front().begin < b->spans.front().begin; });
  std::vector<std::string> out;
  for (const auto* n : leaves) out.push_back(n->label);
  return out;
}

std::vector<std::string> ParseTree::rule_labels() const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (!n.leaf) out.push_back(n.label);
  return out;
}

nlohmann::json tree_to_json(const ParseTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : n.spans) spans.push_back({s.begin, s.end});
    nodes.push_back({{"id", n.id}, {"label", n.label}, {"spans", spans}, {"leaf", n.leaf}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [p, c] : t.edges) edges.push_back({p, c});
  return {{"nodes", nodes}, {"edges", edges}, {"root", t.root}, {"log_prob", t.log_prob}};
}

ParseTree parse(const std::vector<std::string>& s, const lcfrs::System& sys, const ParseOptions& opt) {
  const auto res = lcfrs::parse(sys, s, opt.max_length);
  ParseTree t;
  t.log_prob = res.log_prob;
  for (std::size_t i = 0; i < res.nodes.size(); ++i) {
    t.nodes.push_back({i, res.nodes[i].label, res.nodes[i].spans, res.nodes[i].leaf});
    for (auto c : res.nodes[i].children) t.edges.emplace_back(i, c);
  }
  return t;
}

ParseTree parse(const std::vector<std::string>& s, const Grammar& g, const ParseOptions& opt) {
  return parse(s, lcfrs::compile(g), opt);
}

std::size_t chart_items(const std::vector<std::string>& s, const Grammar& g, const ParseOptions& opt) {
  return lcfrs::parse(lcfrs::compile(g), s, opt.max_length).chart_items;
}

ParseTree derivation_tree(const Grammar& g, const Derivation& d) {
  if (d.steps.empty()) throw GrammarError("derivation_tree: empty derivation");
  struct Sym {
    std::string name;
    long producer;
  };
  std::vector<Sym> form{{g.start, -1}};
  ParseTree t;
  for (const auto& st : d.steps) {
    const ProductionRule* r = g.find_rule(st.rule_id);
    if (!r) throw GrammarError("derivation_tree: unknown rule " + st.rule_id);
    if (st.position + r->lhs.size() > form.size())
      throw GrammarError("derivation_tree: rule " + r->id + " applied past the end of the form");
    long parent = -1;
    bool found = false;
    for (std::size_t k = 0; k < r->lhs.size(); ++k) {
      const auto& sym = form[st.position + k];
      if (sym.name != r->lhs[k]) throw GrammarError("derivation_tree: rule " + r->id + " does not match the form");
      if (!found && g.is_nonterminal(sym.name)) {
        parent = sym.producer;
        found = true;
      }
    }
    const auto id = static_cast<long>(t.nodes.size());
    t.nodes.push_back({t.nodes.size(), r->id, {}, false});
    if (parent >= 0) t.edges.emplace_back(static_cast<std::size_t>(parent), static_cast<std::size_t>(id));
    else if (id != 0) throw GrammarError("derivation_tree: second root at step " + std::to_string(id));
    t.log_prob += std::log(r->prob);
    std::vector<Sym> repl;
    if (r->is_noise()) {
      if (!st.noise_terminal) throw GrammarError("derivation_tree: noise step without surface terminal");
      repl.push_back({*st.noise_terminal, id});
      t.log_prob -= std::log(static_cast<double>(g.terminals.size()));
    } else {
      for (const auto& s : r->rhs) repl.push_back({s, id});
    }
    const auto at = form.begin() + static_cast<std::ptrdiff_t>(st.position);
    form.erase(at, at + static_cast<std::ptrdiff_t>(r->lhs.size()));
    form.insert(form.begin() + static_cast<std::ptrdiff_t>(st.position), repl.begin(), repl.end());
  }
  for (std::size_t i = 0; i < form.size(); ++i) {
    if (g.is_nonterminal(form[i].name)) throw GrammarError("derivation_tree: derivation is incomplete");
    const std::size_t leaf = t.nodes.size();
    t.nodes.push_back({leaf, form[i].name, {lcfrs::Span{static_cast<int>(i), static_cast<int>(i) + 1}}, true});
    t.edges.emplace_back(static_cast<std::size_t>(form[i].producer), leaf);
  }
  return t;
}

FeatureGraph make_graph(Eigen::MatrixXd features, std::vector<std::pair<int, int>> edges) {
  FeatureGraph g;
  g.features = std::move(features);
  g.neighbors.resize(static_cast<std::size_t>(g.features.rows()));
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : edges) {
    if (a == b) throw ConfigError("feature graph: self loops are not stored");
    if (a < 0 || b < 0 || a >= g.n_nodes() || b >= g.n_nodes()) throw ConfigError("feature graph: edge out of range");
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) continue;
    g.edges.emplace_back(a, b);
    g.neighbors[static_cast<std::size_t>(a)].push_back(b);
    g.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  return g;
}

Eigen::VectorXd clustering_coefficients(const FeatureGraph& g) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(g.n_nodes());
  std::vector<std::set<int>> adj(static_cast<std::size_t>(g.n_nodes()));
  for (int i = 0; i < g.n_nodes(); ++i)
    adj[static_cast<std::size_t>(i)].insert(g.neighbors[static_cast<std::size_t>(i)].begin(),
                                            g.neighbors[static_cast<std::size_t>(i)].end());
  for (int i = 0; i < g.n_nodes(); ++i) {
    const auto& nb = g.neighbors[static_cast<std::size_t>(i)];
    const auto k = nb.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b)
        if (adj[static_cast<std::size_t>(nb[a])].count(nb[b])) ++links;
    c(i) = 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return c;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

FeatureGraph tree_to_graph(const ParseTree& t, const FeatureOptions& opt) {
  if (opt.dim < kStructuralFeatures) throw ConfigError("feature dimension must be at least 4");
  const int n = static_cast<int>(t.nodes.size());
  const int tags = opt.dim - kStructuralFeatures;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, opt.dim);
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> kids(static_cast<std::size_t>(n));
  for (const auto& [p, c] : t.edges) {
    x(static_cast<Eigen::Index>(p), 0) += 1.0;
    x(static_cast<Eigen::Index>(c), 1) += 1.0;
    edges.emplace_back(static_cast<int>(p), static_cast<int>(c));
    kids[p].push_back(static_cast<int>(c));
  }
  std::vector<int> depth(static_cast<std::size_t>(n), -1);
  std::queue<int> q;
  depth[t.root] = 0;
  q.push(static_cast<int>(t.root));
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int c : kids[static_cast<std::size_t>(v)])
      if (depth[static_cast<std::size_t>(c)] < 0) {
        depth[static_cast<std::size_t>(c)] = depth[static_cast<std::size_t>(v)] + 1;
        q.push(c);
      }
  }
  for (int i = 0; i < n; ++i) {
    x(i, 3) = std::max(0, depth[static_cast<std::size_t>(i)]);
    if (tags <= 0) continue;
    const auto& label = t.nodes[static_cast<std::size_t>(i)].label;
    auto it = std::find(opt.vocabulary.begin(), opt.vocabulary.end(), label);
    std::size_t slot;
    if (it != opt.vocabulary.end()) slot = static_cast<std::size_t>(it - opt.vocabulary.begin()) % static_cast<std::size_t>(tags);
    else slot = fnv1a(label) % static_cast<std::size_t>(tags);
    x(i, kStructuralFeatures + static_cast<int>(slot)) = 1.0;
  }
  FeatureGraph g = make_graph(std::move(x), std::move(edges));
  g.features.col(2) = clustering_coefficients(g);
  return g;
}

nlohmann::json graph_to_json(const FeatureGraph& g) {
  nlohmann::json feats = nlohmann::json::array();
  for (int i = 0; i < g.n_nodes(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(g.dim()));
    for (int k = 0; k < g.dim(); ++k) row[static_cast<std::size_t>(k)] = g.features(i, k);
    feats.push_back(row);
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  return {{"features", feats}, {"edges", edges}};
}

FeatureGraph graph_from_json(const nlohmann::json& j) {
  try {
    const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
    const auto d = rows.empty() ? 0 : rows.front().size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) throw ConfigError("feature graph: ragged feature rows");
      for (std::size_t k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return make_graph(std::move(x), j.at("edges").get<std::vector<std::pair<int, int>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace gi

#include "gi/lcfrs.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <unordered_map>

#include "gi/errors.hpp"

namespace gi::lcfrs {

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;

  void skip() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool done() {
    skip();
    return pos >= text.size();
  }
  bool accept(char c) {
    skip();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  std::string word() {
    skip();
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) && text[pos] != '(' &&
           text[pos] != ')' && text[pos] != ',')
      ++pos;
    if (start == pos) fail("expected a symbol");
    return text.substr(start, pos - start);
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw UnsupportedGrammarError("rule '" + text + "': " + what + " at offset " + std::to_string(pos));
  }
};

// name(tok tok, tok) -> name and argument token lists
std::pair<std::string, std::vector<std::vector<std::string>>> read_call(Cursor& c) {
  std::string name = c.word();
  c.expect('(');
  std::vector<std::vector<std::string>> args(1);
  while (!c.accept(')')) {
    if (c.accept(',')) {
      args.emplace_back();
      continue;
    }
    args.back().push_back(c.word());
  }
  return {std::move(name), std::move(args)};
}

}  // namespace

Rule parse_rule(const std::string& text) {
  const auto arrow = text.find("<-");
  const std::string lhs_text = text.substr(0, arrow);
  Cursor lc{lhs_text};
  auto [lhs, comps] = read_call(lc);
  if (!lc.done()) lc.fail("trailing input after left-hand side");

  Rule r;
  r.lhs = lhs;
  std::map<std::string, std::pair<int, int>> vars;
  if (arrow != std::string::npos) {
    const std::string rhs_text = text.substr(arrow + 2);
    Cursor rc{rhs_text};
    while (!rc.done()) {
      auto [name, args] = read_call(rc);
      const int child = static_cast<int>(r.rhs.size());
      for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k].size() != 1) rc.fail("child arguments must be single variables");
        if (!vars.emplace(args[k][0], std::pair{child, static_cast<int>(k)}).second)
          rc.fail("variable '" + args[k][0] + "' bound twice");
      }
      r.rhs.push_back(name);
    }
  }
  std::map<std::string, int> uses;
  for (const auto& comp : comps) {
    if (comp.empty()) lc.fail("empty component");
    std::vector<Piece> pieces;
    for (const auto& tok : comp) {
      if (auto it = vars.find(tok); it != vars.end()) {
        pieces.push_back({it->second.first, it->second.second, {}});
        ++uses[tok];
      } else {
        pieces.push_back({-1, 0, tok});
      }
    }
    r.components.push_back(std::move(pieces));
  }
  for (const auto& [v, where] : vars)
    if (uses[v] != 1) lc.fail("variable '" + v + "' must appear exactly once on the left");
  return r;
}

namespace {

void check_shapes(const System& sys) {
  std::map<std::string, std::size_t> fan;
  for (const auto& r : sys.rules) {
    if (r.components.size() > static_cast<std::size_t>(kMaxFanOut))
      throw UnsupportedGrammarError("nonterminal " + r.lhs + " needs fan-out " + std::to_string(r.components.size()) +
                                    " > " + std::to_string(kMaxFanOut));
    if (r.rhs.size() > 2) throw UnsupportedGrammarError("rule for " + r.lhs + " has more than two children");
    auto [it, fresh] = fan.emplace(r.lhs, r.components.size());
    if (!fresh && it->second != r.components.size())
      throw UnsupportedGrammarError("nonterminal " + r.lhs + " used with inconsistent fan-out");
  }
  for (const auto& r : sys.rules) {
    std::vector<std::vector<bool>> seen(r.rhs.size());
    for (std::size_t k = 0; k < r.rhs.size(); ++k) {
      auto it = fan.find(r.rhs[k]);
      if (it == fan.end()) continue;  // never derivable; the rule simply never fires
      seen[k].assign(it->second, false);
    }
    for (const auto& comp : r.components)
      for (const auto& p : comp)
        if (p.is_var()) {
          auto& s = seen[static_cast<std::size_t>(p.child)];
          if (s.empty()) continue;
          if (p.component >= static_cast<int>(s.size()))
            throw UnsupportedGrammarError("rule for " + r.lhs + " uses a component that " + r.rhs[p.child] + " lacks");
          s[static_cast<std::size_t>(p.component)] = true;
        }
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (std::find(seen[k].begin(), seen[k].end(), false) != seen[k].end())
        throw UnsupportedGrammarError("rule for " + r.lhs + " drops a component of " + r.rhs[k]);
  }
}

bool is_context_free_rule(const Grammar& g, const ProductionRule& r) {
  return r.lhs.size() == 1 && g.is_nonterminal(r.lhs[0]);
}

}  // namespace

System compile_context_free(const Grammar& g) {
  System sys;
  sys.root = g.start;
  sys.terminals = g.terminals;
  for (const auto& pr : g.rules) {
    if (pr.prob <= 0.0) continue;
    if (!is_context_free_rule(g, pr))
      throw UnsupportedGrammarError("rule " + pr.id + " is not context free");
    const std::string& a = pr.lhs[0];
    if (pr.is_noise()) {
      const double lw = std::log(pr.prob / static_cast<double>(g.terminals.size()));
      for (const auto& t : g.terminals) sys.rules.push_back({a, {{{-1, 0, t}}}, {}, lw, pr.id, std::nullopt});
      continue;
    }
    // rhs = T0 N1 T1 ... Nk Tk
    std::vector<std::vector<std::string>> terms(1);
    std::vector<std::string> nts;
    for (const auto& s : pr.rhs) {
      if (g.is_nonterminal(s)) {
        nts.push_back(s);
        terms.emplace_back();
      } else {
        terms.back().push_back(s);
      }
    }
    const auto k = nts.size();
    auto comp = [](std::initializer_list<std::pair<int, const std::vector<std::string>*>> parts) {
      std::vector<Piece> out;
      for (const auto& [child, ts] : parts) {
        if (ts)
          for (const auto& t : *ts) out.push_back({-1, 0, t});
        else
          out.push_back({child, 0, {}});
      }
      return out;
    };
    const double lw = std::log(pr.prob);
    if (k == 0) {
      sys.rules.push_back({a, {comp({{0, &terms[0]}})}, {}, lw, pr.id, std::nullopt});
    } else if (k == 1) {
      sys.rules.push_back({a, {comp({{0, &terms[0]}, {0, nullptr}, {0, &terms[1]}})}, {nts[0]}, lw, pr.id, std::nullopt});
    } else if (k == 2) {
      sys.rules.push_back({a,
                           {comp({{0, &terms[0]}, {0, nullptr}, {0, &terms[1]}, {1, nullptr}, {0, &terms[2]}})},
                           {nts[0], nts[1]},
                           lw,
                           pr.id,
                           std::nullopt});
    } else {
      auto hidden = [&](std::size_t i) { return "@" + pr.id + "#" + std::to_string(i); };
      sys.rules.push_back(
          {a, {comp({{0, &terms[0]}, {0, nullptr}, {1, nullptr}})}, {nts[0], hidden(1)}, lw, pr.id, std::nullopt});
      for (std::size_t i = 1; i + 2 < k; ++i)
        sys.rules.push_back({hidden(i),
                             {comp({{0, &terms[i]}, {0, nullptr}, {1, nullptr}})},
                             {nts[i], hidden(i + 1)},
                             0.0,
                             {},
                             std::nullopt});
      sys.rules.push_back({hidden(k - 2),
                           {comp({{0, &terms[k - 2]}, {0, nullptr}, {0, &terms[k - 1]}, {1, nullptr}, {0, &terms[k]}})},
                           {nts[k - 2], nts[k - 1]},
                           0.0,
                           {},
                           std::nullopt});
    }
  }
  check_shapes(sys);
  return sys;
}

System compile_table(const Grammar& g) {
  if (g.lcfrs_table.empty()) throw UnsupportedGrammarError("grammar has no LCFRS conversion table");
  for (const auto& r : g.rules)
    if (r.is_noise() && r.prob > 0.0)
      throw UnsupportedGrammarError("noise rule " + r.id + " cannot be parsed through the conversion table");
  auto prob_of = [&](const std::string& id) {
    const ProductionRule* r = g.find_rule(id);
    if (!r) throw UnsupportedGrammarError("conversion table references unknown rule " + id);
    return r->prob;
  };
  System sys;
  sys.root = "ROOT";
  sys.terminals = g.terminals;
  for (const auto& spec : g.lcfrs_table) {
    Rule r = parse_rule(spec.rule);
    r.label = spec.label;
    bool dead = false;
    for (const auto& id : spec.weight) {
      const double p = prob_of(id);
      if (p <= 0.0) dead = true;
      else r.log_weight += std::log(p);
    }
    if (spec.scale) {
      const double p = prob_of(spec.scale->rule);
      if (p <= 0.0) dead = true;
      else r.scale = Rule::Scale{std::log(p), spec.scale->child, spec.scale->component, spec.scale->rule};
    }
    if (!dead) sys.rules.push_back(std::move(r));
  }
  check_shapes(sys);
  return sys;
}

System compile(const Grammar& g) {
  const bool cf = std::all_of(g.rules.begin(), g.rules.end(),
                              [&](const ProductionRule& r) { return r.prob <= 0.0 || is_context_free_rule(g, r); });
  if (cf) return compile_context_free(g);
  if (!g.lcfrs_table.empty()) return compile_table(g);
  throw UnsupportedGrammarError("context-sensitive grammar without an LCFRS conversion table");
}

namespace {

struct CPiece {
  int child;
  int component;
  int terminal;  // -2 never matches
};

struct CRule {
  int lhs;
  std::vector<std::vector<CPiece>> comps;
  std::vector<int> rhs;
  double log_weight;
  int label;  // rank in sorted label order, -1 hidden
  std::optional<Rule::Scale> scale;
  int n_terminals = 0;
  // Adjacency between the two children inside one component:
  // var(first, first_comp) <gap terminals> var(second, second_comp)
  bool adjacent = false;
  int first = 0, first_comp = 0, second_comp = 0, gap = 0;
};

struct Item {
  int nt;
  Span s[2];
  int fan;
  int len;
  double score;
  int rule;
  int child[2];
};

struct Top {
  int minpos;
  std::vector<int> seq;
};

class Chart {
 public:
  Chart(const System& sys, const std::vector<std::string>& input) : sys_(sys) {
    std::map<std::string, int> term_id;
    for (const auto& t : sys.terminals) term_id.emplace(t, static_cast<int>(term_id.size()));
    for (const auto& s : input) {
      auto it = term_id.find(s);
      if (it == term_id.end()) throw NoParseError("symbol '" + s + "' is not a terminal of the grammar");
      tokens_.push_back(it->second);
    }
    n_ = static_cast<int>(tokens_.size());

    std::vector<std::string> labels;
    for (const auto& r : sys.rules)
      if (!r.label.empty()) labels.push_back(r.label);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    labels_ = labels;

    auto nt = [&](const std::string& name) {
      auto [it, fresh] = nt_id_.emplace(name, static_cast<int>(nt_names_.size()));
      if (fresh) nt_names_.push_back(name);
      return it->second;
    };
    for (const auto& r : sys.rules) {
      CRule c;
      c.lhs = nt(r.lhs);
      for (const auto& s : r.rhs) c.rhs.push_back(nt(s));
      c.log_weight = r.log_weight;
      c.label = r.label.empty()
                    ? -1
                    : static_cast<int>(std::lower_bound(labels_.begin(), labels_.end(), r.label) - labels_.begin());
      c.scale = r.scale;
      for (const auto& comp : r.components) {
        std::vector<CPiece> pieces;
        for (const auto& p : comp) {
          int t = -1;
          if (!p.is_var()) {
            auto it = term_id.find(p.terminal);
            t = it == term_id.end() ? -2 : it->second;
            ++c.n_terminals;
          }
          pieces.push_back({p.child, p.component, t});
        }
        c.comps.push_back(std::move(pieces));
      }
      if (c.rhs.size() == 2) find_adjacency(c);
      rules_.push_back(std::move(c));
    }
    root_ = nt(sys.root);
    const auto slots = nt_names_.size() * kMaxFanOut * static_cast<std::size_t>(n_ + 1);
    by_begin_.resize(slots);
    by_end_.resize(slots);
    by_nt_.resize(nt_names_.size());
    as_child_.resize(nt_names_.size());
    for (std::size_t r = 0; r < rules_.size(); ++r)
      for (std::size_t k = 0; k < rules_[r].rhs.size(); ++k)
        as_child_[static_cast<std::size_t>(rules_[r].rhs[k])].push_back({static_cast<int>(r), static_cast<int>(k)});
    buckets_.resize(static_cast<std::size_t>(n_ + 1));
  }

  Result run() {
    for (std::size_t r = 0; r < rules_.size(); ++r)
      if (rules_[r].rhs.empty()) apply(static_cast<int>(r), {-1, -1});

    for (int len = 1; len <= n_; ++len) {
      auto& bucket = buckets_[static_cast<std::size_t>(len)];
      relax_unary(len);
      for (std::size_t i = 0; i < bucket.size(); ++i) {
        const int x = bucket[i];
        combine(x);
        index(x);
      }
    }

    const std::uint64_t goal = key(root_, {Span{0, n_}, Span{-1, -1}}, 1);
    auto it = item_id_.find(goal);
    if (n_ == 0 || it == item_id_.end()) throw NoParseError("string is not in the language of the grammar");
    Result res;
    res.log_prob = items_[static_cast<std::size_t>(it->second)].score;
    res.chart_items = items_.size();
    build_tree(it->second, res);
    return res;
  }

 private:
  struct Use {
    int rule;
    int slot;
  };

  static std::uint64_t key(int nt, const std::array<Span, 2>& s, int fan) {
    auto enc = [](int v) { return static_cast<std::uint64_t>(v < 0 ? 127 : v); };
    std::uint64_t k = static_cast<std::uint64_t>(nt);
    k = (k << 7) | enc(s[0].begin);
    k = (k << 7) | enc(s[0].end);
    k = (k << 7) | enc(fan > 1 ? s[1].begin : -1);
    k = (k << 7) | enc(fan > 1 ? s[1].end : -1);
    return k;
  }

  std::size_t slot(int nt, int comp, int pos) const {
    return (static_cast<std::size_t>(nt) * kMaxFanOut + static_cast<std::size_t>(comp)) * static_cast<std::size_t>(n_ + 1) +
           static_cast<std::size_t>(pos);
  }

  static void find_adjacency(CRule& c) {
    for (const auto& comp : c.comps)
      for (std::size_t k = 0; k < comp.size(); ++k) {
        if (comp[k].child < 0) continue;
        int gap = 0;
        std::size_t j = k + 1;
        while (j < comp.size() && comp[j].child < 0) {
          ++gap;
          ++j;
        }
        if (j < comp.size() && comp[j].child != comp[k].child) {
          c.adjacent = true;
          c.first = comp[k].child;
          c.first_comp = comp[k].component;
          c.second_comp = comp[j].component;
          c.gap = gap;
          return;
        }
      }
  }

  void index(int x) {
    const Item& it = items_[static_cast<std::size_t>(x)];
    for (int c = 0; c < it.fan; ++c) {
      by_begin_[slot(it.nt, c, it.s[c].begin)].push_back(x);
      by_end_[slot(it.nt, c, it.s[c].end)].push_back(x);
    }
    by_nt_[static_cast<std::size_t>(it.nt)].push_back(x);
  }

  void relax_unary(int len) {
    auto& bucket = buckets_[static_cast<std::size_t>(len)];
    std::deque<int> work(bucket.begin(), bucket.end());
    std::vector<int> pushes;
    const std::size_t cap = 4 * (rules_.size() + 4);
    while (!work.empty()) {
      const int x = work.front();
      work.pop_front();
      if (pushes.size() <= static_cast<std::size_t>(x)) pushes.resize(static_cast<std::size_t>(x) + 1, 0);
      if (static_cast<std::size_t>(++pushes[static_cast<std::size_t>(x)]) > cap) continue;
      for (const auto& u : as_child_[static_cast<std::size_t>(items_[static_cast<std::size_t>(x)].nt)]) {
        const CRule& r = rules_[static_cast<std::size_t>(u.rule)];
        if (r.rhs.size() != 1 || r.n_terminals != 0) continue;
        for (int y : apply(u.rule, {x, -1}))
          if (items_[static_cast<std::size_t>(y)].len == len) work.push_back(y);
      }
    }
  }

  void combine(int x) {
    const Item& it = items_[static_cast<std::size_t>(x)];
    for (const auto& u : as_child_[static_cast<std::size_t>(it.nt)]) {
      const CRule& r = rules_[static_cast<std::size_t>(u.rule)];
      if (r.rhs.size() == 1) {
        if (r.n_terminals > 0) apply(u.rule, {x, -1});
        continue;
      }
      const int other = 1 - u.slot;
      const int other_nt = r.rhs[static_cast<std::size_t>(other)];
      auto try_pair = [&](int y) {
        if (y == x) return;
        std::array<int, 2> ch{};
        ch[static_cast<std::size_t>(u.slot)] = x;
        ch[static_cast<std::size_t>(other)] = y;
        apply(u.rule, ch);
      };
      if (r.adjacent) {
        const Item& xi = items_[static_cast<std::size_t>(x)];
        if (u.slot == r.first) {
          const int pos = xi.s[r.first_comp].end + r.gap;
          if (pos > n_) continue;
          for (int y : by_begin_[slot(other_nt, r.second_comp, pos)]) try_pair(y);
        } else {
          const int pos = xi.s[r.second_comp].begin - r.gap;
          if (pos < 0) continue;
          for (int y : by_end_[slot(other_nt, r.first_comp, pos)]) try_pair(y);
        }
      } else {
        for (int y : by_nt_[static_cast<std::size_t>(other_nt)]) try_pair(y);
      }
    }
  }

  // Instantiates rule r over the given children; returns the touched items.
  std::vector<int> apply(int ri, std::array<int, 2> ch) {
    const CRule& r = rules_[static_cast<std::size_t>(ri)];
    const int fan = static_cast<int>(r.comps.size());
    std::array<Span, 2> out{Span{-1, -1}, Span{-1, -1}};
    std::vector<int> free_comps;
    auto child_span = [&](const CPiece& p) {
      return items_[static_cast<std::size_t>(ch[static_cast<std::size_t>(p.child)])].s[p.component];
    };
    for (int c = 0; c < fan; ++c) {
      const auto& comp = r.comps[static_cast<std::size_t>(c)];
      std::size_t k = 0;
      while (k < comp.size() && comp[k].child < 0) ++k;
      if (k == comp.size()) {
        free_comps.push_back(c);
        continue;
      }
      int pos = child_span(comp[k]).begin - static_cast<int>(k);
      if (pos < 0) return {};
      const int begin = pos;
      for (const auto& p : comp) {
        if (p.child < 0) {
          if (pos >= n_ || tokens_[static_cast<std::size_t>(pos)] != p.terminal) return {};
          ++pos;
        } else {
          const Span s = child_span(p);
          if (s.begin != pos) return {};
          pos = s.end;
        }
      }
      out[static_cast<std::size_t>(c)] = {begin, pos};
    }
    double score = r.log_weight;
    int len = r.n_terminals;
    for (std::size_t k = 0; k < r.rhs.size(); ++k) {
      const Item& c = items_[static_cast<std::size_t>(ch[k])];
      score += c.score;
      len += c.len;
    }
    if (r.scale) {
      const Item& c = items_[static_cast<std::size_t>(ch[static_cast<std::size_t>(r.scale->child)])];
      score += r.scale->log_weight * c.s[r.scale->component].size();
    }
    std::vector<int> touched;
    enumerate_free(r, ri, ch, out, free_comps, 0, fan, len, score, touched);
    return touched;
  }

  void enumerate_free(const CRule& r, int ri, const std::array<int, 2>& ch, std::array<Span, 2>& out,
                      const std::vector<int>& free_comps, std::size_t f, int fan, int len, double score,
                      std::vector<int>& touched) {
    if (f == free_comps.size()) {
      if (fan == 2 && out[0].begin < out[1].end && out[1].begin < out[0].end) return;
      if (int y = propose(r, ri, ch, out, fan, len, score); y >= 0) touched.push_back(y);
      return;
    }
    const int c = free_comps[f];
    const auto& comp = r.comps[static_cast<std::size_t>(c)];
    const int w = static_cast<int>(comp.size());
    for (int b = 0; b + w <= n_; ++b) {
      bool ok = true;
      for (int k = 0; k < w && ok; ++k) ok = tokens_[static_cast<std::size_t>(b + k)] == comp[static_cast<std::size_t>(k)].terminal;
      if (!ok) continue;
      out[static_cast<std::size_t>(c)] = {b, b + w};
      enumerate_free(r, ri, ch, out, free_comps, f + 1, fan, len, score, touched);
    }
    out[static_cast<std::size_t>(c)] = {-1, -1};
  }

  // Returns the item index if it was created or improved, -1 otherwise.
  int propose(const CRule& r, int ri, const std::array<int, 2>& ch, const std::array<Span, 2>& spans, int fan,
              int len, double score) {
    const std::uint64_t k = key(r.lhs, spans, fan);
    auto [it, fresh] = item_id_.emplace(k, static_cast<int>(items_.size()));
    if (fresh) {
      Item item{r.lhs, {spans[0], spans[1]}, fan, len, score, ri, {ch[0], ch[1]}};
      items_.push_back(item);
      buckets_[static_cast<std::size_t>(len)].push_back(it->second);
      return it->second;
    }
    Item& cur = items_[static_cast<std::size_t>(it->second)];
    const double tol = 1e-12 * (1.0 + std::abs(cur.score));
    if (score > cur.score + tol || (std::abs(score - cur.score) <= tol && prefer(ri, ch, cur))) {
      cur.score = std::max(score, cur.score);
      cur.rule = ri;
      cur.child[0] = ch[0];
      cur.child[1] = ch[1];
      if (static_cast<std::size_t>(it->second) < memo_.size()) memo_[static_cast<std::size_t>(it->second)].reset();
      return it->second;
    }
    return -1;
  }

  // Tie-break: does the candidate derivation have a smaller label preorder?
  bool prefer(int ri, const std::array<int, 2>& ch, const Item& cur) {
    if (ri == cur.rule && ch[0] == cur.child[0] && ch[1] == cur.child[1]) return false;
    Item cand = cur;
    cand.rule = ri;
    cand.child[0] = ch[0];
    cand.child[1] = ch[1];
    return flatten(tops_of(cand)) < flatten(tops_of(cur));
  }

  static int minpos(const Item& it) { return it.fan > 1 ? std::min(it.s[0].begin, it.s[1].begin) : it.s[0].begin; }

  static std::vector<int> flatten(std::vector<Top> tops) {
    std::stable_sort(tops.begin(), tops.end(), [](const Top& a, const Top& b) { return a.minpos < b.minpos; });
    std::vector<int> out;
    for (const auto& t : tops) out.insert(out.end(), t.seq.begin(), t.seq.end());
    return out;
  }

  std::vector<Top> tops_of(const Item& it) {
    const CRule& r = rules_[static_cast<std::size_t>(it.rule)];
    std::vector<Top> kids;
    for (std::size_t k = 0; k < r.rhs.size(); ++k) {
      const auto& sub = memo_tops(it.child[k]);
      kids.insert(kids.end(), sub.begin(), sub.end());
    }
    if (r.label < 0) return kids;
    Top t{minpos(it), {r.label}};
    const auto rest = flatten(std::move(kids));
    t.seq.insert(t.seq.end(), rest.begin(), rest.end());
    return {t};
  }

  const std::vector<Top>& memo_tops(int x) {
    if (memo_.size() <= static_cast<std::size_t>(x)) memo_.resize(static_cast<std::size_t>(x) + 1);
    auto& m = memo_[static_cast<std::size_t>(x)];
    if (!m) m = tops_of(items_[static_cast<std::size_t>(x)]);
    return *m;
  }

  // Appends the visible nodes and leaves under item x to `out` (as indices
  // into res.nodes); hidden items are spliced.
  void emit(int x, Result& res, std::vector<std::size_t>& out) {
    const Item& it = items_[static_cast<std::size_t>(x)];
    const CRule& r = rules_[static_cast<std::size_t>(it.rule)];
    std::vector<std::size_t> kids;
    for (std::size_t k = 0; k < r.rhs.size(); ++k) emit(it.child[k], res, kids);
    for (std::size_t c = 0; c < r.comps.size(); ++c) {
      int pos = it.s[c].begin;
      for (const auto& p : r.comps[c]) {
        if (p.child >= 0) {
          pos = items_[static_cast<std::size_t>(it.child[p.child])].s[p.component].end;
          continue;
        }
        Node leaf;
        leaf.label = sys_.terminals[static_cast<std::size_t>(p.terminal)];
        leaf.spans = {Span{pos, pos + 1}};
        leaf.leaf = true;
        res.nodes.push_back(std::move(leaf));
        kids.push_back(res.nodes.size() - 1);
        ++pos;
      }
    }
    if (r.label < 0) {
      out.insert(out.end(), kids.begin(), kids.end());
      return;
    }
    if (r.scale && !r.scale->label.empty()) {
      const int reps = items_[static_cast<std::size_t>(it.child[static_cast<std::size_t>(r.scale->child)])]
                           .s[r.scale->component]
                           .size();
      for (int k = 0; k < reps; ++k) {
        Node swap;
        swap.label = r.scale->label;
        res.nodes.push_back(std::move(swap));
        kids.push_back(res.nodes.size() - 1);
      }
    }
    Node node;
    node.label = labels_[static_cast<std::size_t>(r.label)];
    for (int c = 0; c < it.fan; ++c) node.spans.push_back(it.s[c]);
    node.children = sort_by_position(res, std::move(kids));
    res.nodes.push_back(std::move(node));
    out.push_back(res.nodes.size() - 1);
  }

  static std::vector<std::size_t> sort_by_position(const Result& res, std::vector<std::size_t> v) {
    auto first = [&](std::size_t i) {
      int m = std::numeric_limits<int>::max();
      for (const auto& s : res.nodes[i].spans) m = std::min(m, s.begin);
      return m;
    };
    std::stable_sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return first(a) < first(b); });
    return v;
  }

  void build_tree(int root_item, Result& res) {
    res.nodes.clear();
    std::vector<std::size_t> top;
    emit(root_item, res, top);
    std::size_t root;
    if (top.size() == 1 && !res.nodes[top[0]].leaf) {
      root = top[0];
    } else {
      Node node;
      node.label = sys_.root;
      node.spans = {Span{0, n_}};
      node.children = sort_by_position(res, top);
      res.nodes.push_back(std::move(node));
      root = res.nodes.size() - 1;
    }
    // Renumber so the root comes first, children after their parent (preorder).
    std::vector<Node> ordered;
    std::vector<std::size_t> stack{root};
    std::vector<std::size_t> new_id(res.nodes.size());
    std::vector<std::size_t> order;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      new_id[v] = order.size();
      order.push_back(v);
      const auto& ch = res.nodes[v].children;
      for (auto c = ch.rbegin(); c != ch.rend(); ++c) stack.push_back(*c);
    }
    for (std::size_t v : order) {
      Node n = res.nodes[v];
      for (auto& c : n.children) c = new_id[c];
      ordered.push_back(std::move(n));
    }
    res.nodes = std::move(ordered);
  }

  const System& sys_;
  std::vector<int> tokens_;
  int n_ = 0;
  std::vector<std::string> labels_;
  std::map<std::string, int> nt_id_;
  std::vector<std::string> nt_names_;
  std::vector<CRule> rules_;
  int root_ = 0;
  std::vector<Item> items_;
  std::unordered_map<std::uint64_t, int> item_id_;
  std::vector<std::vector<int>> buckets_;
  std::vector<std::vector<int>> by_begin_, by_end_, by_nt_;
  std::vector<std::vector<Use>> as_child_;
  std::vector<std::optional<std::vector<Top>>> memo_;
};

}  // namespace

Result parse(const System& sys, const std::vector<std::string>& input, std::size_t max_length) {
  if (max_length > 126) throw ConfigError("parser length bound cannot exceed 126 symbols");
  if (input.size() > max_length)
    throw ConfigError("string of length " + std::to_string(input.size()) + " exceeds the parser bound " +
                      std::to_string(max_length));
  if (input.empty()) throw NoParseError("cannot parse the empty string");
  return Chart(sys, input).run();
}

}  // namespace gi::lcfrs

#include "gi/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "gi/errors.hpp"

namespace gi {

std::string to_string(GrammarClass c) {
  switch (c) {
    case GrammarClass::SRG: return "SRG";
    case GrammarClass::SCFG: return "SCFG";
    case GrammarClass::SCSG: return "SCSG";
  }
  return "?";
}

std::string lhs_key(const std::vector<std::string>& lhs) { return join_symbols(lhs); }

std::string join_symbols(const std::vector<std::string>& symbols, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i) out += sep;
    out += symbols[i];
  }
  return out;
}

std::vector<std::string> split_symbols(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

bool Grammar::is_terminal(const std::string& s) const {
  return std::find(terminals.begin(), terminals.end(), s) != terminals.end();
}

bool Grammar::is_nonterminal(const std::string& s) const {
  return std::find(nonterminals.begin(), nonterminals.end(), s) != nonterminals.end();
}

SymbolKind Grammar::kind_of(const std::string& symbol) const {
  if (symbol == kNoiseSymbol) return SymbolKind::Noise;
  if (is_nonterminal(symbol)) return SymbolKind::Nonterminal;
  return SymbolKind::Terminal;
}

const ProductionRule* Grammar::find_rule(const std::string& id) const {
  for (const auto& r : rules)
    if (r.id == id) return &r;
  return nullptr;
}

ProductionRule* Grammar::find_rule(const std::string& id) {
  for (auto& r : rules)
    if (r.id == id) return &r;
  return nullptr;
}

std::map<std::string, std::vector<std::size_t>> Grammar::groups() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < rules.size(); ++i) out[lhs_key(rules[i].lhs)].push_back(i);
  return out;
}

bool Grammar::has_noise_rules() const {
  return std::any_of(rules.begin(), rules.end(), [](const ProductionRule& r) { return r.is_noise(); });
}

std::optional<Direction> Grammar::direction_of(const std::string& terminal) const {
  if (auto it = directions.find(terminal); it != directions.end()) return it->second;
  return parse_direction(terminal);
}

std::vector<std::string> validate(const Grammar& g) {
  std::vector<std::string> v;
  std::set<std::string> seen_nt(g.nonterminals.begin(), g.nonterminals.end());
  for (const auto& t : g.terminals) {
    if (seen_nt.count(t)) v.push_back("symbol '" + t + "' is both terminal and nonterminal");
    if (t == kNoiseSymbol) v.push_back("noise symbol listed as terminal");
  }
  if (g.terminals.empty()) v.push_back("grammar has no terminals");
  if (!g.is_nonterminal(g.start)) v.push_back("start symbol '" + g.start + "' is not a nonterminal");

  std::set<std::string> ids;
  for (const auto& r : g.rules) {
    const std::string where = "rule " + r.id;
    if (!ids.insert(r.id).second) v.push_back(where + ": duplicate rule id");
    if (r.lhs.empty()) v.push_back(where + ": empty left-hand side");
    if (r.rhs.empty()) v.push_back(where + ": empty right-hand side");
    bool has_nt = false;
    for (const auto& s : r.lhs) {
      if (g.is_nonterminal(s)) has_nt = true;
      else if (!g.is_terminal(s)) v.push_back(where + ": unknown symbol '" + s + "' in lhs");
    }
    if (!r.lhs.empty() && !has_nt) v.push_back(where + ": lhs contains no nonterminal");
    for (const auto& s : r.rhs) {
      if (s == kNoiseSymbol) {
        if (r.rhs.size() != 1) v.push_back(where + ": noise symbol must be the whole rhs");
      } else if (!g.is_nonterminal(s) && !g.is_terminal(s)) {
        v.push_back(where + ": unknown symbol '" + s + "' in rhs");
      }
    }
    if (!std::isfinite(r.prob) || r.prob < 0.0 || r.prob > 1.0)
      v.push_back(where + ": probability " + std::to_string(r.prob) + " outside [0,1]");
  }

  for (const auto& [key, idx] : g.groups()) {
    double sum = 0.0;
    for (auto i : idx) sum += g.rules[i].prob;
    if (std::abs(sum) > 1e-9 && std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream os;
      os.precision(12);
      os << "group '" << key << "': probabilities sum to " << sum;
      v.push_back(os.str());
    }
  }

  const bool start_live = std::any_of(g.rules.begin(), g.rules.end(), [&](const ProductionRule& r) {
    return r.lhs.size() == 1 && r.lhs[0] == g.start && r.prob > 0;
  });
  if (!start_live) v.push_back("start symbol '" + g.start + "' has no positive-probability rule");
  return v;
}

GrammarClass classify(const Grammar& g) {
  bool regular = true;
  bool context_free = true;
  for (const auto& r : g.rules) {
    if (r.prob <= 0.0) continue;
    const bool single_nt_lhs = r.lhs.size() == 1 && g.is_nonterminal(r.lhs[0]);
    if (!single_nt_lhs) {
      context_free = false;
      regular = false;
      continue;
    }
    // Right-linear: terminals (or the noise symbol) followed by at most one
    // trailing nonterminal.
    for (std::size_t i = 0; i < r.rhs.size(); ++i) {
      const bool nt = g.is_nonterminal(r.rhs[i]);
      if (nt && i + 1 != r.rhs.size()) regular = false;
    }
  }
  if (regular) return GrammarClass::SRG;
  if (context_free) return GrammarClass::SCFG;
  return GrammarClass::SCSG;
}

Grammar apply_noise(const Grammar& g, double q) {
  if (!(q >= 0.0 && q < 1.0)) throw ConfigError("apply_noise: q must lie in [0, 1)");
  if (g.has_noise_rules()) throw ConfigError("apply_noise: grammar already carries noise rules");
  Grammar out = g;
  for (const auto& [key, idx] : g.groups()) {
    double mass = 0.0;
    for (auto i : idx) mass += g.rules[i].prob;
    const bool live = mass > 0.0;
    for (auto i : idx) out.rules[i].prob = g.rules[i].prob * (1.0 - q);
    ProductionRule noise;
    noise.id = "eps[" + key + "]";
    noise.lhs = g.rules[idx.front()].lhs;
    noise.rhs = {kNoiseSymbol};
    noise.prob = live ? q : 0.0;
    out.rules.push_back(std::move(noise));
  }
  return out;
}

Grammar restrict_rules(const Grammar& g, const std::set<std::string>& active) {
  Grammar out = g;
  for (auto& r : out.rules)
    if (!active.count(r.id)) r.prob = 0.0;
  for (const auto& [key, idx] : out.groups()) {
    double mass = 0.0;
    for (auto i : idx) mass += out.rules[i].prob;
    if (mass <= 0.0) continue;
    for (auto i : idx) out.rules[i].prob /= mass;
  }
  return out;
}

namespace {

struct Interned {
  std::unordered_map<std::string, int> id;
  std::vector<std::string> name;
  std::vector<bool> nonterminal;

  int get(const std::string& s, bool nt) {
    auto [it, fresh] = id.emplace(s, static_cast<int>(name.size()));
    if (fresh) {
      name.push_back(s);
      nonterminal.push_back(nt);
    }
    return it->second;
  }
};

struct CompiledRule {
  std::size_t index;
  std::vector<int> lhs;
  std::vector<int> rhs;
  double prob;
  bool noise;
};

class Sampler {
 public:
  explicit Sampler(const Grammar& g) : g_(g) {
    if (auto v = validate(g); !v.empty()) throw ConfigError("invalid grammar: " + v.front());
    for (const auto& nt : g.nonterminals) sym_.get(nt, true);
    for (const auto& t : g.terminals) terminals_.push_back(sym_.get(t, false));
    for (std::size_t i = 0; i < g.rules.size(); ++i) {
      const auto& r = g.rules[i];
      CompiledRule c{i, {}, {}, r.prob, r.is_noise()};
      for (const auto& s : r.lhs) c.lhs.push_back(sym_.get(s, g.is_nonterminal(s)));
      if (!c.noise)
        for (const auto& s : r.rhs) c.rhs.push_back(sym_.get(s, g.is_nonterminal(s)));
      if (c.prob > 0.0) live_.push_back(std::move(c));
    }
    start_ = sym_.get(g.start, true);
  }

  Derivation run(std::uint64_t seed, std::size_t max_steps) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> form{start_};
    Derivation d;
    std::vector<std::size_t> positions;
    std::vector<const CompiledRule*> matching;
    while (has_nonterminal(form)) {
      if (d.steps.size() >= max_steps)
        throw NonTerminationError("derivation exceeded " + std::to_string(max_steps) + " steps", render(form));
      positions.clear();
      for (std::size_t p = 0; p < form.size(); ++p)
        for (const auto& r : live_)
          if (matches(form, p, r)) {
            positions.push_back(p);
            break;
          }
      if (positions.empty())
        throw NonTerminationError("derivation reached a form where no rule applies", render(form));
      std::uniform_int_distribution<std::size_t> pick(0, positions.size() - 1);
      const std::size_t p = positions[pick(rng)];
      matching.clear();
      double total = 0.0;
      for (const auto& r : live_)
        if (matches(form, p, r)) {
          matching.push_back(&r);
          total += r.prob;
        }
      double x = unit(rng) * total;
      const CompiledRule* chosen = matching.back();
      for (const auto* r : matching) {
        if (x < r->prob) {
          chosen = r;
          break;
        }
        x -= r->prob;
      }
      DerivationStep step{g_.rules[chosen->index].id, p, std::nullopt};
      std::vector<int> repl = chosen->rhs;
      if (chosen->noise) {
        std::uniform_int_distribution<std::size_t> t(0, terminals_.size() - 1);
        const int term = terminals_[t(rng)];
        repl = {term};
        step.noise_terminal = sym_.name[term];
      }
      form.erase(form.begin() + static_cast<std::ptrdiff_t>(p),
                 form.begin() + static_cast<std::ptrdiff_t>(p + chosen->lhs.size()));
      form.insert(form.begin() + static_cast<std::ptrdiff_t>(p), repl.begin(), repl.end());
      d.steps.push_back(std::move(step));
    }
    for (int s : form) d.string.push_back(sym_.name[s]);
    return d;
  }

 private:
  bool has_nonterminal(const std::vector<int>& form) const {
    return std::any_of(form.begin(), form.end(), [&](int s) { return sym_.nonterminal[s]; });
  }

  static bool matches(const std::vector<int>& form, std::size_t p, const CompiledRule& r) {
    if (p + r.lhs.size() > form.size()) return false;
    return std::equal(r.lhs.begin(), r.lhs.end(), form.begin() + static_cast<std::ptrdiff_t>(p));
  }

  std::string render(const std::vector<int>& form) const {
    std::vector<std::string> names;
    for (int s : form) names.push_back(sym_.name[s]);
    return join_symbols(names);
  }

  const Grammar& g_;
  Interned sym_;
  std::vector<int> terminals_;
  std::vector<CompiledRule> live_;
  int start_ = 0;
};

}  // namespace

Derivation derivation_trace(const Grammar& g, std::uint64_t seed, std::size_t max_steps) {
  if (max_steps == 0) throw ConfigError("max_steps must be positive");
  return Sampler(g).run(seed, max_steps);
}

std::vector<std::string> generate(const Grammar& g, std::uint64_t seed, std::size_t max_steps) {
  return derivation_trace(g, seed, max_steps).string;
}

std::vector<std::string> replay(const Grammar& g, const std::vector<DerivationStep>& steps) {
  std::vector<std::string> form{g.start};
  for (const auto& st : steps) {
    const ProductionRule* r = g.find_rule(st.rule_id);
    if (!r) throw GrammarError("replay: unknown rule " + st.rule_id);
    if (st.position + r->lhs.size() > form.size() ||
        !std::equal(r->lhs.begin(), r->lhs.end(), form.begin() + static_cast<std::ptrdiff_t>(st.position)))
      throw GrammarError("replay: rule " + st.rule_id + " does not match at position " +
                         std::to_string(st.position));
    std::vector<std::string> repl = r->rhs;
    if (r->is_noise()) {
      if (!st.noise_terminal) throw GrammarError("replay: noise step without surface terminal");
      repl = {*st.noise_terminal};
    }
    const auto at = form.begin() + static_cast<std::ptrdiff_t>(st.position);
    form.erase(at, at + static_cast<std::ptrdiff_t>(r->lhs.size()));
    form.insert(form.begin() + static_cast<std::ptrdiff_t>(st.position), repl.begin(), repl.end());
  }
  return form;
}

nlohmann::json grammar_to_json(const Grammar& g) {
  nlohmann::json j;
  j["nonterminals"] = g.nonterminals;
  j["terminals"] = g.terminals;
  j["start"] = g.start;
  j["rules"] = nlohmann::json::array();
  for (const auto& r : g.rules)
    j["rules"].push_back({{"id", r.id}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"prob", r.prob}});
  if (!g.directions.empty()) {
    nlohmann::json d = nlohmann::json::object();
    for (const auto& [t, dir] : g.directions) d[t] = std::string(to_string(dir));
    j["directions"] = d;
  }
  if (!g.lcfrs_table.empty()) {
    j["lcfrs"] = nlohmann::json::array();
    for (const auto& e : g.lcfrs_table) {
      nlohmann::json row{{"rule", e.rule}, {"label", e.label}, {"weight", e.weight}};
      if (e.scale) row["scale"] = {{"rule", e.scale->rule}, {"child", e.scale->child}, {"component", e.scale->component}};
      j["lcfrs"].push_back(row);
    }
  }
  return j;
}

Grammar grammar_from_json(const nlohmann::json& j) {
  try {
    Grammar g;
    g.nonterminals = j.at("nonterminals").get<std::vector<std::string>>();
    g.terminals = j.at("terminals").get<std::vector<std::string>>();
    g.start = j.at("start").get<std::string>();
    for (const auto& r : j.at("rules"))
      g.rules.push_back({r.at("id").get<std::string>(), r.at("lhs").get<std::vector<std::string>>(),
                         r.at("rhs").get<std::vector<std::string>>(), r.at("prob").get<double>()});
    if (j.contains("directions"))
      for (const auto& [t, name] : j.at("directions").items()) {
        auto d = parse_direction(name.get<std::string>());
        if (!d) throw ConfigError("unknown direction '" + name.get<std::string>() + "'");
        g.directions[t] = *d;
      }
    if (j.contains("lcfrs"))
      for (const auto& e : j.at("lcfrs")) {
        LcfrsRuleSpec s;
        s.rule = e.at("rule").get<std::string>();
        s.label = e.value("label", std::string{});
        s.weight = e.value("weight", std::vector<std::string>{});
        if (e.contains("scale"))
          s.scale = LcfrsRuleSpec::Scale{e["scale"].at("rule").get<std::string>(), e["scale"].value("child", 0),
                                         e["scale"].value("component", 0)};
        g.lcfrs_table.push_back(std::move(s));
      }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grammar JSON: ") + e.what());
  }
}

Grammar load_grammar(const std::string& path_or_builtin) {
  constexpr std::string_view prefix = "builtin:";
  if (path_or_builtin.starts_with(prefix)) return builtin_grammar(path_or_builtin.substr(prefix.size()));
  std::ifstream in(path_or_builtin);
  if (!in) throw ConfigError("cannot open grammar file " + path_or_builtin);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("grammar file " + path_or_builtin + ": " + e.what());
  }
  return grammar_from_json(j);
}

}  // namespace gi

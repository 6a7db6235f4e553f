#include "gi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "gi/errors.hpp"

extern char** environ;

namespace gi {

namespace {

SensorSpec sensor_with_trace(int trace, int variant) {
  SensorSpec s;
  s.R = Eigen::MatrixXd::Identity(2, 2);
  if (trace == 0) {
    s.H = Eigen::MatrixXd::Zero(2, 2);
    return s;
  }
  switch (variant % 3) {
    case 0:
      s.H = std::sqrt(trace / 2.0) * Eigen::MatrixXd::Identity(2, 2);
      break;
    case 1:
      s.H = Eigen::MatrixXd::Identity(2, 2);
      s.R = (2.0 / trace) * Eigen::MatrixXd::Identity(2, 2);
      break;
    default:
      s.H = Eigen::MatrixXd::Zero(2, 2);
      s.H(0, 0) = 1.0;
      s.U = trace;
      break;
  }
  return s;
}

RuleAssignment triangle_assignment() {
  RuleAssignment a;
  for (const char* r : {"I", "II", "III"}) a[r] = {0};
  for (const char* r : {"IV", "V", "VI"}) a[r] = {1};
  for (const char* r : {"VII", "VIII", "IX", "X", "XI", "XII"}) a[r] = {2};
  return a;
}

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) r[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw ConfigError("ragged matrix in config");
    for (std::size_t k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  const int traces[10][3] = {{1, 1, 1}, {2, 3, 5}, {5, 3, 2}, {1, 0, 0}, {1, 1, 0},
                             {0, 1, 1}, {4, 1, 1}, {1, 4, 1}, {1, 1, 4}, {3, 0, 2}};
  for (int k = 0; k < 10; ++k) {
    IntentSpec s;
    s.name = std::to_string(traces[k][0]) + "-" + std::to_string(traces[k][1]) + "-" + std::to_string(traces[k][2]);
    for (int j = 0; j < 3; ++j) s.sensors.push_back(sensor_with_trace(traces[k][j], 3 * k + j));
    s.assignment = triangle_assignment();
    c.intents.push_back(std::move(s));
  }
  c.features.vocabulary = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"};
  c.model.feature_dim = c.features.dim;
  c.model.n_players = c.n_players;
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json intents = nlohmann::json::array();
  for (const auto& s : c.intents) {
    nlohmann::json sensors = nlohmann::json::array();
    for (const auto& x : s.sensors) sensors.push_back({{"H", matrix_rows(x.H)}, {"R", matrix_rows(x.R)}, {"U", x.U}});
    nlohmann::json assignment = nlohmann::json::object();
    for (const auto& [r, players] : s.assignment) assignment[r] = players;
    intents.push_back({{"name", s.name}, {"grammar", s.grammar}, {"sensors", sensors}, {"assignment", assignment}});
  }
  return {
      {"n_players", c.n_players},
      {"allocation", c.allocation == AllocationMethod::Nucleolus ? "nucleolus" : "shapley"},
      {"q_grid", c.q_grid},
      {"q", c.q},
      {"train_per_class", c.train_per_class},
      {"test_per_class", c.test_per_class},
      {"eta", c.eta},
      {"seed", c.seed},
      {"graph_source", c.graph_source == GraphSource::Derivation ? "derivation" : "parse"},
      {"max_steps", c.max_steps},
      {"retry_cap", c.retry_cap},
      {"features", {{"dim", c.features.dim}, {"vocabulary", c.features.vocabulary}}},
      {"model", gtnn::config_to_json(c.model)},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"shuffle", c.train.shuffle},
        {"seed", c.train.seed}}},
      {"kinematics",
       {{"dt", c.kinematics.dt},
        {"speed", c.kinematics.speed},
        {"zero_threshold", c.kinematics.zero_threshold},
        {"process_noise", c.kinematics.process_noise},
        {"obs_noise", c.kinematics.obs_noise}}},
      {"intents", intents},
  };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = default_config();
  try {
    c.n_players = j.value("n_players", c.n_players);
    if (j.contains("allocation")) {
      const auto a = j.at("allocation").get<std::string>();
      if (a == "nucleolus") c.allocation = AllocationMethod::Nucleolus;
      else if (a == "shapley") c.allocation = AllocationMethod::Shapley;
      else throw ConfigError("allocation must be 'nucleolus' or 'shapley'");
    }
    c.q_grid = j.value("q_grid", c.q_grid);
    c.q = j.value("q", c.q);
    c.train_per_class = j.value("train_per_class", c.train_per_class);
    c.test_per_class = j.value("test_per_class", c.test_per_class);
    if (j.value("paper_scale", false)) {
      c.train_per_class = kPaperTrainPerClass;
      c.test_per_class = kPaperTestPerClass;
    }
    c.eta = j.value("eta", c.eta);
    c.seed = j.value("seed", c.seed);
    if (j.contains("graph_source")) {
      const auto g = j.at("graph_source").get<std::string>();
      if (g == "derivation") c.graph_source = GraphSource::Derivation;
      else if (g == "parse") c.graph_source = GraphSource::Parse;
      else throw ConfigError("graph_source must be 'derivation' or 'parse'");
    }
    c.max_steps = j.value("max_steps", c.max_steps);
    c.retry_cap = j.value("retry_cap", c.retry_cap);
    if (j.contains("features")) {
      c.features.dim = j["features"].value("dim", c.features.dim);
      c.features.vocabulary = j["features"].value("vocabulary", c.features.vocabulary);
    }
    gtnn::ModelConfig base = c.model;
    base.feature_dim = c.features.dim;
    base.n_players = c.n_players;
    c.model = j.contains("model") ? gtnn::config_from_json(j.at("model"), base) : base;
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.shuffle = t.value("shuffle", c.train.shuffle);
      c.train.seed = t.value("seed", c.train.seed);
    }
    if (j.contains("kinematics")) {
      const auto& k = j.at("kinematics");
      c.kinematics.dt = k.value("dt", c.kinematics.dt);
      c.kinematics.speed = k.value("speed", c.kinematics.speed);
      c.kinematics.zero_threshold = k.value("zero_threshold", c.kinematics.zero_threshold);
      c.kinematics.process_noise = k.value("process_noise", c.kinematics.process_noise);
      c.kinematics.obs_noise = k.value("obs_noise", c.kinematics.obs_noise);
    }
    if (j.contains("intents")) {
      c.intents.clear();
      for (const auto& ij : j.at("intents")) {
        IntentSpec s;
        s.name = ij.value("name", "intent" + std::to_string(c.intents.size()));
        s.grammar = ij.value("grammar", s.grammar);
        for (const auto& sj : ij.at("sensors"))
          s.sensors.push_back({matrix_from_rows(sj.at("H")), matrix_from_rows(sj.at("R")), sj.value("U", 1)});
        for (const auto& [r, players] : ij.at("assignment").items()) s.assignment[r] = players.get<std::vector<int>>();
        c.intents.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  check_config(c);
  return c;
}

void apply_env_overrides(nlohmann::json& j, const std::string& prefix) {
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    const std::string raw = entry.substr(eq + 1);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (key.empty()) continue;
    std::vector<std::string> path;
    for (std::size_t start = 0;;) {
      const auto sep = key.find("__", start);
      path.push_back(key.substr(start, sep - start));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    nlohmann::json value;
    const std::string text = raw.find(',') != std::string::npos && !raw.empty() && raw.front() != '[' ? "[" + raw + "]" : raw;
    value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = raw;
    nlohmann::json* node = &j;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      if (!node->is_object()) throw ConfigError("environment override " + entry.substr(0, eq) + " targets a non-object");
      node = &(*node)[path[k]];
      if (node->is_null()) *node = nlohmann::json::object();
    }
    if (!node->is_object()) throw ConfigError("environment override " + entry.substr(0, eq) + " targets a non-object");
    (*node)[path.back()] = value;
  }
}

ExperimentConfig load_config(const std::string& path, const std::string& prefix) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
  }
  apply_env_overrides(j, prefix);
  return config_from_json(j);
}

void check_config(const ExperimentConfig& c) {
  if (c.n_players < 1 || c.n_players > gtnn::kMaxLossPlayers)
    throw ConfigError("n_players must lie in [1, " + std::to_string(gtnn::kMaxLossPlayers) + "]");
  if (c.intents.empty()) throw ConfigError("config lists no intent classes");
  if (c.train_per_class < 1 || c.test_per_class < 1) throw ConfigError("train/test sizes must be positive");
  if (c.retry_cap < 1 || c.max_steps < 1) throw ConfigError("retry_cap and max_steps must be positive");
  if (!(c.eta > 0.0)) throw ConfigError("eta must be positive");
  auto q_ok = [](double q) { return q >= 0.0 && q < 1.0; };
  if (!q_ok(c.q)) throw ConfigError("q must lie in [0, 1)");
  for (double q : c.q_grid)
    if (!q_ok(q)) throw ConfigError("q grid values must lie in [0, 1)");
  if (c.model.feature_dim != c.features.dim) throw ConfigError("model.feature_dim must equal features.dim");
  if (c.model.n_players != c.n_players) throw ConfigError("model.n_players must equal n_players");
  gtnn::validate(c.model);
  for (const auto& s : c.intents) {
    if (static_cast<int>(s.sensors.size()) != c.n_players)
      throw ConfigError("intent " + s.name + " has " + std::to_string(s.sensors.size()) + " sensors, expected " +
                        std::to_string(c.n_players));
    const Grammar g = load_grammar(s.grammar);
    for (const auto& r : g.rules)
      if (!s.assignment.count(r.id)) throw ConfigError("intent " + s.name + " leaves rule " + r.id + " unassigned");
  }
}

BuiltIntent build_intent(const IntentSpec& spec, AllocationMethod method) {
  BuiltIntent b;
  b.u = fisher_charfn(spec.sensors);
  b.pi = method == AllocationMethod::Nucleolus ? nucleolus(b.u) : shapley(b.u);
  const Grammar g = load_grammar(spec.grammar);
  const auto probs = rule_probabilities(b.pi, spec.assignment, g);
  b.grammar = with_probabilities(g, probs);
  b.unreachable_groups = probs.unreachable_groups;
  if (auto v = validate(b.grammar); !v.empty()) throw ConfigError("intent " + spec.name + ": " + v.front());
  return b;
}

std::uint64_t record_seed(std::uint64_t master, std::uint64_t index) { return splitmix64(master ^ index); }

nlohmann::json record_to_json(const DatasetRecord& r) {
  return {{"split", r.split},
          {"intent", r.intent},
          {"q", r.q},
          {"seed", r.seed},
          {"string", join_symbols(r.string)},
          {"u_scale", r.u_scale},
          {"u", charfn_to_json(r.u)}};
}

DatasetRecord record_from_json(const nlohmann::json& j) {
  try {
    DatasetRecord r;
    r.split = j.value("split", std::string{});
    r.intent = j.at("intent").get<int>();
    r.q = j.at("q").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.string = split_symbols(j.at("string").get<std::string>());
    r.u_scale = j.value("u_scale", 1.0);
    r.u = charfn_from_json(j.at("u"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset record: ") + e.what());
  }
}

namespace {

struct IntentCache {
  const ExperimentConfig& cfg;
  std::map<int, BuiltIntent> built;
  std::map<std::pair<int, double>, Grammar> noisy;

  const BuiltIntent& intent(int k) {
    if (k < 0 || k >= static_cast<int>(cfg.intents.size())) throw ConfigError("record names unknown intent " + std::to_string(k));
    auto it = built.find(k);
    if (it == built.end()) it = built.emplace(k, build_intent(cfg.intents[static_cast<std::size_t>(k)], cfg.allocation)).first;
    return it->second;
  }
  const Grammar& grammar(int k, double q) {
    auto it = noisy.find({k, q});
    if (it == noisy.end()) it = noisy.emplace(std::pair{k, q}, apply_noise(intent(k).grammar, q)).first;
    return it->second;
  }
};

}  // namespace

Dataset generate_dataset(const ExperimentConfig& cfg, double q) {
  check_config(cfg);
  if (!(q >= 0.0 && q < 1.0)) throw ConfigError("q must lie in [0, 1)");
  IntentCache cache{cfg, {}, {}};
  Dataset ds;
  const auto n_classes = static_cast<std::uint64_t>(cfg.intents.size());
  const auto n_train = static_cast<std::uint64_t>(cfg.train_per_class);
  const auto n_test = static_cast<std::uint64_t>(cfg.test_per_class);
  for (int split = 0; split < 2; ++split) {
    const std::uint64_t per = split == 0 ? n_train : n_test;
    const std::uint64_t offset = split == 0 ? 0 : n_classes * n_train;
    for (std::uint64_t k = 0; k < n_classes; ++k) {
      const int intent = static_cast<int>(k);
      const BuiltIntent& b = cache.intent(intent);
      const Grammar& g = cache.grammar(intent, q);
      const double full = b.u(b.u.grand());
      const double scale = full != 0.0 ? full : 1.0;
      for (std::uint64_t i = 0; i < per; ++i) {
        const std::uint64_t base = record_seed(cfg.seed, offset + k * per + i);
        bool done = false;
        for (int attempt = 0; attempt < cfg.retry_cap && !done; ++attempt) {
          const std::uint64_t seed = attempt == 0 ? base : record_seed(base, static_cast<std::uint64_t>(attempt));
          try {
            Derivation d = derivation_trace(g, seed, cfg.max_steps);
            DatasetRecord r;
            r.string = std::move(d.string);
            r.u = CharacteristicFunction(b.u.n_players, b.u.values / scale);
            r.u_scale = scale;
            r.intent = intent;
            r.q = q;
            r.seed = seed;
            r.split = split == 0 ? "train" : "test";
            (split == 0 ? ds.train : ds.test).push_back(std::move(r));
            done = true;
          } catch (const NonTerminationError&) {
          }
        }
        if (!done) ++ds.failures;
      }
    }
  }
  return ds;
}

void write_jsonl(std::ostream& os, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) os << record_to_json(r).dump() << '\n';
}

std::vector<DatasetRecord> read_jsonl(std::istream& is) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError("dataset line " + std::to_string(lineno) + " is not valid JSON");
    out.push_back(record_from_json(j));
    if (!is_modular(out.back().u, 1e-9)) throw ConfigError("dataset line " + std::to_string(lineno) + ": u table is not modular");
  }
  return out;
}

std::vector<gtnn::TrainSample> to_samples(const ExperimentConfig& cfg, const std::vector<DatasetRecord>& records) {
  IntentCache cache{cfg, {}, {}};
  std::vector<gtnn::TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const Grammar& g = cache.grammar(r.intent, r.q);
    std::optional<ParseTree> tree;
    if (cfg.graph_source == GraphSource::Parse) {
      try {
        tree = parse(r.string, cache.intent(r.intent).grammar);
      } catch (const GrammarError&) {
      } catch (const ConfigError&) {
      }
    }
    if (!tree) {
      const Derivation d = derivation_trace(g, r.seed, cfg.max_steps);
      if (d.string != r.string) throw ConfigError("record string does not match the derivation of its seed");
      tree = derivation_tree(g, d);
    }
    out.push_back({tree_to_graph(*tree, cfg.features), r.u});
  }
  return out;
}

double constant_predictor_mse(const std::vector<gtnn::TrainSample>& train, const std::vector<gtnn::TrainSample>& test) {
  if (train.empty() || test.empty()) throw ConfigError("constant predictor needs nonempty train and test sets");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(train.front().target.values.size());
  for (const auto& s : train) mean += s.target.values;
  mean /= static_cast<double>(train.size());
  double total = 0.0;
  for (const auto& s : test) total += (s.target.values - mean).squaredNorm() / static_cast<double>(mean.size());
  return total / static_cast<double>(test.size());
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
  std::vector<SweepRow> rows;
  for (double q : cfg.q_grid) {
    SweepRow row;
    row.q = q;
    try {
      const Dataset ds = generate_dataset(cfg, q);
      const auto train = to_samples(cfg, ds.train);
      const auto test = to_samples(cfg, ds.test);
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = gtnn::train(train, gtnn::init_model(cfg.model), cfg.train);
      row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto losses = gtnn::sample_losses(res.model, test);
      row.kappa = gtnn::success_rate(losses, cfg.eta);
      double sum = 0.0;
      for (double l : losses) sum += l;
      row.mean_test_mse = sum / static_cast<double>(losses.size());
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool header) {
  if (header) os << kSweepHeader << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    if (r.ok) os << r.q << ',' << r.kappa << ',' << r.mean_test_mse << ',' << r.train_seconds << '\n';
    else os << r.q << ",nan,nan," << r.train_seconds << '\n';
  }
}

EndToEnd end_to_end_forward(const IntentSpec& spec, const ExperimentConfig& cfg, std::uint64_t seed) {
  const BuiltIntent b = build_intent(spec, cfg.allocation);
  const Grammar& g = b.grammar;
  EndToEnd e;
  e.sample = derivation_trace(g, seed, cfg.max_steps);
  const ParseTree tree = derivation_tree(g, e.sample);
  const std::size_t len = e.sample.string.size();
  const auto n = static_cast<std::size_t>(b.u.n_players);

  std::vector<std::string> producer(len);
  for (const auto& [p, c] : tree.edges)
    if (tree.nodes[c].leaf) producer[static_cast<std::size_t>(tree.nodes[c].spans.front().begin)] = tree.nodes[p].label;
  std::vector<long> last(n, -1);
  for (std::size_t k = 0; k < len; ++k) {
    auto it = spec.assignment.find(producer[k]);
    if (it == spec.assignment.end()) continue;
    for (int j : it->second) last[static_cast<std::size_t>(j)] = static_cast<long>(k);
  }

  const SymbolString dirs = to_directions(e.sample.string, g);
  e.expected = merge_tracks({dirs});
  const auto& kin = cfg.kinematics;
  // turns are unmodelled acceleration, allow one full speed change per step
  const double accel = std::max(kin.process_noise * kin.process_noise, kin.speed * kin.speed / kin.dt);
  const auto model = constant_velocity_model(kin.dt, accel, std::max(kin.obs_noise, 1e-6));
  std::vector<std::vector<TrackEstimate>> estimates;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<Eigen::Vector2d> schedule(len, Eigen::Vector2d::Zero());
    for (long k = 0; k <= last[j]; ++k)
      schedule[static_cast<std::size_t>(k)] = kin.speed * direction_vector(dirs[static_cast<std::size_t>(k)]);
    const std::uint64_t target_seed = record_seed(seed, j + 1);
    auto states = simulate_track(schedule, kin.process_noise, kin.dt, target_seed);
    const auto obs = observe(states, kin.obs_noise, record_seed(target_seed, 1));
    estimates.push_back(kalman_filter(obs, model));
    e.schedules.push_back(std::move(schedule));
    e.tracks.push_back(std::move(states));
  }
  for (std::size_t k = 0; k <= len; ++k) {
    MultiTargetFrame frame;
    for (std::size_t j = 0; j < n; ++j) frame.push_back(estimates[j][k]);
    e.frames.push_back(std::move(frame));
  }
  e.sequences = encode(e.frames, kin.zero_threshold);
  e.merged = merge_tracks(e.sequences);
  return e;
}

}  // namespace gi

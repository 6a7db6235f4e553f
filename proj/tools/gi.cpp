#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "gi/errors.hpp"
#include "gi/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> q;
  bool paper_scale = false;
};

gi::ExperimentConfig resolve(const Common& c) {
  gi::ExperimentConfig cfg = gi::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.q) {
    cfg.q = *c.q;
    cfg.q_grid = {*c.q};
  }
  if (c.paper_scale) {
    cfg.train_per_class = gi::kPaperTrainPerClass;
    cfg.test_per_class = gi::kPaperTestPerClass;
  }
  gi::check_config(cfg);
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw gi::ConfigError("cannot create output directory " + c.out + ": " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(p, mode);
  if (!f) throw gi::ConfigError("cannot write " + p.string());
  return f;
}

std::vector<gi::DatasetRecord> read_records(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw gi::ConfigError("cannot open dataset " + p.string());
  return gi::read_jsonl(in);
}

int cmd_simulate(const Common& c, int intent) {
  const auto cfg = resolve(c);
  if (intent < 0 || intent >= static_cast<int>(cfg.intents.size())) throw gi::ConfigError("intent index out of range");
  const auto e = gi::end_to_end_forward(cfg.intents[static_cast<std::size_t>(intent)], cfg, cfg.seed);
  auto f = open_out(out_dir(c) / "tracks.csv");
  gi::write_tracks_csv(f, e.tracks);
  nlohmann::json j{{"intent", cfg.intents[static_cast<std::size_t>(intent)].name},
                   {"seed", cfg.seed},
                   {"sample", gi::join_symbols(e.sample.string)},
                   {"expected", gi::to_string(e.expected)},
                   {"merged", gi::to_string(e.merged)}};
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : e.sequences) seqs.push_back(gi::to_string(s));
  j["sequences"] = seqs;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_solve_game(const Common& c) {
  const auto cfg = resolve(c);
  nlohmann::json all = nlohmann::json::array();
  for (const auto& spec : cfg.intents) {
    const auto b = gi::build_intent(spec, cfg.allocation);
    std::vector<double> nuc(static_cast<std::size_t>(b.u.n_players)), sh(nuc.size());
    const auto n = gi::nucleolus(b.u);
    const auto s = gi::shapley(b.u);
    for (std::size_t i = 0; i < nuc.size(); ++i) {
      nuc[i] = n(static_cast<Eigen::Index>(i));
      sh[i] = s(static_cast<Eigen::Index>(i));
    }
    nlohmann::json probs = nlohmann::json::object();
    for (const auto& r : b.grammar.rules) probs[r.id] = r.prob;
    all.push_back({{"name", spec.name},
                   {"u", gi::charfn_to_json(b.u)},
                   {"nucleolus", nuc},
                   {"shapley", sh},
                   {"in_core", gi::is_in_core(b.u, b.pi)},
                   {"class", gi::to_string(gi::classify(b.grammar))},
                   {"rule_probabilities", probs}});
  }
  auto f = open_out(out_dir(c) / "games.json");
  f << all.dump(2) << '\n';
  std::cout << all.dump(2) << '\n';
  return 0;
}

int cmd_gen_data(const Common& c) {
  const auto cfg = resolve(c);
  const auto ds = gi::generate_dataset(cfg, cfg.q);
  const auto dir = out_dir(c);
  auto tr = open_out(dir / "train.jsonl");
  gi::write_jsonl(tr, ds.train);
  auto te = open_out(dir / "test.jsonl");
  gi::write_jsonl(te, ds.test);
  auto cf = open_out(dir / "config.json");
  cf << gi::config_to_json(cfg).dump(2) << '\n';
  std::cout << "train " << ds.train.size() << " test " << ds.test.size() << " failures " << ds.failures << '\n';
  return 0;
}

int cmd_parse(const Common& c, const std::string& text, const std::string& grammar, const std::vector<std::string>& rules) {
  (void)c;
  gi::Grammar g = gi::load_grammar(grammar);
  if (!rules.empty()) g = gi::restrict_rules(g, std::set<std::string>(rules.begin(), rules.end()));
  const auto t = gi::parse(gi::split_symbols(text), g);
  std::cout << gi::tree_to_json(t).dump(2) << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& data) {
  const auto cfg = resolve(c);
  const fs::path dir = data.empty() ? fs::path(c.out) : fs::path(data);
  const auto samples = gi::to_samples(cfg, read_records(dir / "train.jsonl"));
  const auto res = gi::gtnn::train(samples, gi::gtnn::init_model(cfg.model), cfg.train);
  const auto out = out_dir(c);
  auto f = open_out(out / "model.json");
  f << gi::gtnn::model_to_json(res.model).dump() << '\n';
  auto h = open_out(out / "history.csv");
  h << "epoch,loss\n";
  for (std::size_t e = 0; e < res.history.size(); ++e) h << e + 1 << ',' << res.history[e] << '\n';
  std::cout << "initial_loss " << res.initial_loss << " final_loss " << res.final_loss << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& model_path) {
  const auto cfg = resolve(c);
  const fs::path dir = data.empty() ? fs::path(c.out) : fs::path(data);
  const fs::path mp = model_path.empty() ? fs::path(c.out) / "model.json" : fs::path(model_path);
  std::ifstream in(mp);
  if (!in) throw gi::ConfigError("cannot open model " + mp.string());
  nlohmann::json mj;
  try {
    in >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw gi::ConfigError("model file " + mp.string() + ": " + e.what());
  }
  const auto model = gi::gtnn::model_from_json(mj);
  const auto test = gi::to_samples(cfg, read_records(dir / "test.jsonl"));
  const auto losses = gi::gtnn::sample_losses(model, test);
  double sum = 0.0;
  for (double l : losses) sum += l;
  nlohmann::json j{{"n", losses.size()},
                   {"eta", cfg.eta},
                   {"kappa", gi::gtnn::success_rate(losses, cfg.eta)},
                   {"mean_test_mse", losses.empty() ? 0.0 : sum / static_cast<double>(losses.size())}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const Common& c) {
  const auto cfg = resolve(c);
  const auto rows = gi::run_sweep(cfg);
  const fs::path p = out_dir(c) / "sweep.csv";
  const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
  auto f = open_out(p, std::ios::app);
  gi::write_sweep_csv(f, rows, fresh);
  gi::write_sweep_csv(std::cout, rows, true);
  for (const auto& r : rows)
    if (!r.ok) std::cerr << "q=" << r.q << " failed: " << r.error << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group intent modeling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  std::uint64_t seed = 0;
  double q = 0.0;
  app.add_option("--config", c.config, "JSON config file");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out", c.out, "output directory");
  auto* q_opt = app.add_option("--q", q, "noise probability");
  app.add_flag("--paper-scale", c.paper_scale, "paper-scale dataset sizes");

  int intent = 0;
  std::string text, grammar = "builtin:triangle", data, model;
  std::vector<std::string> rules;

  auto* sim = app.add_subcommand("simulate", "grammar sample through tracking and merge");
  sim->add_option("--intent", intent, "intent class index");
  auto* solve = app.add_subcommand("solve-game", "characteristic functions, allocations and rule probabilities");
  auto* gen = app.add_subcommand("gen-data", "write train/test JSON-lines datasets");
  auto* par = app.add_subcommand("parse", "parse a terminal string");
  par->add_option("string,--string", text, "space separated terminals")->required();
  par->add_option("--grammar", grammar, "grammar file or builtin:NAME");
  par->add_option("--rules", rules, "restrict to these rule ids");
  auto* tr = app.add_subcommand("train", "train a model on DIR/train.jsonl");
  tr->add_option("--data", data, "dataset directory (default --out)");
  auto* ev = app.add_subcommand("eval", "evaluate a model on DIR/test.jsonl");
  ev->add_option("--data", data, "dataset directory (default --out)");
  ev->add_option("--model", model, "model file (default OUT/model.json)");
  auto* sw = app.add_subcommand("sweep", "train and evaluate across the q grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) c.seed = seed;
  if (*q_opt) c.q = q;

  try {
    if (*sim) return cmd_simulate(c, intent);
    if (*solve) return cmd_solve_game(c);
    if (*gen) return cmd_gen_data(c);
    if (*par) return cmd_parse(c, text, grammar, rules);
    if (*tr) return cmd_train(c, data);
    if (*ev) return cmd_eval(c, data, model);
    if (*sw) return cmd_sweep(c);
  } catch (const gi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const gi::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const gi::NoParseError& e) {
    std::cerr << "no parse: " << e.what() << '\n';
    return 1;
  } catch (const gi::GrammarError& e) {
    std::cerr << "grammar error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

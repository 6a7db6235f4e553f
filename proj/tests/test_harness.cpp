#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "gi/errors.hpp"
#include "gi/harness.hpp"

using namespace gi;

namespace {

ExperimentConfig tiny_config() {
  auto c = default_config();
  c.train_per_class = 4;
  c.test_per_class = 2;
  c.model.hidden_dim = 8;
  c.model.key_dim = 4;
  c.train.epochs = 3;
  c.train.batch_size = 8;
  return c;
}

const IntentSpec& intent_named(const ExperimentConfig& c, const std::string& name) {
  for (const auto& i : c.intents)
    if (i.name == name) return i;
  throw std::runtime_error("no intent " + name);
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("default configuration is valid") {
  const auto c = default_config();
  CHECK_NOTHROW(check_config(c));
  CHECK(c.intents.size() == 10);
  CHECK(c.model.n_players == 3);
  CHECK(c.model.feature_dim == c.features.dim);
}

TEST_CASE("config json round trip") {
  auto c = default_config();
  c.allocation = AllocationMethod::Shapley;
  c.q = 0.25;
  c.graph_source = GraphSource::Parse;
  c.train.learning_rate = 0.02;
  const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  CHECK(back.allocation == AllocationMethod::Shapley);
  CHECK(back.q == 0.25);
  CHECK(back.graph_source == GraphSource::Parse);
  CHECK(back.train.learning_rate == 0.02);
  CHECK(back.intents.size() == c.intents.size());
  CHECK(back.intents[1].sensors[2].R == c.intents[1].sensors[2].R);
  CHECK(config_to_json(back) == config_to_json(c));

  auto j = config_to_json(c);
  j["paper_scale"] = true;
  const auto paper = config_from_json(j);
  CHECK(paper.train_per_class == kPaperTrainPerClass);
  CHECK(paper.test_per_class == kPaperTestPerClass);
}

TEST_CASE("bad configurations are rejected") {
  auto j = config_to_json(default_config());
  j["q"] = 1.0;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(default_config());
  j["allocation"] = "banzhaf";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(default_config());
  j["train_per_class"] = "many";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(default_config());
  j["intents"] = nlohmann::json::array();
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  CHECK_THROWS_AS(load_config("/no/such/config.json"), ConfigError);
}

TEST_CASE("environment overrides") {
  auto j = config_to_json(default_config());
  ::setenv("GITEST_Q", "0.3", 1);
  ::setenv("GITEST_TRAIN__EPOCHS", "7", 1);
  ::setenv("GITEST_Q_GRID", "0,0.5", 1);
  ::setenv("GITEST_ALLOCATION", "shapley", 1);
  apply_env_overrides(j, "GITEST_");
  ::unsetenv("GITEST_Q");
  ::unsetenv("GITEST_TRAIN__EPOCHS");
  ::unsetenv("GITEST_Q_GRID");
  ::unsetenv("GITEST_ALLOCATION");
  const auto c = config_from_json(j);
  CHECK(c.q == 0.3);
  CHECK(c.train.epochs == 7);
  CHECK(c.q_grid == std::vector<double>{0.0, 0.5});
  CHECK(c.allocation == AllocationMethod::Shapley);
}

TEST_CASE("intent construction") {
  const auto c = default_config();
  const auto a = build_intent(intent_named(c, "2-3-5"));
  CHECK((a.pi - Eigen::Vector3d(2, 3, 5)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(a.grammar.find_rule("I")->prob == doctest::Approx(0.1));
  CHECK(a.grammar.find_rule("IV")->prob == doctest::Approx(0.15));
  CHECK(a.grammar.find_rule("VII")->prob == doctest::Approx(0.25));
  CHECK(validate(a.grammar).empty());

  const auto null = build_intent(intent_named(c, "1-0-0"));
  CHECK(std::abs(null.pi(1)) < 1e-8);
  CHECK(std::abs(null.pi(2)) < 1e-8);
  for (const char* id : {"IV", "V", "VII", "VIII"}) CHECK(null.grammar.find_rule(id)->prob == 0.0);
  CHECK(null.grammar.find_rule("I")->prob == doctest::Approx(0.5));
  CHECK(classify(null.grammar) == GrammarClass::SRG);

  const auto sym = build_intent(intent_named(c, "1-1-1"));
  for (const char* id : {"I", "II", "IV", "V", "VII", "VIII"})
    CHECK(sym.grammar.find_rule(id)->prob == doctest::Approx(1.0 / 6));

  const auto sh = build_intent(intent_named(c, "5-3-2"), AllocationMethod::Shapley);
  CHECK((sh.pi - Eigen::Vector3d(5, 3, 2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("record seeds") {
  CHECK(record_seed(1, 0) == record_seed(1, 0));
  CHECK(record_seed(1, 0) != record_seed(1, 1));
  CHECK(record_seed(1, 0) != record_seed(2, 0));
}

TEST_CASE("dataset generation") {
  const auto c = tiny_config();
  const auto d = generate_dataset(c, 0.0);
  CHECK(d.train.size() == 40);
  CHECK(d.test.size() == 20);
  CHECK(d.failures == 0);
  for (const auto& r : d.train) {
    CHECK(r.split == "train");
    CHECK(!r.string.empty());
    CHECK(is_modular(r.u));
  }
  const auto again = generate_dataset(c, 0.0);
  std::ostringstream a, b;
  write_jsonl(a, d.train);
  write_jsonl(b, again.train);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  const auto back = read_jsonl(in);
  REQUIRE(back.size() == d.train.size());
  CHECK(back[3].string == d.train[3].string);
  CHECK(back[3].seed == d.train[3].seed);
  CHECK(back[3].u.values == d.train[3].u.values);

  std::istringstream bad("{\"string\": 3}\n");
  CHECK_THROWS_AS(read_jsonl(bad), ConfigError);
}

TEST_CASE("noiseless records parse and rebuild the same graphs") {
  auto c = tiny_config();
  c.train_per_class = 20;
  const auto d = generate_dataset(c, 0.0);
  const auto derived = to_samples(c, d.train);
  c.graph_source = GraphSource::Parse;
  const auto parsed = to_samples(c, d.train);
  REQUIRE(parsed.size() == d.train.size());
  std::size_t ok = 0;
  for (const auto& s : parsed) ok += s.graph.n_nodes() > 0;
  CHECK(static_cast<double>(ok) >= 0.99 * static_cast<double>(parsed.size()));
  for (const auto& s : derived) CHECK(s.graph.dim() == c.features.dim);
}

TEST_CASE("constant predictor baseline") {
  auto c = tiny_config();
  const auto d = generate_dataset(c, 0.0);
  const auto tr = to_samples(c, d.train);
  const double base = constant_predictor_mse(tr, tr);
  CHECK(base > 0.0);
  CHECK(std::isfinite(base));
}

TEST_CASE("sweep rows") {
  auto c = tiny_config();
  c.q_grid = {0.0, 0.2, 0.4};
  const auto rows = run_sweep(c);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.ok);
    CHECK(r.kappa >= 0.0);
    CHECK(r.kappa <= 1.0);
  }
  std::ostringstream os;
  write_sweep_csv(os, rows, true);
  const auto text = os.str();
  CHECK(text.rfind(std::string(kSweepHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("single class sweep is trivially solved") {
  auto c = tiny_config();
  c.intents = {intent_named(c, "1-1-1")};
  c.q_grid = {0.0};
  c.eta = 1e6;
  const auto rows = run_sweep(c);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].kappa == 1.0);
}

TEST_CASE("end to end without noise") {
  const auto c = default_config();
  for (const auto& name : {"1-1-1", "2-3-5", "1-0-0"}) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto e = end_to_end_forward(intent_named(c, name), c, s);
      CHECK(e.merged == e.expected);
      CHECK(e.tracks.size() == 3);
      const auto again = end_to_end_forward(intent_named(c, name), c, s);
      CHECK(again.merged == e.merged);
      CHECK(again.sample.string == e.sample.string);
    }
  }
}

TEST_CASE("three targets turning in sequence through the tracker") {
  const std::vector<std::vector<Direction>> legs{
      {Direction::L1, Direction::L1, Direction::L1},
      {Direction::L1, Direction::L1, Direction::L1, Direction::L4, Direction::L4, Direction::L4},
      {Direction::L1, Direction::L1, Direction::L1, Direction::L4, Direction::L4, Direction::L4, Direction::NegL2,
       Direction::NegL2, Direction::NegL2}};
  const auto model = constant_velocity_model(1.0, 1.0, 1e-6);
  std::vector<std::vector<TrackEstimate>> est;
  for (std::size_t j = 0; j < legs.size(); ++j) {
    std::vector<Eigen::Vector2d> schedule(9, Eigen::Vector2d::Zero());
    for (std::size_t k = 0; k < legs[j].size(); ++k) schedule[k] = direction_vector(legs[j][k]);
    est.push_back(kalman_filter(observe(simulate_track(schedule, 0.0, 1.0, j + 1), 0.0, j + 10), model));
  }
  std::vector<MultiTargetFrame> frames;
  for (std::size_t k = 0; k < est[0].size(); ++k) frames.push_back({est[0][k], est[1][k], est[2][k]});
  CHECK(to_string(merge_tracks(encode(frames))) == "l1 l1 l1 l4 l4 l4 -l2 -l2 -l2");
}

}

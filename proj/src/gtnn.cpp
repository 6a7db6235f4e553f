#include "gi/gtnn.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "gi/errors.hpp"

namespace gi::gtnn {

void validate(const ModelConfig& c) {
  if (c.feature_dim < 1 || c.hidden_dim < 1 || c.n_gcn_layers < 1 || c.n_heads < 1 || c.key_dim < 1)
    throw ConfigError("model dimensions and layer counts must be positive");
  if (c.hidden_dim % c.n_heads != 0) throw ConfigError("hidden_dim must be divisible by n_heads");
  if (c.n_players < 1 || c.n_players > kMaxLossPlayers)
    throw ConfigError("n_players must lie in [1, " + std::to_string(kMaxLossPlayers) + "]");
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.for_each([](const std::string&, auto& m) { m.setZero(); });
  return z;
}

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Model init_model(const ModelConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
  };
  auto fan = [](Eigen::Index n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  Model m;
  m.config = cfg;
  const int h = cfg.hidden_dim;
  const int qk = cfg.n_heads * cfg.key_dim;
  for (int l = 0; l < cfg.n_gcn_layers; ++l) {
    const int in = l == 0 ? cfg.feature_dim : h;
    m.params.gcn.push_back(uniform(in, h, fan(in)));
  }
  m.params.wq = uniform(h, qk, fan(h));
  m.params.wk = uniform(h, qk, fan(h));
  m.params.wv = uniform(h, qk, fan(h));
  m.params.wo = uniform(qk, h, fan(qk));
  m.params.w_out = uniform(cfg.n_players, h, fan(h));
  m.params.b_out = uniform(cfg.n_players, 1, fan(h));
  m.lambda = uniform(cfg.n_players, cfg.n_players, 1.0);
  return m;
}

Eigen::MatrixXd normalized_adjacency(const FeatureGraph& g) {
  const int n = g.n_nodes();
  Eigen::VectorXd inv_sqrt(n);
  for (int i = 0; i < n; ++i)
    inv_sqrt(i) = 1.0 / std::sqrt(static_cast<double>(g.neighbors[static_cast<std::size_t>(i)].size()) + 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = inv_sqrt(i) * inv_sqrt(i);
    for (int j : g.neighbors[static_cast<std::size_t>(i)]) a(i, j) = inv_sqrt(i) * inv_sqrt(j);
  }
  return a;
}

namespace {

struct Cache {
  Eigen::MatrixXd a_hat;
  std::vector<Eigen::MatrixXd> h;   // h[0] input, h[l+1] after layer l
  std::vector<Eigen::MatrixXd> ah;  // a_hat * h[l]
  std::vector<Eigen::MatrixXd> z;
  Eigen::MatrixXd q, k, v, o;
  std::vector<Eigen::MatrixXd> att;
  Eigen::MatrixXd y;
  Eigen::VectorXd pooled, pre, theta;
};

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd e = (s.colwise() - s.rowwise().maxCoeff()).array().exp().matrix();
  return e.array().colwise() / e.rowwise().sum().array();
}

void attend(const Model& m, const Eigen::MatrixXd& h, Cache& c) {
  const int dk = m.config.key_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  c.q = h * m.params.wq;
  c.k = h * m.params.wk;
  c.v = h * m.params.wv;
  c.o.resize(h.rows(), c.v.cols());
  c.att.clear();
  for (int b = 0; b < m.config.n_heads; ++b) {
    const auto cols = Eigen::seqN(b * dk, dk);
    Eigen::MatrixXd w = softmax_rows(c.q(Eigen::all, cols) * c.k(Eigen::all, cols).transpose() * scale);
    c.o(Eigen::all, cols) = w * c.v(Eigen::all, cols);
    c.att.push_back(std::move(w));
  }
}

void run_forward(const Model& m, const FeatureGraph& g, Cache& c) {
  if (g.dim() != m.config.feature_dim)
    throw ConfigError("graph feature dimension " + std::to_string(g.dim()) + " differs from model input " +
                      std::to_string(m.config.feature_dim));
  if (g.n_nodes() == 0) throw ConfigError("graph has no nodes");
  c.a_hat = normalized_adjacency(g);
  c.h = {g.features};
  c.ah.clear();
  c.z.clear();
  for (const auto& w : m.params.gcn) {
    c.ah.push_back(c.a_hat * c.h.back());
    c.z.push_back(c.ah.back() * w);
    c.h.push_back(c.z.back().cwiseMax(0.0));
  }
  attend(m, c.h.back(), c);
  c.y = c.o * m.params.wo;
  c.pooled = c.y.colwise().mean().transpose();
  c.pre = m.params.w_out * c.pooled + m.params.b_out;
  c.theta = m.config.head == HeadActivation::ReLU ? Eigen::VectorXd(c.pre.cwiseMax(0.0)) : c.pre;
}

// Rows phi(S) = S + logistic(Lambda S) over all coalitions.
Eigen::MatrixXd head_basis(const Eigen::MatrixXd& lambda) {
  const auto n = static_cast<int>(lambda.rows());
  if (n > kMaxLossPlayers) throw ConfigError("coalition loss limited to " + std::to_string(kMaxLossPlayers) + " players");
  const Eigen::Index rows = Eigen::Index{1} << n;
  Eigen::MatrixXd phi(rows, n);
  for (Eigen::Index s = 0; s < rows; ++s) {
    Eigen::VectorXd ind(n);
    for (int i = 0; i < n; ++i) ind(i) = (s >> i) & 1;
    const Eigen::VectorXd z = lambda * ind;
    for (int i = 0; i < n; ++i) phi(s, i) = ind(i) + logistic(z(i));
  }
  return phi;
}

void check_target(const Model& m, const CharacteristicFunction& u) {
  if (u.n_players != m.config.n_players)
    throw ConfigError("target has " + std::to_string(u.n_players) + " players, model expects " +
                      std::to_string(m.config.n_players));
}

Gradients backward_cached(const Model& m, const TrainSample& sample, const Eigen::MatrixXd& phi, double* loss_out) {
  check_target(m, sample.target);
  Cache c;
  run_forward(m, sample.graph, c);
  const Eigen::VectorXd r = phi * c.theta - sample.target.values;
  const double scale = 1.0 / static_cast<double>(r.size());
  if (loss_out) *loss_out = r.squaredNorm() * scale;

  Gradients grad = m.params.zeros_like();
  const Eigen::VectorXd d_theta = 2.0 * scale * (phi.transpose() * r);
  Eigen::VectorXd d_pre = d_theta;
  if (m.config.head == HeadActivation::ReLU)
    for (Eigen::Index i = 0; i < d_pre.size(); ++i)
      if (c.pre(i) <= 0.0) d_pre(i) = 0.0;
  grad.w_out = d_pre * c.pooled.transpose();
  grad.b_out = d_pre;
  const Eigen::VectorXd d_pooled = m.params.w_out.transpose() * d_pre;

  const auto n = static_cast<double>(c.y.rows());
  const Eigen::MatrixXd d_y = Eigen::MatrixXd::Ones(c.y.rows(), 1) * (d_pooled.transpose() / n);
  grad.wo = c.o.transpose() * d_y;
  const Eigen::MatrixXd d_o = d_y * m.params.wo.transpose();

  const int dk = m.config.key_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));
  Eigen::MatrixXd d_q(c.q.rows(), c.q.cols()), d_k(c.k.rows(), c.k.cols()), d_v(c.v.rows(), c.v.cols());
  for (int b = 0; b < m.config.n_heads; ++b) {
    const auto cols = Eigen::seqN(b * dk, dk);
    const Eigen::MatrixXd& a = c.att[static_cast<std::size_t>(b)];
    const Eigen::MatrixXd d_a = d_o(Eigen::all, cols) * c.v(Eigen::all, cols).transpose();
    d_v(Eigen::all, cols) = a.transpose() * d_o(Eigen::all, cols);
    const Eigen::VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum();
    const Eigen::MatrixXd d_s = (a.array() * (d_a.colwise() - row_dot).array()).matrix();
    d_q(Eigen::all, cols) = s * d_s * c.k(Eigen::all, cols);
    d_k(Eigen::all, cols) = s * d_s.transpose() * c.q(Eigen::all, cols);
  }
  const Eigen::MatrixXd& h_top = c.h.back();
  grad.wq = h_top.transpose() * d_q;
  grad.wk = h_top.transpose() * d_k;
  grad.wv = h_top.transpose() * d_v;
  Eigen::MatrixXd d_h = d_q * m.params.wq.transpose() + d_k * m.params.wk.transpose() + d_v * m.params.wv.transpose();

  for (std::size_t l = m.params.gcn.size(); l-- > 0;) {
    const Eigen::MatrixXd d_z = (c.z[l].array() > 0.0).select(d_h, 0.0);
    grad.gcn[l] = c.ah[l].transpose() * d_z;
    if (l > 0) d_h = c.a_hat.transpose() * (d_z * m.params.gcn[l].transpose());
  }
  return grad;
}

}  // namespace

Eigen::MatrixXd gcn_forward(const Model& m, const FeatureGraph& g) {
  Cache c;
  if (g.dim() != m.config.feature_dim) throw ConfigError("graph feature dimension differs from model input");
  c.a_hat = normalized_adjacency(g);
  Eigen::MatrixXd h = g.features;
  for (const auto& w : m.params.gcn) h = (c.a_hat * h * w).cwiseMax(0.0);
  return h;
}

AttentionOutput attention_forward(const Model& m, const Eigen::MatrixXd& h) {
  if (h.rows() == 0) throw ConfigError("attention over an empty node set");
  Cache c;
  attend(m, h, c);
  return {c.o * m.params.wo, c.att};
}

Eigen::VectorXd forward(const Model& m, const FeatureGraph& g) {
  Cache c;
  run_forward(m, g, c);
  return c.theta;
}

double char_head(const Eigen::VectorXd& theta, const Eigen::MatrixXd& lambda, Coalition s) {
  const auto n = theta.size();
  if (lambda.rows() != n || lambda.cols() != n) throw ConfigError("coupling matrix does not match theta");
  Eigen::VectorXd ind(n);
  for (Eigen::Index i = 0; i < n; ++i) ind(i) = (s >> i) & 1U;
  const Eigen::VectorXd z = lambda * ind;
  double out = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out += theta(i) * (ind(i) + logistic(z(i)));
  return out;
}

double head_loss(const Eigen::VectorXd& theta, const Eigen::MatrixXd& lambda, const CharacteristicFunction& u) {
  if (theta.size() != u.n_players) throw ConfigError("theta length differs from player count");
  return (head_basis(lambda) * theta - u.values).squaredNorm() / static_cast<double>(u.size());
}

double loss(const Model& m, const TrainSample& sample) {
  check_target(m, sample.target);
  return head_loss(forward(m, sample.graph), m.lambda, sample.target);
}

Gradients backward(const Model& m, const TrainSample& sample, double* loss_out) {
  return backward_cached(m, sample, head_basis(m.lambda), loss_out);
}

std::vector<double> sample_losses(const Model& m, const std::vector<TrainSample>& samples) {
  const Eigen::MatrixXd phi = head_basis(m.lambda);
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    check_target(m, s.target);
    out.push_back((phi * forward(m, s.graph) - s.target.values).squaredNorm() / static_cast<double>(s.target.size()));
  }
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& samples, const Model& init, const TrainConfig& cfg) {
  if (samples.empty()) throw ConfigError("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate >= 0.0))
    throw ConfigError("train: batch size, epochs and learning rate must be positive");
  TrainResult res;
  res.model = init;
  Model& m = res.model;
  const Eigen::MatrixXd phi = head_basis(m.lambda);
  res.initial_loss = mean(sample_losses(m, samples));

  Parameters m1 = m.params.zeros_like();
  Parameters m2 = m.params.zeros_like();
  long step = 0;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Gradients g = m.params.zeros_like();
      for (std::size_t i = start; i < stop; ++i) {
        double l = 0.0;
        Gradients gi = backward_cached(m, samples[order[i]], phi, &l);
        if (!std::isfinite(l))
          throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch + 1));
        epoch_loss += l;
        auto it = gi.gcn.begin();
        for (auto& w : g.gcn) w += *it++;
        g.wq += gi.wq;
        g.wk += gi.wk;
        g.wv += gi.wv;
        g.wo += gi.wo;
        g.w_out += gi.w_out;
        g.b_out += gi.b_out;
      }
      ++step;
      const double inv = 1.0 / static_cast<double>(stop - start);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      // Walk the four parameter sets in lockstep.
      std::vector<Eigen::Map<Eigen::VectorXd>> views[4];
      Parameters* sets[4] = {&m.params, &g, &m1, &m2};
      for (int k = 0; k < 4; ++k)
        sets[k]->for_each([&](const std::string&, auto& w) { views[k].emplace_back(w.data(), w.size()); });
      for (std::size_t p = 0; p < views[0].size(); ++p) {
        auto& w = views[0][p];
        const Eigen::VectorXd grad = views[1][p] * inv;
        views[2][p] = cfg.beta1 * views[2][p] + (1.0 - cfg.beta1) * grad;
        views[3][p] = cfg.beta2 * views[3][p] + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        w.array() -= cfg.learning_rate * (views[2][p].array() / c1) / ((views[3][p].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    res.history.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  res.final_loss = mean(sample_losses(m, samples));
  if (!std::isfinite(res.final_loss)) throw NumericalError("train: final loss is non-finite");
  return res;
}

double success_rate(const std::vector<double>& losses, double eta) {
  if (losses.empty()) throw ConfigError("evaluate: empty test set");
  if (!(eta > 0.0)) throw ConfigError("evaluate: eta must be positive");
  const auto hits = std::count_if(losses.begin(), losses.end(), [&](double l) { return l <= eta; });
  return static_cast<double>(hits) / static_cast<double>(losses.size());
}

double evaluate(const Model& m, const std::vector<TrainSample>& test, double eta) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  return success_rate(sample_losses(m, test), eta);
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim}, {"hidden_dim", c.hidden_dim}, {"n_gcn_layers", c.n_gcn_layers},
          {"n_heads", c.n_heads},         {"key_dim", c.key_dim},       {"n_players", c.n_players},
          {"seed", c.seed},               {"head", c.head == HeadActivation::ReLU ? "relu" : "identity"}};
}

ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_gcn_layers = j.value("n_gcn_layers", c.n_gcn_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.key_dim = j.value("key_dim", c.key_dim);
    c.n_players = j.value("n_players", c.n_players);
    c.seed = j.value("seed", c.seed);
    if (j.contains("head")) {
      const auto h = j.at("head").get<std::string>();
      if (h == "relu") c.head = HeadActivation::ReLU;
      else if (h == "identity") c.head = HeadActivation::Identity;
      else throw ConfigError("unknown head activation '" + h + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  validate(c);
  return c;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols ||
      static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("checkpoint weight '" + name + "' has the wrong shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

}  // namespace

nlohmann::json model_to_json(const Model& m) {
  nlohmann::json w = nlohmann::json::object();
  m.params.for_each([&](const std::string& name, const auto& x) { w[name] = matrix_json(Eigen::MatrixXd(x)); });
  return {{"version", 1}, {"config", config_to_json(m.config)}, {"weights", w},
          {"lambda", matrix_json(m.lambda)}, {"seed", m.config.seed}};
}

Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", 0) != 1) throw ConfigError("unsupported checkpoint version");
    Model m = init_model(config_from_json(j.at("config")));
    const auto& w = j.at("weights");
    m.params.for_each([&](const std::string& name, auto& x) {
      x = matrix_from(w.at(name), x.rows(), x.cols(), name);
    });
    m.lambda = matrix_from(j.at("lambda"), m.lambda.rows(), m.lambda.cols(), "lambda");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace gi::gtnn

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gi/game.hpp"
#include "gi/metaparse.hpp"

namespace gi::gtnn {

enum class HeadActivation { ReLU, Identity };

struct ModelConfig {
  int feature_dim = 16;
  int hidden_dim = 16;
  int n_gcn_layers = 2;
  int n_heads = 2;
  int key_dim = 8;
  int n_players = 3;
  std::uint64_t seed = 1;
  HeadActivation head = HeadActivation::ReLU;
};

void validate(const ModelConfig& cfg);

/// Trainable weights, row-vector convention (node embeddings are rows).
struct Parameters {
  std::vector<Eigen::MatrixXd> gcn;  // feature_dim x hidden, then hidden x hidden
  Eigen::MatrixXd wq, wk, wv;        // hidden x (heads * key_dim)
  Eigen::MatrixXd wo;                // (heads * key_dim) x hidden
  Eigen::MatrixXd w_out;             // players x hidden
  Eigen::VectorXd b_out;             // players

  template <typename F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < gcn.size(); ++l) f("gcn" + std::to_string(l), gcn[l]);
    f(std::string("wq"), wq);
    f(std::string("wk"), wk);
    f(std::string("wv"), wv);
    f(std::string("wo"), wo);
    f(std::string("w_out"), w_out);
    f(std::string("b_out"), b_out);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<Parameters*>(this)->for_each([&](const std::string& name, auto& m) { f(name, std::as_const(m)); });
  }

  Parameters zeros_like() const;
  std::size_t size() const;
};

using Gradients = Parameters;

struct Model {
  ModelConfig config;
  Parameters params;
  /// Frozen coupling matrix of the coalition head.
  Eigen::MatrixXd lambda;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, Uniform(-1, 1) coupling.
Model init_model(const ModelConfig& cfg);

/// D^-1/2 (A + I) D^-1/2 with D the degree including the self loop.
Eigen::MatrixXd normalized_adjacency(const FeatureGraph& g);

Eigen::MatrixXd gcn_forward(const Model& m, const FeatureGraph& g);

struct AttentionOutput {
  Eigen::MatrixXd out;                  // n x hidden
  std::vector<Eigen::MatrixXd> weights;  // per head, n x n, rows sum to one
};
AttentionOutput attention_forward(const Model& m, const Eigen::MatrixXd& h);

Eigen::VectorXd forward(const Model& m, const FeatureGraph& g);

/// theta' (S + logistic(Lambda S)) with S the indicator vector of the coalition.
double char_head(const Eigen::VectorXd& theta, const Eigen::MatrixXd& lambda, Coalition s);

struct TrainSample {
  FeatureGraph graph;
  CharacteristicFunction target;
};

inline constexpr int kMaxLossPlayers = 12;

/// Mean squared error over all 2^N coalitions.
double loss(const Model& m, const TrainSample& sample);
double head_loss(const Eigen::VectorXd& theta, const Eigen::MatrixXd& lambda, const CharacteristicFunction& u);

/// Exact gradient of loss() with respect to every trainable weight.
Gradients backward(const Model& m, const TrainSample& sample, double* loss_out = nullptr);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool shuffle = true;
  std::uint64_t seed = 1;
};

struct TrainResult {
  Model model;
  double initial_loss = 0.0;
  /// Mean per-sample loss seen during each epoch.
  std::vector<double> history;
  double final_loss = 0.0;
};

TrainResult train(const std::vector<TrainSample>& samples, const Model& init, const TrainConfig& cfg);

std::vector<double> sample_losses(const Model& m, const std::vector<TrainSample>& samples);

/// Share of samples whose loss is at most eta.
double evaluate(const Model& m, const std::vector<TrainSample>& test, double eta);
double success_rate(const std::vector<double>& losses, double eta);

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace gi::gtnn

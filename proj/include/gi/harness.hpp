#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gi/game.hpp"
#include "gi/grammar.hpp"
#include "gi/gtnn.hpp"
#include "gi/kinematics.hpp"
#include "gi/metaparse.hpp"

namespace gi {

struct IntentSpec {
  std::string name;
  std::vector<SensorSpec> sensors;
  RuleAssignment assignment;
  std::string grammar = "builtin:triangle";
};

enum class AllocationMethod { Nucleolus, Shapley };
enum class GraphSource { Derivation, Parse };

struct KinematicsConfig {
  double dt = 1.0;
  double speed = 1.0;
  double zero_threshold = 0.25;
  double process_noise = 0.0;
  double obs_noise = 0.0;
};

struct ExperimentConfig {
  int n_players = 3;
  std::vector<IntentSpec> intents;
  AllocationMethod allocation = AllocationMethod::Nucleolus;
  std::vector<double> q_grid{0.0, 0.2, 0.4};
  double q = 0.0;
  int train_per_class = 500;
  int test_per_class = 50;
  double eta = 0.05;
  std::uint64_t seed = 7;
  GraphSource graph_source = GraphSource::Derivation;
  std::size_t max_steps = kDefaultMaxSteps;
  int retry_cap = 100;
  FeatureOptions features;
  gtnn::ModelConfig model;
  gtnn::TrainConfig train;
  KinematicsConfig kinematics;
};

inline constexpr int kPaperTrainPerClass = 5000;
inline constexpr int kPaperTestPerClass = 500;
inline constexpr const char* kEnvPrefix = "GI_";

/// Three sensors over the triangle grammar; ten trace patterns, four of
/// them with a null player.
ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// GI_A__B=value sets key a.b (value parsed as JSON when possible).
void apply_env_overrides(nlohmann::json& j, const std::string& prefix = kEnvPrefix);

/// Reads the file (or the defaults when path is empty) and applies
/// environment overrides.
ExperimentConfig load_config(const std::string& path, const std::string& prefix = kEnvPrefix);

void check_config(const ExperimentConfig& c);

struct BuiltIntent {
  CharacteristicFunction u;
  Allocation pi;
  Grammar grammar;
  std::set<std::string> unreachable_groups;
};

BuiltIntent build_intent(const IntentSpec& spec, AllocationMethod method = AllocationMethod::Nucleolus);

std::uint64_t record_seed(std::uint64_t master, std::uint64_t index);

struct DatasetRecord {
  std::vector<std::string> string;
  CharacteristicFunction u;  // scaled by u_scale
  double u_scale = 1.0;
  int intent = 0;
  double q = 0.0;
  std::uint64_t seed = 0;
  std::string split;
};

nlohmann::json record_to_json(const DatasetRecord& r);
DatasetRecord record_from_json(const nlohmann::json& j);

struct Dataset {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
  std::size_t failures = 0;
};

Dataset generate_dataset(const ExperimentConfig& cfg, double q);

void write_jsonl(std::ostream& os, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_jsonl(std::istream& is);

/// Feature graphs for training, rebuilt from each record's seed.
std::vector<gtnn::TrainSample> to_samples(const ExperimentConfig& cfg, const std::vector<DatasetRecord>& records);

/// Loss of predicting the per-coalition mean of the training targets.
double constant_predictor_mse(const std::vector<gtnn::TrainSample>& train, const std::vector<gtnn::TrainSample>& test);

struct SweepRow {
  double q = 0.0;
  double kappa = 0.0;
  double mean_test_mse = 0.0;
  double train_seconds = 0.0;
  bool ok = true;
  std::string error;
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg);

inline constexpr const char* kSweepHeader = "q,kappa,mean_test_mse,train_seconds";
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool header);

struct EndToEnd {
  Derivation sample;
  std::vector<std::vector<Eigen::Vector2d>> schedules;
  std::vector<std::vector<KinematicState>> tracks;
  std::vector<MultiTargetFrame> frames;
  std::vector<SymbolString> sequences;
  SymbolString merged;
  /// merge_tracks applied to the grammar sample itself.
  SymbolString expected;
};

/// Grammar sample -> per-target velocity schedules -> simulation ->
/// observation -> Kalman tracking -> encoding -> merge. Target j follows the
/// sample up to the last terminal written by one of its rules, then rests.
EndToEnd end_to_end_forward(const IntentSpec& spec, const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace gi

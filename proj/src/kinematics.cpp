#include "gi/kinematics.hpp"

#include <numbers>
#include <random>

namespace gi {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Zero: return "0";
    case Direction::L1: return "l1";
    case Direction::L2: return "l2";
    case Direction::L3: return "l3";
    case Direction::L4: return "l4";
    case Direction::NegL1: return "-l1";
    case Direction::NegL2: return "-l2";
    case Direction::NegL3: return "-l3";
    case Direction::NegL4: return "-l4";
  }
  return "?";
}

std::optional<Direction> parse_direction(std::string_view s) {
  for (Direction d : kAllDirections)
    if (to_string(d) == s) return d;
  return std::nullopt;
}

Eigen::Vector2d direction_vector(Direction d) {
  if (d == Direction::Zero) return Eigen::Vector2d::Zero();
  // l1..l4 at 0, 45, 90, 135 degrees; negatives add 180.
  const int idx = static_cast<int>(d) - 1;
  const double angle = idx * std::numbers::pi / 4.0;
  return {std::cos(angle), std::sin(angle)};
}

LinearGaussianModel<double> constant_velocity_model(double dt, double accel_density, double obs_std,
                                                    const Eigen::Vector4d& prior_mean, double prior_std) {
  if (!(dt > 0)) throw ConfigError("constant_velocity_model: dt must be positive");
  if (!(accel_density > 0) || !(obs_std > 0) || !(prior_std > 0))
    throw ConfigError("constant_velocity_model: noise parameters must be positive");
  LinearGaussianModel<double> m;
  m.F = Eigen::Matrix4d::Identity();
  m.F(0, 2) = dt;
  m.F(1, 3) = dt;
  // Continuous white-noise acceleration, discretized per axis.
  m.Q = Eigen::Matrix4d::Zero();
  const double q11 = accel_density * dt * dt * dt / 3.0;
  const double q12 = accel_density * dt * dt / 2.0;
  const double q22 = accel_density * dt;
  for (int axis = 0; axis < 2; ++axis) {
    m.Q(axis, axis) = q11;
    m.Q(axis, axis + 2) = q12;
    m.Q(axis + 2, axis) = q12;
    m.Q(axis + 2, axis + 2) = q22;
  }
  m.H = Eigen::Matrix4d::Identity();
  m.R = Eigen::Matrix4d::Identity() * obs_std * obs_std;
  m.prior_mean = prior_mean;
  m.prior_covariance = Eigen::Matrix4d::Identity() * prior_std * prior_std;
  return m;
}

std::vector<KinematicState> simulate_track(std::span<const Eigen::Vector2d> velocity_schedule,
                                           double process_noise_std, double dt, std::uint64_t seed,
                                           const KinematicState& initial) {
  if (velocity_schedule.empty()) throw ConfigError("simulate_track: empty velocity schedule");
  if (!(dt > 0)) throw ConfigError("simulate_track: dt must be positive");
  if (!(process_noise_std >= 0)) throw ConfigError("simulate_track: process noise std must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<KinematicState> states;
  states.reserve(velocity_schedule.size() + 1);
  states.push_back(initial);
  for (const auto& cmd : velocity_schedule) {
    KinematicState next = states.back();
    Eigen::Vector2d v = cmd;
    if (process_noise_std > 0) {
      v.x() += process_noise_std * noise(rng);
      v.y() += process_noise_std * noise(rng);
    }
    next.tail<2>() = v;
    next.head<2>() += dt * v;
    states.push_back(next);
  }
  return states;
}

std::vector<Observation> observe(std::span<const KinematicState> states, double obs_noise_std,
                                 std::uint64_t seed) {
  if (!(obs_noise_std >= 0)) throw ConfigError("observe: noise std must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Observation> out;
  out.reserve(states.size());
  for (const auto& x : states) {
    Observation y = x;
    if (obs_noise_std > 0)
      for (int i = 0; i < 4; ++i) y(i) += obs_noise_std * noise(rng);
    out.push_back(y);
  }
  return out;
}

std::vector<TrackEstimate> kalman_filter(std::span<const Observation> observations,
                                         const LinearGaussianModel<double>& model) {
  std::vector<Eigen::VectorXd> dyn(observations.begin(), observations.end());
  return kalman_filter<double>(std::span<const Eigen::VectorXd>(dyn), model);
}

Direction quantize_velocity(const Eigen::Vector2d& v, double zero_threshold) {
  const double norm = v.norm();
  if (!(norm >= zero_threshold) || norm == 0.0) return Direction::Zero;
  Direction best = Direction::L1;
  double best_cos = -2.0;
  for (Direction d : kAllDirections) {
    if (d == Direction::Zero) continue;
    const double c = direction_vector(d).dot(v) / norm;
    if (c > best_cos + 1e-12) {
      best_cos = c;
      best = d;
    }
  }
  return best;
}

void write_tracks_csv(std::ostream& os, const std::vector<std::vector<KinematicState>>& tracks, bool header) {
  if (header) os << "target_id,k,p1,p2,v1,v2\n";
  os.precision(17);
  for (std::size_t id = 0; id < tracks.size(); ++id)
    for (std::size_t k = 0; k < tracks[id].size(); ++k) {
      const auto& x = tracks[id][k];
      os << id << ',' << k << ',' << x(0) << ',' << x(1) << ',' << x(2) << ',' << x(3) << '\n';
    }
}

}  // namespace gi

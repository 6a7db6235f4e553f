#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gi/direction.hpp"
#include "gi/errors.hpp"

namespace gi {

/// [p1, p2, v1, v2]: planar position (m) and velocity (m/step).
using KinematicState = Eigen::Vector4d;
using Observation = Eigen::Vector4d;

template <typename Scalar>
struct TrackEstimateT {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance;
  std::size_t timestep = 0;
};
using TrackEstimate = TrackEstimateT<double>;

/// One timestep of the multi-target tracker. Element order is not an identity.
using MultiTargetFrame = std::vector<TrackEstimate>;

/// Linear-Gaussian state-space model x' = F x + w, y = H x + o.
template <typename Scalar>
struct LinearGaussianModel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix F;
  Matrix Q;
  Matrix H;
  Matrix R;
  Vector prior_mean;
  Matrix prior_covariance;
};

/// Planar constant-velocity model with continuous white-noise acceleration
/// of spectral density `accel_density`, full-state observation with
/// isotropic noise std `obs_std`.
LinearGaussianModel<double> constant_velocity_model(double dt, double accel_density, double obs_std,
                                                    const Eigen::Vector4d& prior_mean = Eigen::Vector4d::Zero(),
                                                    double prior_std = 10.0);

/// Integrates a commanded velocity schedule. Returns schedule.size() + 1
/// states; state 0 is the initial state.
std::vector<KinematicState> simulate_track(std::span<const Eigen::Vector2d> velocity_schedule,
                                           double process_noise_std, double dt, std::uint64_t seed,
                                           const KinematicState& initial = KinematicState::Zero());

std::vector<Observation> observe(std::span<const KinematicState> states, double obs_noise_std,
                                 std::uint64_t seed);

namespace detail {

template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!(m - m.transpose()).isZero(1e-9 * (1.0 + m.cwiseAbs().maxCoeff()))) return false;
  Eigen::LLT<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace detail

/// Predict/update recursion; the reported estimate is the posterior mean.
/// The covariance update uses the Joseph form so covariances stay symmetric PSD.
template <typename Scalar>
std::vector<TrackEstimateT<Scalar>> kalman_filter(
    std::span<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> observations,
    const LinearGaussianModel<Scalar>& model) {
  using Matrix = typename LinearGaussianModel<Scalar>::Matrix;
  using Vector = typename LinearGaussianModel<Scalar>::Vector;

  const auto n = model.F.rows();
  if (model.F.cols() != n || model.Q.rows() != n || model.H.cols() != n || model.R.rows() != model.H.rows() ||
      model.prior_mean.size() != n || model.prior_covariance.rows() != n)
    throw ConfigError("kalman_filter: inconsistent model dimensions");
  if (!detail::is_positive_definite(model.Q)) throw ConfigError("kalman_filter: Q is not positive-definite");
  if (!detail::is_positive_definite(model.R)) throw ConfigError("kalman_filter: R is not positive-definite");
  if (!detail::is_positive_definite(model.prior_covariance))
    throw ConfigError("kalman_filter: prior covariance is not positive-definite");

  std::vector<TrackEstimateT<Scalar>> out;
  out.reserve(observations.size());
  Vector x = model.prior_mean;
  Matrix P = model.prior_covariance;
  const Matrix I = Matrix::Identity(n, n);
  for (std::size_t k = 0; k < observations.size(); ++k) {
    const Vector& y = observations[k];
    if (y.size() != model.H.rows()) throw ConfigError("kalman_filter: observation dimension mismatch");
    if (k > 0) {
      x = model.F * x;
      P = model.F * P * model.F.transpose() + model.Q;
    }
    const Matrix S = model.H * P * model.H.transpose() + model.R;
    const Matrix K = P * model.H.transpose() * S.llt().solve(Matrix::Identity(S.rows(), S.cols()));
    x += K * (y - model.H * x);
    const Matrix IKH = I - K * model.H;
    P = IKH * P * IKH.transpose() + K * model.R * K.transpose();
    P = Scalar(0.5) * (P + P.transpose());
    out.push_back({x, P, k});
  }
  return out;
}

/// Convenience overload for the planar 4-state case.
std::vector<TrackEstimate> kalman_filter(std::span<const Observation> observations,
                                         const LinearGaussianModel<double>& model);

/// Nearest canonical direction by cosine similarity; Zero when
/// |v| < zero_threshold.
Direction quantize_velocity(const Eigen::Vector2d& v, double zero_threshold = 0.25);

/// CSV rows (target_id, k, p1, p2, v1, v2); `tracks[i]` is target i.
void write_tracks_csv(std::ostream& os, const std::vector<std::vector<KinematicState>>& tracks,
                      bool header = true);

}  // namespace gi

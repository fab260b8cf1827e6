#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pupiltrack {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filter belief: state (x, dx, y, dy) with covariance P at frame k.
/// P is re-symmetrized after every update.
struct TrackState {
  Eigen::Vector4d s = Eigen::Vector4d::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Zero();
  int k = 0;
};

/// Constant-velocity dynamics s_k = A s_{k-1} + q_k, q ~ N(0, Q).
struct DynamicsModel {
  double T = 1.0;       // sampling period
  Eigen::Matrix4d A;    // [[1,T,0,0],[0,1,0,0],[0,0,1,T],[0,0,0,1]]
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();

  explicit DynamicsModel(double period = 1.0,
                         const Eigen::Matrix4d& process_noise =
                             Eigen::Matrix4d::Zero())
      : T(period), A(transition(period)), Q(process_noise) {}

  static Eigen::Matrix4d transition(double period) {
    Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
    a(0, 1) = period;
    a(2, 3) = period;
    return a;
  }
};

/// Nonlinear observation c_k = h(s_k) + r_k with
/// h_i(s) = exp(-b (m_i - c_prev_i)) * m_i, m = H s.
struct ObservationModel {
  double b = 0.0;                  // attenuation parameter, 1/pixels
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
  Eigen::Vector2d c_prev = Eigen::Vector2d::Zero();  // previous measurement

  static Eigen::Matrix<double, 2, 4> selection() {
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = 1.0;
    h(1, 2) = 1.0;
    return h;
  }
};

struct Measurement {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  bool valid = false;
};

/// Normalized-innovation-squared gate. 9.21 is the chi-square 99% point with
/// two degrees of freedom.
struct GateConfig {
  bool enabled = true;
  double threshold = 9.21;
};

namespace detail {

// The model is meaningless outside this exponent range; clamping keeps the
// arithmetic finite.
inline double clamped_exponent(double b, double m, double c_prev) {
  return std::clamp(-b * (m - c_prev), -30.0, 30.0);
}

inline Eigen::Matrix4d symmetrized(const Eigen::Matrix4d& p) {
  return 0.5 * (p + p.transpose());
}

inline Eigen::Matrix2d inverse_spd2(const Eigen::Matrix2d& s) {
  const double det = s.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) {
    throw NumericalError("EKF: singular innovation covariance");
  }
  Eigen::Matrix2d inv;
  inv << s(1, 1), -s(0, 1), -s(1, 0), s(0, 0);
  return inv / det;
}

}  // namespace detail

/// Initial belief from the first valid detection: zero velocity, diagonal
/// prior covariance.
inline TrackState make_initial_state(
    const Eigen::Vector2d& first_measurement,
    const Eigen::Vector4d& p0_diag = Eigen::Vector4d(4.0, 25.0, 4.0, 25.0)) {
  TrackState state;
  state.s << first_measurement(0), 0.0, first_measurement(1), 0.0;
  state.P = p0_diag.asDiagonal();
  state.k = 0;
  return state;
}

/// Time update: s <- A s, P <- A P A' + Q.
inline TrackState predict(const TrackState& state, const DynamicsModel& dyn) {
  TrackState out;
  out.s = dyn.A * state.s;
  out.P = detail::symmetrized(dyn.A * state.P * dyn.A.transpose() + dyn.Q);
  out.k = state.k + 1;
  return out;
}

/// Predicted measurement h(s).
inline Eigen::Vector2d observe(const Eigen::Vector4d& s,
                               const ObservationModel& obs) {
  const Eigen::Vector2d m(s(0), s(2));
  Eigen::Vector2d h;
  for (int i = 0; i < 2; ++i) {
    h(i) = std::exp(detail::clamped_exponent(obs.b, m(i), obs.c_prev(i))) * m(i);
  }
  return h;
}

/// Jacobian of h at s: row i is exp(-b (m_i - c_prev_i)) (1 - b m_i) times
/// the corresponding row of H.
inline Eigen::Matrix<double, 2, 4> observe_jacobian(const Eigen::Vector4d& s,
                                                    const ObservationModel& obs) {
  const Eigen::Vector2d m(s(0), s(2));
  Eigen::Matrix<double, 2, 4> jac = Eigen::Matrix<double, 2, 4>::Zero();
  for (int i = 0; i < 2; ++i) {
    const double factor =
        std::exp(detail::clamped_exponent(obs.b, m(i), obs.c_prev(i))) *
        (1.0 - obs.b * m(i));
    jac(i, 2 * i) = factor;
  }
  return jac;
}

/// Measurement update. Advances obs.c_prev to the accepted measurement.
inline TrackState update(const TrackState& pred, const Measurement& meas,
                         ObservationModel& obs) {
  const Eigen::Matrix<double, 2, 4> jac = observe_jacobian(pred.s, obs);
  const Eigen::Matrix2d s_cov = jac * pred.P * jac.transpose() + obs.R;
  const Eigen::Matrix2d s_inv = detail::inverse_spd2(s_cov);
  const Eigen::Matrix<double, 4, 2> gain = pred.P * jac.transpose() * s_inv;

  TrackState out;
  out.s = pred.s + gain * (meas.c - observe(pred.s, obs));
  out.P = detail::symmetrized(
      (Eigen::Matrix4d::Identity() - gain * jac) * pred.P);
  out.k = pred.k;
  obs.c_prev = meas.c;
  return out;
}

/// One frame: predict, then update if the measurement is valid and passes the
/// gate; otherwise coast on the prediction, advancing c_prev to H s.
inline TrackState step_frame(const TrackState& state, const Measurement& meas,
                             const DynamicsModel& dyn, ObservationModel& obs,
                             const GateConfig& gate = {}) {
  TrackState pred = predict(state, dyn);
  if (meas.valid) {
    bool accept = true;
    if (gate.enabled) {
      const Eigen::Matrix<double, 2, 4> jac = observe_jacobian(pred.s, obs);
      const Eigen::Matrix2d s_cov = jac * pred.P * jac.transpose() + obs.R;
      const Eigen::Vector2d innovation = meas.c - observe(pred.s, obs);
      const double nis =
          innovation.dot(detail::inverse_spd2(s_cov) * innovation);
      accept = nis <= gate.threshold;
    }
    if (accept) return update(pred, meas, obs);
  }
  obs.c_prev = Eigen::Vector2d(pred.s(0), pred.s(2));
  return pred;
}

}  // namespace pupiltrack

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pupiltrack/ekf.hpp"

namespace pupiltrack {

class EmDivergenceError : public std::runtime_error {
 public:
  EmDivergenceError(int iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Least-mean-squares fit of the observation parameter b on paired states and
/// measurements: minimizes sum_k |c_k - h(s_k; c_{k-1}, b)|^2 over [0, b_max].
/// A coarse grid seeds a bracket, refined by golden-section search; exact ties
/// resolve toward the smaller b.
inline double fit_b(std::span<const Eigen::Vector4d> states,
                    std::span<const Eigen::Vector2d> measurements,
                    double b_max = 0.1) {
  if (states.size() != measurements.size()) {
    throw std::invalid_argument("fit_b: states/measurements size mismatch");
  }
  if (states.size() < 2) {
    throw std::invalid_argument("fit_b: need at least 2 paired samples");
  }
  if (b_max <= 0.0) throw std::invalid_argument("fit_b: b_max must be > 0");

  const auto residual_sum = [&](double b) {
    ObservationModel model;
    model.b = b;
    long double total = 0.0;
    for (std::size_t k = 1; k < states.size(); ++k) {
      model.c_prev = measurements[k - 1];
      total += (measurements[k] - observe(states[k], model)).squaredNorm();
    }
    return static_cast<double>(total);
  };

  constexpr int kGridPoints = 256;
  int best = 0;
  double best_value = residual_sum(0.0);
  for (int i = 1; i < kGridPoints; ++i) {
    const double value = residual_sum(b_max * i / (kGridPoints - 1));
    if (value < best_value) {
      best_value = value;
      best = i;
    }
  }
  double lo = b_max * std::max(0, best - 1) / (kGridPoints - 1);
  double hi = b_max * std::min(kGridPoints - 1, best + 1) / (kGridPoints - 1);

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = residual_sum(c);
  double fd = residual_sum(d);
  while (hi - lo > 1e-8) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = residual_sum(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = residual_sum(d);
    }
  }
  return lo;
}

struct EmResult {
  Eigen::Matrix4d Q;
  Eigen::Matrix2d R;
  /// Observed-data log-likelihood under the parameters entering each
  /// iteration (before that iteration's M-step).
  std::vector<double> log_likelihood;
};

namespace detail {

template <int N>
Eigen::Matrix<double, N, N> psd_projected(const Eigen::Matrix<double, N, N>& m,
                                          double floor) {
  const Eigen::Matrix<double, N, N> sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> eigs(sym);
  const auto values = eigs.eigenvalues().cwiseMax(floor);
  return eigs.eigenvectors() * values.asDiagonal() *
         eigs.eigenvectors().transpose();
}

}  // namespace detail

/// Estimates the noise covariances (Q, R) by EM on a measurement sequence.
///
/// E-step: EKF forward pass with the current covariances followed by a
/// Rauch-Tung-Striebel backward pass (the dynamics are linear, so the
/// smoother gains are exact). M-step: closed-form covariance re-estimation
/// from smoothed state moments; the measurement residuals are linearized at
/// the smoothed states. Runs a fixed iteration budget; the returned matrices
/// are symmetrized and eigenvalue-floored.
inline EmResult em_fit(std::span<const Eigen::Vector2d> measurements,
                       const DynamicsModel& dyn, const ObservationModel& obs,
                       int iterations,
                       const Eigen::Vector4d& p0_diag = Eigen::Vector4d(
                           4.0, 25.0, 4.0, 25.0)) {
  const std::size_t n = measurements.size();
  if (n < 10) {
    throw std::invalid_argument("em_fit: need a sequence of length >= 10");
  }
  if (iterations < 1) {
    throw std::invalid_argument("em_fit: iterations must be >= 1");
  }

  constexpr double kPsdFloor = 1e-12;
  const Eigen::Matrix4d a = dyn.A;
  Eigen::Matrix4d q = detail::psd_projected<4>(dyn.Q, kPsdFloor);
  Eigen::Matrix2d r = detail::psd_projected<2>(obs.R, kPsdFloor);

  std::vector<Eigen::Vector4d> s_pred(n), s_filt(n), s_smooth(n);
  std::vector<Eigen::Matrix4d> p_pred(n), p_filt(n), p_smooth(n), gain(n);

  EmResult result{q, r, {}};
  for (int iter = 0; iter < iterations; ++iter) {
    // Forward EKF pass; frame 0 initializes the belief from c_0.
    s_filt[0] = make_initial_state(measurements[0], p0_diag).s;
    p_filt[0] = p0_diag.asDiagonal();
    long double loglik = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
      s_pred[k] = a * s_filt[k - 1];
      p_pred[k] = detail::symmetrized(a * p_filt[k - 1] * a.transpose() + q);

      ObservationModel model;
      model.b = obs.b;
      model.c_prev = measurements[k - 1];
      const Eigen::Matrix<double, 2, 4> jac = observe_jacobian(s_pred[k], model);
      const Eigen::Vector2d innovation =
          measurements[k] - observe(s_pred[k], model);
      const Eigen::Matrix2d s_cov = jac * p_pred[k] * jac.transpose() + r;
      Eigen::Matrix2d s_inv;
      try {
        s_inv = detail::inverse_spd2(s_cov);
      } catch (const NumericalError& e) {
        throw EmDivergenceError(iter, std::string("em_fit: ") + e.what());
      }
      const Eigen::Matrix<double, 4, 2> k_gain =
          p_pred[k] * jac.transpose() * s_inv;
      s_filt[k] = s_pred[k] + k_gain * innovation;
      p_filt[k] = detail::symmetrized(
          (Eigen::Matrix4d::Identity() - k_gain * jac) * p_pred[k]);

      loglik += -0.5 * (innovation.dot(s_inv * innovation) +
                        std::log(s_cov.determinant()) +
                        2.0 * std::log(2.0 * 3.14159265358979323846));
    }
    if (!std::isfinite(static_cast<double>(loglik))) {
      throw EmDivergenceError(iter, "em_fit: non-finite log-likelihood");
    }
    result.log_likelihood.push_back(static_cast<double>(loglik));

    // Backward RTS pass with smoother gains C_k = P_f A' P_pred^{-1}.
    s_smooth[n - 1] = s_filt[n - 1];
    p_smooth[n - 1] = p_filt[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) {
      const Eigen::Matrix4d p_pred_inv =
          p_pred[k + 1].ldlt().solve(Eigen::Matrix4d::Identity());
      gain[k] = p_filt[k] * a.transpose() * p_pred_inv;
      s_smooth[k] = s_filt[k] + gain[k] * (s_smooth[k + 1] - s_pred[k + 1]);
      p_smooth[k] = detail::symmetrized(
          p_filt[k] +
          gain[k] * (p_smooth[k + 1] - p_pred[k + 1]) * gain[k].transpose());
    }

    // M-step from smoothed second moments.
    Eigen::Matrix4d q_acc = Eigen::Matrix4d::Zero();
    Eigen::Matrix2d r_acc = Eigen::Matrix2d::Zero();
    for (std::size_t k = 1; k < n; ++k) {
      const Eigen::Matrix4d second =
          p_smooth[k] + s_smooth[k] * s_smooth[k].transpose();
      const Eigen::Matrix4d second_prev =
          p_smooth[k - 1] + s_smooth[k - 1] * s_smooth[k - 1].transpose();
      const Eigen::Matrix4d cross =
          p_smooth[k] * gain[k - 1].transpose() +
          s_smooth[k] * s_smooth[k - 1].transpose();
      q_acc += second - cross * a.transpose() - a * cross.transpose() +
               a * second_prev * a.transpose();

      ObservationModel model;
      model.b = obs.b;
      model.c_prev = measurements[k - 1];
      const Eigen::Matrix<double, 2, 4> jac =
          observe_jacobian(s_smooth[k], model);
      const Eigen::Vector2d residual =
          measurements[k] - observe(s_smooth[k], model);
      r_acc += residual * residual.transpose() +
               jac * p_smooth[k] * jac.transpose();
    }
    const double count = static_cast<double>(n - 1);
    q = detail::psd_projected<4>(q_acc / count, kPsdFloor);
    r = detail::psd_projected<2>(r_acc / count, kPsdFloor);
    result.Q = q;
    result.R = r;
  }
  return result;
}

}  // namespace pupiltrack

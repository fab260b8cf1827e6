#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace pupiltrack::caa {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

/// Feature matrix: one column per sample, rows are (x, y, intensity).
using FeatureMatrix = Eigen::Matrix3Xd;

// Squared distances are floored before any reciprocal is taken.
inline constexpr double kDistanceFloor = 1e-12;

struct Config {
  int initial_cluster_count = 5;  // C0
  int max_iterations = 100;
  double convergence_epsilon = 1e-4;  // max prototype movement to stop
  double alpha_eta0 = 1.0;            // agglomeration strength eta_0
  double alpha_tau = 10.0;            // decay time constant tau
  double cardinality_epsilon = 0.0;   // <= 0 selects max(5, J/50)
  std::uint32_t seed = 0;

  double effective_cardinality_epsilon(Eigen::Index sample_count) const {
    if (cardinality_epsilon > 0.0) return cardinality_epsilon;
    return std::max(5.0, static_cast<double>(sample_count) / 50.0);
  }

  void validate() const {
    if (initial_cluster_count < 2) {
      throw std::invalid_argument("caa::Config: initial_cluster_count must be >= 2");
    }
    if (max_iterations < 1) {
      throw std::invalid_argument("caa::Config: max_iterations must be >= 1");
    }
    if (convergence_epsilon <= 0.0) {
      throw std::invalid_argument("caa::Config: convergence_epsilon must be > 0");
    }
    if (alpha_tau <= 0.0) {
      throw std::invalid_argument("caa::Config: alpha_tau must be > 0");
    }
    if (alpha_eta0 < 0.0) {
      throw std::invalid_argument("caa::Config: alpha_eta0 must be >= 0");
    }
  }
};

/// Clustering state. Membership columns sum to 1; the cluster count only
/// ever decreases and never reaches 0.
struct State {
  std::vector<Vector3d> prototypes;  // p_c, one per cluster
  MatrixXd memberships;              // u_cj, C x J
  VectorXd cardinalities;            // N_c = sum_j u_cj
  double alpha = 0.0;
  int iteration = 0;

  int cluster_count() const { return static_cast<int>(prototypes.size()); }
};

namespace detail {

inline MatrixXd squared_distances(const FeatureMatrix& features,
                                  const std::vector<Vector3d>& prototypes,
                                  double floor = 0.0) {
  const Eigen::Index c_count = static_cast<Eigen::Index>(prototypes.size());
  MatrixXd d2(c_count, features.cols());
  for (Eigen::Index c = 0; c < c_count; ++c) {
    d2.row(c) = (features.colwise() - prototypes[c])
                    .colwise()
                    .squaredNorm()
                    .cwiseMax(floor);
  }
  return d2;
}

// Fuzzy-c-means memberships (m = 2): u_cj = (1/d2_cj) / sum_k (1/d2_kj).
inline MatrixXd fcm_memberships(const MatrixXd& d2) {
  MatrixXd inv = d2.cwiseInverse();
  Eigen::RowVectorXd colsum = inv.colwise().sum();
  return inv.array().rowwise() / colsum.array();
}

inline VectorXd cardinalities_of(const MatrixXd& memberships) {
  return memberships.rowwise().sum();
}

// alpha schedule: eta0 * exp(-iteration/tau) * [sum u^2 d^2] / [sum N_c^2].
inline double alpha_schedule(const Config& cfg, int iteration,
                             const MatrixXd& memberships, const MatrixXd& d2,
                             const VectorXd& cardinalities) {
  const double intra = memberships.array().square().cwiseProduct(d2.array()).sum();
  const double agglo = cardinalities.squaredNorm();
  if (agglo <= 0.0) return 0.0;
  return cfg.alpha_eta0 * std::exp(-static_cast<double>(iteration) / cfg.alpha_tau) *
         intra / agglo;
}

}  // namespace detail

/// The clustering objective: sum_c sum_j u_cj^2 d^2(f_j, p_c) - alpha sum_c N_c^2.
inline double objective(const FeatureMatrix& features,
                        const std::vector<Vector3d>& prototypes,
                        const MatrixXd& memberships, double alpha) {
  if (memberships.rows() != static_cast<Eigen::Index>(prototypes.size()) ||
      memberships.cols() != features.cols()) {
    throw std::invalid_argument("caa::objective: dimension mismatch");
  }
  const MatrixXd d2 = detail::squared_distances(features, prototypes);
  const double intra = memberships.array().square().cwiseProduct(d2.array()).sum();
  const VectorXd n = detail::cardinalities_of(memberships);
  return intra - alpha * n.squaredNorm();
}

/// Draws C0 distinct feature points as initial prototypes (seeded, without
/// replacement).
inline std::vector<Vector3d> init_prototypes(const FeatureMatrix& features,
                                             int initial_cluster_count,
                                             std::uint32_t seed) {
  const Eigen::Index sample_count = features.cols();
  if (sample_count < initial_cluster_count) {
    throw std::invalid_argument("caa::init_prototypes: need at least C0 samples");
  }
  std::vector<Eigen::Index> indices(sample_count);
  std::iota(indices.begin(), indices.end(), Eigen::Index{0});
  std::mt19937 rng(seed);
  std::vector<Vector3d> prototypes;
  prototypes.reserve(initial_cluster_count);
  for (int i = 0; i < initial_cluster_count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, sample_count - 1);
    std::swap(indices[i], indices[pick(rng)]);
    prototypes.push_back(features.col(indices[i]));
  }
  return prototypes;
}

/// One full update round: memberships (FCM term + agglomeration bias), clamp
/// and renormalize, drop exhausted clusters, move prototypes, refresh alpha.
inline State iterate(State state, const FeatureMatrix& features,
                     const Config& cfg) {
  const Eigen::Index sample_count = features.cols();
  Eigen::Index c_count = static_cast<Eigen::Index>(state.prototypes.size());

  const MatrixXd d2 =
      detail::squared_distances(features, state.prototypes, kDistanceFloor);
  const MatrixXd inv = d2.cwiseInverse();
  const Eigen::RowVectorXd inv_colsum = inv.colwise().sum();

  // u = u_FCM + u_bias, with the bias rewarding clusters whose cardinality
  // exceeds the 1/d^2-weighted average seen from each sample.
  MatrixXd u = inv.array().rowwise() / inv_colsum.array();
  if (state.alpha != 0.0) {
    const Eigen::RowVectorXd n_bar =
        (state.cardinalities.transpose() * inv).array() / inv_colsum.array();
    u += state.alpha *
         inv.cwiseProduct(state.cardinalities.replicate(1, sample_count) -
                          n_bar.replicate(c_count, 1));
  }

  u = u.cwiseMax(0.0).cwiseMin(1.0);
  for (Eigen::Index j = 0; j < sample_count; ++j) {
    const double s = u.col(j).sum();
    if (s > 0.0) {
      u.col(j) /= s;
    } else {
      u.col(j) = inv.col(j) / inv_colsum(j);
    }
  }

  // Merge clusters whose prototypes coincide; otherwise exact symmetry
  // (e.g. all features identical) keeps them tied forever.
  std::vector<Vector3d> prototypes = state.prototypes;
  {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < c_count; ++c) {
      bool merged = false;
      for (Eigen::Index k : keep) {
        if ((prototypes[c] - prototypes[k]).squaredNorm() < 1e-18) {
          u.row(k) += u.row(c);
          merged = true;
          break;
        }
      }
      if (!merged) keep.push_back(c);
    }
    if (keep.size() != static_cast<std::size_t>(c_count)) {
      MatrixXd u2(keep.size(), sample_count);
      std::vector<Vector3d> p2;
      p2.reserve(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        u2.row(i) = u.row(keep[i]);
        p2.push_back(prototypes[keep[i]]);
      }
      u = std::move(u2);
      prototypes = std::move(p2);
      c_count = static_cast<Eigen::Index>(prototypes.size());
    }
  }

  // Discard low-cardinality clusters; a lone survivor is never discarded.
  VectorXd n = detail::cardinalities_of(u);
  const double min_cardinality = cfg.effective_cardinality_epsilon(sample_count);
  {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < c_count; ++c) {
      if (n(c) >= min_cardinality) keep.push_back(c);
    }
    if (keep.empty()) {
      Eigen::Index best = 0;
      n.maxCoeff(&best);
      keep.push_back(best);
    }
    if (keep.size() != static_cast<std::size_t>(c_count)) {
      MatrixXd u2(keep.size(), sample_count);
      std::vector<Vector3d> p2;
      p2.reserve(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        u2.row(i) = u.row(keep[i]);
        p2.push_back(prototypes[keep[i]]);
      }
      u = std::move(u2);
      prototypes = std::move(p2);
      c_count = static_cast<Eigen::Index>(prototypes.size());
      for (Eigen::Index j = 0; j < sample_count; ++j) {
        const double s = u.col(j).sum();
        if (s > 0.0) {
          u.col(j) /= s;
        } else {
          // Sample belonged entirely to discarded clusters; reseat it by
          // plain FCM against the survivors.
          VectorXd dj(c_count);
          for (Eigen::Index c = 0; c < c_count; ++c) {
            dj(c) = std::max((features.col(j) - prototypes[c]).squaredNorm(),
                             kDistanceFloor);
          }
          const VectorXd invj = dj.cwiseInverse();
          u.col(j) = invj / invj.sum();
        }
      }
    }
  }

  // Prototype update: p_c = sum_j u^2 f_j / sum_j u^2.
  const MatrixXd usq = u.cwiseProduct(u);
  for (Eigen::Index c = 0; c < c_count; ++c) {
    prototypes[c] = (features * usq.row(c).transpose()) / usq.row(c).sum();
  }

  state.prototypes = std::move(prototypes);
  state.memberships = std::move(u);
  state.cardinalities = detail::cardinalities_of(state.memberships);
  state.iteration += 1;
  state.alpha = detail::alpha_schedule(
      cfg, state.iteration, state.memberships,
      detail::squared_distances(features, state.prototypes),
      state.cardinalities);
  return state;
}

/// Runs CAA to convergence: starts from C0 seeded prototypes and iterates
/// until the prototypes stop moving (with a stable cluster count) or the
/// iteration budget is exhausted.
inline State run(const FeatureMatrix& features, const Config& cfg) {
  cfg.validate();
  State state;
  state.prototypes =
      init_prototypes(features, cfg.initial_cluster_count, cfg.seed);
  const MatrixXd d2 =
      detail::squared_distances(features, state.prototypes, kDistanceFloor);
  state.memberships = detail::fcm_memberships(d2);
  state.cardinalities = detail::cardinalities_of(state.memberships);
  state.iteration = 0;
  state.alpha =
      detail::alpha_schedule(cfg, 0, state.memberships, d2, state.cardinalities);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const std::vector<Vector3d> previous = state.prototypes;
    state = iterate(std::move(state), features, cfg);
    if (state.prototypes.size() != previous.size()) continue;
    double movement = 0.0;
    for (std::size_t c = 0; c < previous.size(); ++c) {
      movement = std::max(movement, (state.prototypes[c] - previous[c]).norm());
    }
    if (movement < cfg.convergence_epsilon) break;
  }
  return state;
}

}  // namespace pupiltrack::caa

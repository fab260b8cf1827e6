#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pupiltrack/caa.hpp"

using namespace pupiltrack;
using Eigen::Vector3d;

namespace {

caa::FeatureMatrix random_features(int count, std::mt19937& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  caa::FeatureMatrix f(3, count);
  for (int j = 0; j < count; ++j) {
    f.col(j) = Vector3d(unit(rng), unit(rng), unit(rng));
  }
  return f;
}

caa::FeatureMatrix two_blobs(std::uint32_t seed, int per_blob = 80,
                             double spread = 0.02) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, spread);
  caa::FeatureMatrix f(3, 2 * per_blob);
  const Vector3d mean_a(0.1, 0.1, 0.1);
  const Vector3d mean_b(0.9, 0.9, 0.9);
  for (int j = 0; j < per_blob; ++j) {
    f.col(j) = mean_a + Vector3d(gauss(rng), gauss(rng), gauss(rng));
    f.col(per_blob + j) = mean_b + Vector3d(gauss(rng), gauss(rng), gauss(rng));
  }
  return f;
}

// A state whose memberships are plain FCM w.r.t. the given prototypes.
caa::State fcm_state(const caa::FeatureMatrix& features,
                     std::vector<Vector3d> prototypes) {
  caa::State state;
  state.prototypes = std::move(prototypes);
  const auto step = oracles::fcm_step(features, state.prototypes);
  state.memberships = step.memberships;
  state.cardinalities = state.memberships.rowwise().sum();
  state.alpha = 0.0;
  state.iteration = 0;
  return state;
}

}  // namespace

TEST_CASE("objective matches a hand-evaluated sum", "[caa]") {
  caa::FeatureMatrix f(3, 2);
  f.col(0) = Vector3d(0.0, 0.0, 0.0);
  f.col(1) = Vector3d(1.0, 1.0, 1.0);
  const std::vector<Vector3d> prototypes{Vector3d(0.5, 0.5, 0.5)};
  const Eigen::MatrixXd u = Eigen::MatrixXd::Ones(1, 2);
  CHECK_THAT(caa::objective(f, prototypes, u, 0.0),
             Catch::Matchers::WithinAbs(1.5, 1e-12));
}

TEST_CASE("objective decomposes into intra term minus alpha reward", "[caa]") {
  std::mt19937 rng(17);
  const caa::FeatureMatrix f = random_features(25, rng);
  const std::vector<Vector3d> prototypes{f.col(3), f.col(11), f.col(20)};
  Eigen::MatrixXd u(3, 25);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  for (int j = 0; j < 25; ++j) {
    for (int c = 0; c < 3; ++c) u(c, j) = unit(rng);
    u.col(j) /= u.col(j).sum();
  }

  double intra = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 25; ++j) {
      intra += u(c, j) * u(c, j) * (f.col(j) - prototypes[c]).squaredNorm();
    }
  }
  double reward = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double n = u.row(c).sum();
    reward += n * n;
  }

  CHECK_THAT(caa::objective(f, prototypes, u, 0.0),
             Catch::Matchers::WithinAbs(intra, 1e-12));
  CHECK_THAT(caa::objective(f, prototypes, u, 2.0),
             Catch::Matchers::WithinAbs(intra - 2.0 * reward, 1e-12));
}

TEST_CASE("objective is zero when every feature sits on the prototype", "[caa]") {
  caa::FeatureMatrix f(3, 4);
  for (int j = 0; j < 4; ++j) f.col(j) = Vector3d(0.2, 0.4, 0.6);
  const std::vector<Vector3d> prototypes{Vector3d(0.2, 0.4, 0.6)};
  const Eigen::MatrixXd u = Eigen::MatrixXd::Ones(1, 4);
  CHECK(caa::objective(f, prototypes, u, 0.0) == 0.0);
}

TEST_CASE("objective rejects mismatched dimensions", "[caa]") {
  std::mt19937 rng(1);
  const caa::FeatureMatrix f = random_features(6, rng);
  const std::vector<Vector3d> prototypes{f.col(0), f.col(1)};
  CHECK_THROWS_AS(caa::objective(f, prototypes, Eigen::MatrixXd::Ones(3, 6), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(caa::objective(f, prototypes, Eigen::MatrixXd::Ones(2, 5), 0.0),
                  std::invalid_argument);
}

TEST_CASE("init_prototypes draws distinct samples deterministically", "[caa]") {
  std::mt19937 rng(2);
  const caa::FeatureMatrix f = random_features(12, rng);

  const auto a = caa::init_prototypes(f, 5, 7);
  const auto b = caa::init_prototypes(f, 5, 7);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // Every prototype is one of the features, and none repeats.
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool found = false;
    for (int j = 0; j < f.cols(); ++j) {
      if ((a[i] - f.col(j)).norm() == 0.0) found = true;
    }
    CHECK(found);
    for (std::size_t k = i + 1; k < a.size(); ++k) {
      CHECK((a[i] - a[k]).norm() > 0.0);
    }
  }

  // C0 = J yields a permutation of the features.
  const auto all = caa::init_prototypes(f, 12, 3);
  REQUIRE(all.size() == 12);
  std::vector<bool> used(12, false);
  for (const auto& p : all) {
    for (int j = 0; j < 12; ++j) {
      if (!used[j] && (p - f.col(j)).norm() == 0.0) {
        used[j] = true;
        break;
      }
    }
  }
  CHECK(std::all_of(used.begin(), used.end(), [](bool u) { return u; }));

  CHECK_THROWS_AS(caa::init_prototypes(f, 13, 0), std::invalid_argument);
}

TEST_CASE("iterate with alpha 0 reproduces one fuzzy-c-means round", "[caa]") {
  std::mt19937 rng(5);
  const caa::FeatureMatrix f = random_features(30, rng);
  const std::vector<Vector3d> prototypes{f.col(1), f.col(10), f.col(22)};
  caa::State state = fcm_state(f, prototypes);

  caa::Config cfg;
  cfg.alpha_eta0 = 0.0;           // keeps alpha at zero
  cfg.cardinality_epsilon = 1e-9; // no discards
  const caa::State next = caa::iterate(state, f, cfg);

  const auto oracle = oracles::fcm_step(f, prototypes);
  REQUIRE(next.cluster_count() == 3);
  CHECK((next.memberships - oracle.memberships).cwiseAbs().maxCoeff() < 1e-12);
  for (int c = 0; c < 3; ++c) {
    CHECK((next.prototypes[c] - oracle.prototypes[c]).norm() < 1e-12);
  }
  CHECK(next.alpha == 0.0);
}

TEST_CASE("membership columns sum to one after every iterate", "[caa]") {
  const caa::FeatureMatrix f = two_blobs(8);
  caa::Config cfg;
  cfg.seed = 4;
  caa::State state = fcm_state(f, caa::init_prototypes(f, 5, cfg.seed));
  state.alpha = 0.05;  // nonzero bias exercises the clamp + renormalize path
  for (int it = 0; it < 15; ++it) {
    state = caa::iterate(state, f, cfg);
    const Eigen::RowVectorXd sums = state.memberships.colwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("identical features collapse to one cluster at the common point", "[caa]") {
  caa::FeatureMatrix f(3, 12);
  for (int j = 0; j < 12; ++j) f.col(j) = Vector3d(0.3, 0.4, 0.5);
  caa::Config cfg;
  cfg.initial_cluster_count = 3;
  const caa::State state = caa::run(f, cfg);
  REQUIRE(state.cluster_count() == 1);
  CHECK((state.prototypes[0] - Vector3d(0.3, 0.4, 0.5)).norm() < 1e-12);
  CHECK((state.memberships.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("two separated blobs agglomerate from five clusters to two", "[caa]") {
  const caa::FeatureMatrix f = two_blobs(42);
  caa::Config cfg;
  cfg.initial_cluster_count = 5;
  cfg.seed = 42;
  const caa::State state = caa::run(f, cfg);
  REQUIRE(state.cluster_count() == 2);

  const auto oracle = oracles::two_means(f, Vector3d(0.1, 0.1, 0.1),
                                         Vector3d(0.9, 0.9, 0.9));
  for (const auto& p : state.prototypes) {
    const double d = std::min((p - oracle[0]).norm(), (p - oracle[1]).norm());
    CHECK(d < 0.05);
  }
}

TEST_CASE("a single tight blob agglomerates to one cluster", "[caa]") {
  std::mt19937 rng(9);
  std::normal_distribution<double> gauss(0.0, 0.02);
  caa::FeatureMatrix f(3, 90);
  for (int j = 0; j < 90; ++j) {
    f.col(j) = Vector3d(0.5 + gauss(rng), 0.5 + gauss(rng), 0.5 + gauss(rng));
  }
  caa::Config cfg;
  cfg.initial_cluster_count = 5;
  cfg.seed = 1;
  const caa::State state = caa::run(f, cfg);
  CHECK(state.cluster_count() == 1);
}

TEST_CASE("run rejects fewer samples than initial clusters", "[caa]") {
  caa::FeatureMatrix f(3, 1);
  f.col(0) = Vector3d(0.1, 0.2, 0.3);
  caa::Config cfg;
  CHECK_THROWS_AS(caa::run(f, cfg), std::invalid_argument);
}

TEST_CASE("objective is non-increasing in the pure FCM regime", "[caa]") {
  std::mt19937 rng(33);
  const caa::FeatureMatrix f = random_features(60, rng);
  caa::Config cfg;
  cfg.alpha_eta0 = 0.0;
  cfg.cardinality_epsilon = 1e-9;
  caa::State state = fcm_state(f, caa::init_prototypes(f, 4, 12));
  double previous = caa::objective(f, state.prototypes, state.memberships, 0.0);
  for (int it = 0; it < 20; ++it) {
    state = caa::iterate(state, f, cfg);
    const double current =
        caa::objective(f, state.prototypes, state.memberships, 0.0);
    CHECK(current <= previous + 1e-12);
    previous = current;
  }
}

TEST_CASE("cluster count never increases and never reaches zero", "[caa]") {
  const caa::FeatureMatrix f = two_blobs(91);
  caa::Config cfg;
  cfg.seed = 6;
  caa::State state = fcm_state(f, caa::init_prototypes(f, 5, cfg.seed));
  int previous = state.cluster_count();
  for (int it = 0; it < 40; ++it) {
    state = caa::iterate(state, f, cfg);
    CHECK(state.cluster_count() <= previous);
    CHECK(state.cluster_count() >= 1);
    previous = state.cluster_count();
  }
}

TEST_CASE("prototypes stay inside the feature bounding box", "[caa]") {
  std::mt19937 rng(55);
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const caa::FeatureMatrix f = random_features(70, rng);
    caa::Config cfg;
    cfg.seed = seed;
    const caa::State state = caa::run(f, cfg);
    const Vector3d lo = f.rowwise().minCoeff();
    const Vector3d hi = f.rowwise().maxCoeff();
    for (const auto& p : state.prototypes) {
      for (int d = 0; d < 3; ++d) {
        CHECK(p(d) >= lo(d) - 1e-12);
        CHECK(p(d) <= hi(d) + 1e-12);
      }
    }
  }
}

TEST_CASE("run is deterministic for fixed features and config", "[caa]") {
  const caa::FeatureMatrix f = two_blobs(14);
  caa::Config cfg;
  cfg.seed = 23;
  const caa::State a = caa::run(f, cfg);
  const caa::State b = caa::run(f, cfg);
  REQUIRE(a.cluster_count() == b.cluster_count());
  CHECK(a.memberships == b.memberships);
  for (int c = 0; c < a.cluster_count(); ++c) {
    CHECK(a.prototypes[c] == b.prototypes[c]);
  }
}

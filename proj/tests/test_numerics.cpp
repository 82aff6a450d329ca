#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "procsim/errors.hpp"
#include "procsim/numerics.hpp"
#include "support.hpp"

using namespace procsim;

namespace {

// Exhaustive Alg. 1 cost over the 1-indexed midpoint candidates 2..n-2.
struct BruteOtsu {
  double tau;
  double cost;
};

BruteOtsu brute_otsu(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  BruteOtsu best{0.0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 2; i + 2 <= n; ++i) {
    const double t = 0.5 * (v[i - 1] + v[i]);
    std::vector<double> c0, c1;
    for (double x : v) (x < t ? c0 : c1).push_back(x);
    auto var = [](const std::vector<double>& c) {
      double m = 0.0;
      for (double x : c) m += x;
      m /= static_cast<double>(c.size());
      double s = 0.0;
      for (double x : c) s += (x - m) * (x - m);
      return s / static_cast<double>(c.size());
    };
    if (c0.size() < 2 || c1.size() < 2) continue;
    const double cost = (c0.size() * var(c0) + c1.size() * var(c1)) / static_cast<double>(n);
    if (cost < best.cost) best = {t, cost};
  }
  return best;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("lambert_w0 fixed points") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(lambert_w0(std::numbers::e) == doctest::Approx(1.0).epsilon(1e-15));
  // Omega constant from an independent bisection.
  const double omega = testing::lambert_bisect(1.0);
  CHECK(omega == doctest::Approx(0.5671432904).epsilon(1e-10));
  CHECK(lambert_w0(1.0) == doctest::Approx(omega).epsilon(1e-14));
}

TEST_CASE("lambert_w0 residual and monotonicity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 6.0);
  std::vector<double> xs;
  for (int i = 0; i < 2000; ++i) xs.push_back(std::pow(10.0, u(rng)));
  std::sort(xs.begin(), xs.end());
  double prev = -1.0;
  for (double x : xs) {
    const double w = lambert_w0(x);
    CHECK(std::abs(w * std::exp(w) - x) <= 1e-12 * std::max(1.0, x));
    CHECK(w >= prev);
    prev = w;
  }
}

TEST_CASE("lambert_w0 negative branch") {
  const double branch = -1.0 / std::numbers::e;
  CHECK(lambert_w0(branch) == doctest::Approx(-1.0).epsilon(1e-7));
  for (double x : {-0.3, -0.2, -0.1, -1e-3, -1e-8}) {
    const double w = lambert_w0(x);
    CHECK(w >= -1.0);
    CHECK(std::abs(w * std::exp(w) - x) <= 1e-14);
  }
  CHECK_THROWS_AS(lambert_w0(-0.37), DomainError);
  CHECK_THROWS_AS(lambert_w0(std::nan("")), DomainError);
}

TEST_CASE("population_variance") {
  CHECK(population_variance(Eigen::Vector3d(1, 1, 1)) == 0.0);
  CHECK(population_variance(Eigen::Vector2d(0, 2)) == 1.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(5.0, 2.0);
  Eigen::VectorXd v(10);
  for (auto& x : v) x = g(rng);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 10.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  CHECK(population_variance(v) == doctest::Approx(ss / 10.0).epsilon(1e-14));

  CHECK_THROWS_AS(population_variance(Eigen::VectorXd()), DomainError);
}

TEST_CASE("otsu on the four-point example") {
  const Eigen::Vector4d x(1, 2, 10, 11);
  const auto r = otsu_threshold(x);
  const auto oracle = brute_otsu({1, 2, 10, 11});
  CHECK(r.threshold == 6.0);
  CHECK(oracle.tau == 6.0);
  CHECK(r.cost == doctest::Approx(oracle.cost));
  CHECK(r.candidate_thresholds.size() == 1);
  CHECK(r.low_cluster == std::vector<std::size_t>{0, 1});
  CHECK(r.high_cluster == std::vector<std::size_t>{2, 3});
}

TEST_CASE("otsu translation equivariance and permutation invariance") {
  const Eigen::Vector4d x(1, 2, 10, 11);
  for (double c : {-1000.0, -3.5, 0.25, 512.0}) {
    CHECK(otsu_threshold(Eigen::Vector4d(x.array() + c)).threshold == 6.0 + c);
  }
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(17);
  for (auto& e : v) e = g(rng);
  const auto base = otsu_threshold(v);
  std::vector<int> perm(17);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::VectorXd p(17);
  for (int i = 0; i < 17; ++i) p(i) = v(perm[i]);
  const auto shuffled = otsu_threshold(p);
  CHECK(shuffled.threshold == base.threshold);
  CHECK(shuffled.cost == base.cost);
  CHECK(shuffled.low_cluster.size() == base.low_cluster.size());
}

TEST_CASE("otsu result invariants and scale covariance") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + trial % 30;
    Eigen::VectorXd v(n);
    for (auto& e : v) e = ex(rng);
    const auto r = otsu_threshold(v);
    CHECK(std::find(r.candidate_thresholds.begin(), r.candidate_thresholds.end(), r.threshold) !=
          r.candidate_thresholds.end());
    CHECK(r.low_cluster.size() + r.high_cluster.size() == static_cast<std::size_t>(n));
    CHECK(r.low_cluster.size() >= 2);
    CHECK(r.high_cluster.size() >= 2);
    Eigen::VectorXd lo(r.low_cluster.size()), hi(r.high_cluster.size());
    for (std::size_t i = 0; i < r.low_cluster.size(); ++i) lo(i) = v(r.low_cluster[i]);
    for (std::size_t i = 0; i < r.high_cluster.size(); ++i) hi(i) = v(r.high_cluster[i]);
    CHECK(lo.maxCoeff() < r.threshold);
    CHECK(hi.minCoeff() >= r.threshold);
    const double recomputed = (lo.size() * population_variance(lo) + hi.size() * population_variance(hi)) / n;
    CHECK(r.cost == doctest::Approx(recomputed).epsilon(1e-12));
    CHECK(r.cost == doctest::Approx(brute_otsu(std::vector<double>(v.begin(), v.end())).cost).epsilon(1e-12));
    CHECK(otsu_threshold(Eigen::VectorXd(3.0 * v)).cost == doctest::Approx(9.0 * r.cost).epsilon(1e-12));
  }
}

TEST_CASE("otsu preconditions") {
  CHECK_THROWS_AS(otsu_threshold(Eigen::Vector3d(1, 2, 3)), DomainError);
  CHECK_THROWS_AS(otsu_threshold(Eigen::Vector4d(1, 2, std::numeric_limits<double>::infinity(), 3)), DomainError);
}

TEST_CASE("otsu ties resolve to the smallest threshold") {
  // Even length: the middle split is the unique optimum.
  const Eigen::VectorXd v = (Eigen::VectorXd(6) << 0, 1, 2, 3, 4, 5).finished();
  CHECK(otsu_threshold(v).threshold == 2.5);
  // Odd length: 1.5 and 2.5 cost the same.
  const Eigen::VectorXd w = (Eigen::VectorXd(5) << 0, 1, 2, 3, 4).finished();
  CHECK(otsu_threshold(w).threshold == 1.5);
}

}  // TEST_SUITE

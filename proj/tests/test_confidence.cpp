#include <doctest.h>

#include <numbers>
#include <random>

#include "procsim/confidence.hpp"
#include "procsim/errors.hpp"
#include "support.hpp"

using namespace procsim;

TEST_SUITE("confidence") {

TEST_CASE("global average threshold accumulates") {
  auto state = ThresholdState::for_strategy(ThresholdStrategy::global_average);
  auto first = compute_threshold(Eigen::Vector3d(1, 2, 3), state);
  CHECK(first.tau == 2.0);
  CHECK(first.state.running_sum == 6.0);
  CHECK(first.state.running_count == 3);
  auto second = compute_threshold(Eigen::Vector2d(5, 5), first.state);
  CHECK(second.tau == doctest::Approx(3.2));
  CHECK(second.state.running_sum == 16.0);
  CHECK(second.state.running_count == 5);
}

TEST_CASE("otsu threshold strategy") {
  auto out = compute_threshold(Eigen::Vector4d(1, 2, 10, 11), ThresholdState{});
  CHECK(out.tau == 6.0);
  CHECK_FALSE(out.fell_back_to_otsu);
  CHECK_THROWS_AS(compute_threshold(Eigen::Vector3d(1, 2, 3), ThresholdState{}), DomainError);
}

TEST_CASE("sample confidence values") {
  CHECK(sample_confidence(0.5, 1.0, 0.3) == 1.0);
  CHECK(sample_confidence(0.5, 1.0, 30.0) == 1.0);
  const double lambda = 0.7;
  CHECK(sample_confidence(1.0 + 2 * lambda, 1.0, lambda) ==
        doctest::Approx(std::exp(-testing::lambert_bisect(1.0))).epsilon(1e-13));
  CHECK(sample_confidence(1.0 + 2 * lambda, 1.0, lambda) == doctest::Approx(0.5671432904).epsilon(1e-9));
  CHECK(sample_confidence(2 * std::numbers::e * lambda, 0.0, lambda) ==
        doctest::Approx(1.0 / std::numbers::e).epsilon(1e-14));
  CHECK_THROWS_AS(sample_confidence(1.0, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(sample_confidence(std::nan(""), 0.0, 1.0), DomainError);
}

TEST_CASE("superloss pair confidence") {
  CHECK(superloss_pair_confidence(3.0, 3.0, 1.0, kBeta0Constrained) == 1.0);
  CHECK(superloss_pair_confidence(3.0, 3.0, 1.0, kBeta0Unconstrained) == 1.0);
  // Clamped at -2/e: W(-1/e) = -1, so sigma = e.
  CHECK(superloss_pair_confidence(0.0, 5.0, 1.0, kBeta0Unconstrained) ==
        doctest::Approx(std::numbers::e).epsilon(1e-7));
  CHECK(superloss_pair_confidence(2.0, 0.0, 1.0, kBeta0Constrained) ==
        doctest::Approx(std::exp(-testing::lambert_bisect(1.0))).epsilon(1e-13));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0), l(0.01, 10.0);
  for (int i = 0; i < 500; ++i) {
    const double loss = u(rng), tau = u(rng), lambda = l(rng);
    CHECK(superloss_pair_confidence(loss, tau, lambda, 0.0) ==
          doctest::Approx(sample_confidence(loss, tau, lambda)).epsilon(1e-15));
  }
}

TEST_CASE("batch confidences compose threshold and map") {
  ConfidenceConfig cfg;
  const auto out = batch_confidences(Eigen::Vector4d(1, 2, 10, 11), cfg, ThresholdState{});
  CHECK(out.tau == 6.0);
  CHECK(out.sigma(0) == 1.0);
  CHECK(out.sigma(1) == 1.0);
  CHECK(out.sigma(2) == doctest::Approx(std::exp(-testing::lambert_bisect(2.0))).epsilon(1e-13));
  CHECK(out.sigma(3) == doctest::Approx(std::exp(-testing::lambert_bisect(2.5))).epsilon(1e-13));

  cfg.lambda = 1e9;
  const auto flat = batch_confidences(Eigen::Vector4d(1, 2, 10, 11), cfg, ThresholdState{});
  CHECK(flat.sigma.minCoeff() >= 0.999999);

  cfg.lambda = 1e-9;
  const auto sharp = batch_confidences(Eigen::Vector4d(1, 2, 10, 11), cfg, ThresholdState{});
  CHECK(sharp.sigma(0) > 1 - 1e-6);
  CHECK(sharp.sigma(3) < 1e-6);
}

TEST_CASE("confidence ordering within a batch") {
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> g(2.0, 1.0);
  Eigen::VectorXd losses(40);
  for (auto& x : losses) x = g(rng);
  const auto out = batch_confidences(losses, ConfidenceConfig{}, ThresholdState{});
  for (int i = 0; i < 40; ++i) {
    CHECK(out.sigma(i) >= 0.0);
    CHECK(out.sigma(i) <= 1.0);
    for (int j = 0; j < 40; ++j) {
      if (losses(i) <= losses(j)) CHECK(out.sigma(i) >= out.sigma(j));
      if (out.sigma(i) > out.sigma(j)) CHECK(losses(i) < losses(j));
    }
  }
}

TEST_CASE("translation leaves confidences unchanged") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd losses(16);
  for (auto& x : losses) x = std::round(u(rng) * 64.0) / 8.0;
  const auto base = batch_confidences(losses, ConfidenceConfig{}, ThresholdState{});
  for (double c : {-256.0, 3.0, 100.0}) {
    const auto shifted = batch_confidences(Eigen::VectorXd(losses.array() + c), ConfidenceConfig{}, ThresholdState{});
    CHECK((shifted.sigma - base.sigma).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("gmm threshold separates a clear mixture") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> a(0.0, 0.1), b(10.0, 0.1);
  Eigen::VectorXd v(1000);
  for (int i = 0; i < 500; ++i) v(i) = a(rng);
  for (int i = 500; i < 1000; ++i) v(i) = b(rng);
  const auto params = fit_two_gaussians(v);
  CHECK(params.low.mean == doctest::Approx(0.0).epsilon(0.05));
  CHECK(params.high.mean == doctest::Approx(10.0).epsilon(0.01));
  CHECK(params.low.weight + params.high.weight == doctest::Approx(1.0));
  CHECK(params.low.variance > 0.0);

  const auto out = compute_threshold(v, ThresholdState::for_strategy(ThresholdStrategy::gmm));
  CHECK(out.tau > 1.0);
  CHECK(out.tau < 9.0);
  CHECK_FALSE(out.fell_back_to_otsu);
  REQUIRE(out.state.gmm);
}

TEST_CASE("gmm falls back to otsu when EM cannot separate") {
  const Eigen::VectorXd v = Eigen::VectorXd::Constant(8, 2.0);
  Eigen::VectorXd w = v;
  w(7) = 2.5;
  const auto out = compute_threshold(w, ThresholdState::for_strategy(ThresholdStrategy::gmm));
  if (out.fell_back_to_otsu) CHECK(out.tau == otsu_threshold(w).threshold);
  CHECK(std::isfinite(out.tau));
}

TEST_CASE("config validation and names") {
  ConfidenceConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beta0 = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.beta0 = kBeta0Unconstrained;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  for (auto s : {ThresholdStrategy::otsu, ThresholdStrategy::global_average, ThresholdStrategy::gmm}) {
    CHECK(parse_threshold_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_threshold_strategy("median"), ConfigError);
}

}  // TEST_SUITE

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "procsim/numerics.hpp"

namespace procsim {

enum class ThresholdStrategy { otsu, global_average, gmm };

std::string_view to_string(ThresholdStrategy strategy);
ThresholdStrategy parse_threshold_strategy(std::string_view name);

/// Lower clamp of the confidence argument. Zero bounds sigma to [0, 1];
/// -2/e reproduces the unconstrained pair-confidence formula.
inline constexpr double kBeta0Constrained = 0.0;
inline constexpr double kBeta0Unconstrained = -2.0 / std::numbers::e;

struct ConfidenceConfig {
  double lambda = 1.0;
  double beta0 = kBeta0Constrained;
  ThresholdStrategy strategy = ThresholdStrategy::otsu;

  void validate() const;
};

struct GaussianComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 0.5;
};

struct GmmParams {
  GaussianComponent low;
  GaussianComponent high;
  int iterations = 0;
  bool converged = false;
};

struct ThresholdState {
  ThresholdStrategy strategy = ThresholdStrategy::otsu;
  double running_sum = 0.0;
  std::uint64_t running_count = 0;
  std::optional<GmmParams> gmm;

  static ThresholdState for_strategy(ThresholdStrategy s) {
    ThresholdState state;
    state.strategy = s;
    return state;
  }
};

struct ThresholdOutcome {
  double tau = 0.0;
  ThresholdState state;
  // gmm only: EM failed and the Otsu threshold was used instead.
  bool fell_back_to_otsu = false;
};

/// Fits a two-component 1-D Gaussian mixture by EM. Means start at the 25th
/// and 75th percentiles; stops after 100 iterations or when the
/// log-likelihood changes by less than 1e-8.
GmmParams fit_two_gaussians(const LossVector<double>& values);

/// Point between the two means where the posterior responsibilities are
/// equal, or nullopt when the fitted posteriors never cross there.
std::optional<double> gmm_decision_threshold(const GmmParams& params);

ThresholdOutcome compute_threshold(const LossVector<double>& losses, ThresholdState state);

/// exp(-W([(loss - tau) / (2 lambda)]_+)); exactly 1 whenever loss <= tau.
template <typename Scalar>
Scalar sample_confidence(Scalar loss, Scalar tau, Scalar lambda) {
  if (!std::isfinite(loss) || !std::isfinite(tau)) {
    throw DomainError("sample_confidence: non-finite input");
  }
  if (!(lambda > Scalar(0))) throw DomainError("sample_confidence: lambda must be positive");
  const Scalar arg = (loss - tau) / (Scalar(2) * lambda);
  if (!(arg > Scalar(0))) return Scalar(1);
  return std::exp(-lambert_w0(arg));
}

/// exp(-W(max(beta0, (loss - tau) / lambda) / 2)). With beta0 = -2/e the
/// value can reach e for small losses; with beta0 = 0 it equals
/// sample_confidence.
template <typename Scalar>
Scalar superloss_pair_confidence(Scalar loss, Scalar tau, Scalar lambda, Scalar beta0) {
  if (!std::isfinite(loss) || !std::isfinite(tau) || !std::isfinite(beta0)) {
    throw DomainError("superloss_pair_confidence: non-finite input");
  }
  if (!(lambda > Scalar(0))) {
    throw DomainError("superloss_pair_confidence: lambda must be positive");
  }
  const Scalar arg = std::max(beta0, (loss - tau) / lambda) / Scalar(2);
  return std::exp(-lambert_w0(arg));
}

struct BatchConfidence {
  LossVector<double> sigma;
  double tau = 0.0;
  ThresholdState state;
  bool fell_back_to_otsu = false;
};

BatchConfidence batch_confidences(const LossVector<double>& proxy_losses,
                                  const ConfidenceConfig& config, ThresholdState state);

}  // namespace procsim

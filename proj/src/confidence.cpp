#include "procsim/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace procsim {

std::string_view to_string(ThresholdStrategy strategy) {
  switch (strategy) {
    case ThresholdStrategy::otsu: return "otsu";
    case ThresholdStrategy::global_average: return "global_average";
    case ThresholdStrategy::gmm: return "gmm";
  }
  return "otsu";
}

ThresholdStrategy parse_threshold_strategy(std::string_view name) {
  if (name == "otsu") return ThresholdStrategy::otsu;
  if (name == "global_average") return ThresholdStrategy::global_average;
  if (name == "gmm") return ThresholdStrategy::gmm;
  throw ConfigError("unknown threshold strategy '" + std::string(name) + "'");
}

void ConfidenceConfig::validate() const {
  if (std::isnan(lambda) || !(lambda > 0.0)) {
    throw ConfigError("confidence.lambda must be positive");
  }
  if (beta0 != kBeta0Constrained && beta0 != kBeta0Unconstrained) {
    throw ConfigError("confidence.beta0 must be 0 or -2/e");
  }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_pdf(double x, const GaussianComponent& c) {
  const double d = x - c.mean;
  return -0.5 * (kLog2Pi + std::log(c.variance) + d * d / c.variance);
}

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

GmmParams fit_two_gaussians(const LossVector<double>& values) {
  const auto n = values.size();
  if (n < 2) throw DomainError("fit_two_gaussians: need at least 2 values");
  if (!values.allFinite()) throw DomainError("fit_two_gaussians: non-finite value");

  std::vector<double> sorted(values.data(), values.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double total_var = population_variance(values);
  const double var_floor = 1e-12 * (1.0 + total_var);

  GmmParams params;
  params.low = {percentile(sorted, 0.25), std::max(total_var, var_floor), 0.5};
  params.high = {percentile(sorted, 0.75), std::max(total_var, var_floor), 0.5};
  if (total_var <= 0.0 || params.low.mean == params.high.mean) return params;

  Eigen::ArrayXd resp_high(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= 100; ++iter) {
    // E-step
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = std::log(params.low.weight) + log_normal_pdf(values(i), params.low);
      const double b = std::log(params.high.weight) + log_normal_pdf(values(i), params.high);
      const double m = std::max(a, b);
      const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
      resp_high(i) = std::exp(b - lse);
      ll += lse;
    }
    params.iterations = iter;
    if (!std::isfinite(ll)) return params;
    if (std::abs(ll - prev_ll) < 1e-8) {
      params.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step
    const Eigen::ArrayXd resp_low = 1.0 - resp_high;
    const double n_high = resp_high.sum();
    const double n_low = resp_low.sum();
    if (n_high < 1e-9 || n_low < 1e-9) return params;
    const Eigen::ArrayXd x = values.array();
    params.low.mean = (resp_low * x).sum() / n_low;
    params.high.mean = (resp_high * x).sum() / n_high;
    params.low.variance =
        std::max((resp_low * (x - params.low.mean).square()).sum() / n_low, var_floor);
    params.high.variance =
        std::max((resp_high * (x - params.high.mean).square()).sum() / n_high, var_floor);
    params.low.weight = n_low / static_cast<double>(n);
    params.high.weight = n_high / static_cast<double>(n);
  }
  if (params.low.mean > params.high.mean) std::swap(params.low, params.high);
  return params;
}

std::optional<double> gmm_decision_threshold(const GmmParams& params) {
  const GaussianComponent& lo = params.low;
  const GaussianComponent& hi = params.high;
  if (!(lo.mean < hi.mean)) return std::nullopt;
  auto log_ratio = [&](double x) {
    return std::log(lo.weight) + log_normal_pdf(x, lo) - std::log(hi.weight) -
           log_normal_pdf(x, hi);
  };
  double a = lo.mean;
  double b = hi.mean;
  double fa = log_ratio(a);
  const double fb = log_ratio(b);
  if (!(fa > 0.0) || !(fb < 0.0)) return std::nullopt;
  for (int i = 0; i < 200 && b - a > 1e-15 * (1.0 + std::abs(a)); ++i) {
    const double mid = 0.5 * (a + b);
    const double fm = log_ratio(mid);
    if (fm > 0.0) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

ThresholdOutcome compute_threshold(const LossVector<double>& losses, ThresholdState state) {
  ThresholdOutcome out;
  switch (state.strategy) {
    case ThresholdStrategy::otsu: {
      out.tau = otsu_threshold(losses).threshold;
      break;
    }
    case ThresholdStrategy::global_average: {
      if (losses.size() < 1) throw DomainError("compute_threshold: empty batch");
      if (!losses.allFinite()) throw DomainError("compute_threshold: non-finite loss");
      state.running_sum += losses.sum();
      state.running_count += static_cast<std::uint64_t>(losses.size());
      out.tau = state.running_sum / static_cast<double>(state.running_count);
      break;
    }
    case ThresholdStrategy::gmm: {
      if (losses.size() < 4) throw DomainError("compute_threshold: gmm needs at least 4 values");
      GmmParams params = fit_two_gaussians(losses);
      std::optional<double> tau;
      if (params.converged) tau = gmm_decision_threshold(params);
      if (tau) {
        out.tau = *tau;
        state.gmm = params;
      } else {
        out.tau = otsu_threshold(losses).threshold;
        out.fell_back_to_otsu = true;
        state.gmm.reset();
      }
      break;
    }
  }
  out.state = std::move(state);
  return out;
}

BatchConfidence batch_confidences(const LossVector<double>& proxy_losses,
                                  const ConfidenceConfig& config, ThresholdState state) {
  config.validate();
  state.strategy = config.strategy;
  ThresholdOutcome threshold = compute_threshold(proxy_losses, std::move(state));

  BatchConfidence out;
  out.tau = threshold.tau;
  out.state = std::move(threshold.state);
  out.fell_back_to_otsu = threshold.fell_back_to_otsu;
  out.sigma.resize(proxy_losses.size());
  for (Eigen::Index i = 0; i < proxy_losses.size(); ++i) {
    out.sigma(i) = config.beta0 == kBeta0Constrained
                       ? sample_confidence(proxy_losses(i), out.tau, config.lambda)
                       : superloss_pair_confidence(proxy_losses(i), out.tau, config.lambda,
                                                   config.beta0);
  }
  return out;
}

}  // namespace procsim

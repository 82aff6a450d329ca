#pragma once

// Scalar special functions and 1-D statistics used by the confidence module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "procsim/errors.hpp"

namespace procsim {

template <typename Scalar>
using LossVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Principal branch W0 of the Lambert W function, i.e. the w >= -1 solving
/// w * exp(w) = x. Defined on [-1/e, inf); accurate to a few ulps on
/// [0, inf) and best-effort close to the branch point.
template <typename Scalar>
Scalar lambert_w0(Scalar x) {
  using std::exp;
  using std::log;
  using std::sqrt;
  using std::abs;
  constexpr Scalar kInvE = Scalar(1) / std::numbers::e_v<Scalar>;
  constexpr Scalar kEps = std::numeric_limits<Scalar>::epsilon();

  if (std::isnan(x)) throw DomainError("lambert_w0: NaN argument");
  if (x == Scalar(0)) return Scalar(0);
  if (std::isinf(x)) {
    if (x > 0) return x;
    throw DomainError("lambert_w0: argument below -1/e");
  }
  const Scalar branch_gap = x + kInvE;
  if (branch_gap < Scalar(0)) {
    if (branch_gap < -Scalar(8) * kEps) {
      throw DomainError("lambert_w0: argument below -1/e");
    }
    return Scalar(-1);
  }
  if (branch_gap <= Scalar(4) * kEps) return Scalar(-1);

  Scalar w;
  if (x < Scalar(-0.25)) {
    // Puiseux expansion around the branch point.
    const Scalar p = sqrt(Scalar(2) * (std::numbers::e_v<Scalar> * x + Scalar(1)));
    w = Scalar(-1) + p - p * p / Scalar(3) + Scalar(11) / Scalar(72) * p * p * p;
  } else if (abs(x) < Scalar(0.25)) {
    w = x - x * x + Scalar(1.5) * x * x * x;
  } else if (x <= std::numbers::e_v<Scalar>) {
    w = log(Scalar(1) + x) * Scalar(0.8);
  } else {
    const Scalar l1 = log(x);
    const Scalar l2 = log(l1);
    w = l1 - l2 + l2 / l1;
  }

  const Scalar step_tol = std::max(Scalar(1e-15), Scalar(4) * kEps);
  for (int iter = 0; iter < 50; ++iter) {
    const Scalar ew = exp(w);
    const Scalar f = w * ew - x;
    if (f == Scalar(0)) break;
    const Scalar wp1 = w + Scalar(1);
    if (wp1 == Scalar(0)) break;
    const Scalar denom = ew * wp1 - (w + Scalar(2)) * f / (Scalar(2) * wp1);
    if (denom == Scalar(0) || !std::isfinite(denom)) break;
    Scalar next = w - f / denom;
    if (next < Scalar(-1)) next = Scalar(-1);
    const Scalar step = abs(next - w);
    w = next;
    if (step <= step_tol) break;
  }
  return w;
}

/// Mean squared deviation from the mean (divides by the count).
template <typename Derived>
typename Derived::Scalar population_variance(const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  if (values.size() == 0) throw DomainError("population_variance: empty input");
  if (!values.allFinite()) throw DomainError("population_variance: non-finite value");
  const Scalar mean = values.mean();
  return (values.array() - mean).square().sum() / static_cast<Scalar>(values.size());
}

template <typename Scalar>
struct OtsuResult {
  Scalar threshold{};
  std::vector<Scalar> candidate_thresholds;
  // Original indices, ascending. low = {l < threshold}, high = {l >= threshold}.
  std::vector<std::size_t> low_cluster;
  std::vector<std::size_t> high_cluster;
  Scalar cost{};
  // No candidate leaves >= 2 samples on both sides (heavily tied input). The
  // threshold is then the largest value and every index is in low_cluster.
  bool degenerate = false;
};

/// Exact 1-D Otsu threshold over the midpoints of consecutive sorted values.
///
/// Candidates are (L[i] + L[i+1]) / 2 for 1-indexed i in {2, ..., n-2} of the
/// sorted values L, so that each side holds at least two samples. The chosen
/// candidate minimizes (|C0| Var[C0] + |C1| Var[C1]) / n with C0 = {l < t} and
/// C1 = {l >= t}. Ties in cost resolve to the smallest threshold.
template <typename Derived>
OtsuResult<typename Derived::Scalar> otsu_threshold(const Eigen::MatrixBase<Derived>& losses) {
  using Scalar = typename Derived::Scalar;
  const auto n = static_cast<std::size_t>(losses.size());
  if (n < 4) throw DomainError("otsu_threshold: need at least 4 values");
  if (!losses.allFinite()) throw DomainError("otsu_threshold: non-finite value");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses(static_cast<Eigen::Index>(a)) < losses(static_cast<Eigen::Index>(b));
  });
  std::vector<Scalar> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = losses(static_cast<Eigen::Index>(order[i]));

  // Centering on the minimum keeps the prefix sums insensitive to a global
  // shift of the input.
  const Scalar origin = sorted.front();
  std::vector<Scalar> prefix(n + 1, Scalar(0)), prefix_sq(n + 1, Scalar(0));
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar v = sorted[i] - origin;
    prefix[i + 1] = prefix[i] + v;
    prefix_sq[i + 1] = prefix_sq[i] + v * v;
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const Scalar count = static_cast<Scalar>(hi - lo);
    const Scalar s = prefix[hi] - prefix[lo];
    const Scalar value = (prefix_sq[hi] - prefix_sq[lo]) - s * s / count;
    return std::max(value, Scalar(0));
  };
  const Scalar total_sse = sse(0, n);
  const Scalar tie_tol = Scalar(1e-12) * total_sse;

  OtsuResult<Scalar> result;
  result.candidate_thresholds.reserve(n - 3);
  bool found = false;
  std::size_t best_split = 0;
  Scalar best_cost = std::numeric_limits<Scalar>::infinity();
  for (std::size_t k = 1; k + 2 < n; ++k) {
    const Scalar t = (sorted[k] + sorted[k + 1]) / Scalar(2);
    result.candidate_thresholds.push_back(t);
    const auto split = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    if (split < 2 || n - split < 2) continue;
    const Scalar cost = (sse(0, split) + sse(split, n)) / static_cast<Scalar>(n);
    if (!found || cost < best_cost - tie_tol) {
      found = true;
      best_cost = cost;
      best_split = split;
      result.threshold = t;
    }
  }

  if (!found) {
    result.degenerate = true;
    result.threshold = sorted.back();
    result.cost = total_sse / static_cast<Scalar>(n);
    result.low_cluster.assign(order.begin(), order.end());
    std::sort(result.low_cluster.begin(), result.low_cluster.end());
    return result;
  }

  result.cost = best_cost;
  result.low_cluster.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best_split));
  result.high_cluster.assign(order.begin() + static_cast<std::ptrdiff_t>(best_split), order.end());
  std::sort(result.low_cluster.begin(), result.low_cluster.end());
  std::sort(result.high_cluster.begin(), result.high_cluster.end());
  return result;
}

}  // namespace procsim

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Core>

namespace testing {

// Independent W0 for x >= 0: bisection on w e^w = x in long double.
inline double lambert_bisect(double x) {
  long double lo = 0.0L, hi = std::max(1.0L, std::log1p(static_cast<long double>(x)));
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (mid * std::exp(mid) < x ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

inline Eigen::MatrixXd random_unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = g(rng);
    m.row(i).normalize();
  }
  return m;
}

inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(PROCSIM_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

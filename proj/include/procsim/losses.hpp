#pragma once

// Per-sample loss kernels over unit-norm embeddings, with analytic gradients.
//
// Each kernel returns one loss per batch row. Gradients are those of the
// weighted sum  sum_i upstream_i * loss_i, so that per-sample weights such as
// confidences enter as constants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "procsim/errors.hpp"

namespace procsim {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Labels = std::vector<std::int64_t>;

struct LossConfig {
  double alpha = 2.0;
  double beta = 40.0;
  double delta = 0.1;
  double omega = 10.0;
  double proxy_scale = 1.0 / 0.11;
  int top_k = 5;
  double contrastive_margin = 0.5;
  double ssl_temperature = 1.0;
  bool include_target_in_denominator = true;

  void validate() const;
};

template <typename Scalar>
struct LossAndGrad {
  Vector<Scalar> values;
  Matrix<Scalar> grad;
};

template <typename Scalar>
struct ProxyLossAndGrad {
  Vector<Scalar> values;
  Matrix<Scalar> grad_embeddings;
  Matrix<Scalar> grad_proxies;
};

namespace detail {

template <typename Derived>
void require_unit_rows(const Eigen::MatrixBase<Derived>& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = static_cast<double>(m.row(i).norm());
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
      throw DomainError(std::string(what) + ": row " + std::to_string(i) + " is not unit norm");
    }
  }
}

inline void require_size(Eigen::Index n, std::size_t labels, const char* what) {
  if (static_cast<std::size_t>(n) != labels) {
    throw DomainError(std::string(what) + ": label count does not match batch size");
  }
}

// log(1 + sum_j exp(a_j)) over the masked entries, plus the softmax weights
// exp(a_j) / (1 + sum) written into `weights`.
template <typename Scalar>
Scalar log1p_sum_exp(const Vector<Scalar>& a, const std::vector<bool>& mask,
                     Vector<Scalar>& weights) {
  Scalar peak = Scalar(0);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) peak = std::max(peak, a(j));
  }
  Scalar denom = std::exp(-peak);
  weights.setZero(a.size());
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    weights(j) = std::exp(a(j) - peak);
    denom += weights(j);
  }
  weights /= denom;
  return peak + std::log(denom);
}

}  // namespace detail

/// Scales every row to unit L2 norm.
template <typename Derived>
Matrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x) {
  Matrix<typename Derived::Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto norm = out.row(i).norm();
    if (!(norm > 0)) throw DomainError("normalize_rows: zero row");
    out.row(i) /= norm;
  }
  return out;
}

/// Gradient through y = x / |x| row-wise, given x and dL/dy.
template <typename DerivedX, typename DerivedG>
Matrix<typename DerivedX::Scalar> normalize_rows_backward(const Eigen::MatrixBase<DerivedX>& x,
                                                          const Eigen::MatrixBase<DerivedG>& grad_y) {
  Matrix<typename DerivedX::Scalar> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto norm = x.row(i).norm();
    const auto y = (x.row(i) / norm).eval();
    out.row(i) = (grad_y.row(i) - y * y.dot(grad_y.row(i))) / norm;
  }
  return out;
}

/// Cosine-similarity Gram matrix of unit-norm rows.
template <typename Derived>
Matrix<typename Derived::Scalar> similarity_matrix(const Eigen::MatrixBase<Derived>& embeddings) {
  detail::require_unit_rows(embeddings, "similarity_matrix");
  return embeddings * embeddings.transpose();
}

/// Pulls a gradient on S = E E^T back to the embeddings.
template <typename DerivedE, typename DerivedG>
Matrix<typename DerivedE::Scalar> similarity_backward(const Eigen::MatrixBase<DerivedE>& embeddings,
                                                      const Eigen::MatrixBase<DerivedG>& grad_s) {
  return (grad_s + grad_s.transpose()) * embeddings;
}

/// Multi-Similarity loss per anchor, without pair mining. Positives are the
/// same-label rows other than the anchor itself; negatives are every
/// different-label row. `grad` is d(sum_i upstream_i loss_i)/dS.
template <typename Scalar>
LossAndGrad<Scalar> ms_loss_similarity(const Matrix<Scalar>& s, const Labels& labels,
                                       const LossConfig& cfg, const Vector<Scalar>& upstream) {
  const Eigen::Index n = s.rows();
  detail::require_size(n, labels.size(), "ms_loss");
  if (upstream.size() != n) throw DomainError("ms_loss: upstream size mismatch");
  const auto alpha = static_cast<Scalar>(cfg.alpha);
  const auto beta = static_cast<Scalar>(cfg.beta);
  const auto delta = static_cast<Scalar>(cfg.delta);

  LossAndGrad<Scalar> out;
  out.values.setZero(n);
  out.grad.setZero(n, n);
  std::vector<bool> pos(static_cast<std::size_t>(n)), neg(static_cast<std::size_t>(n));
  Vector<Scalar> a(n), b(n), wp, wn;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      pos[static_cast<std::size_t>(j)] = same && j != i;
      neg[static_cast<std::size_t>(j)] = !same;
      a(j) = -alpha * (s(i, j) - delta);
      b(j) = beta * (s(i, j) - delta);
    }
    const Scalar lp = detail::log1p_sum_exp(a, pos, wp);
    const Scalar ln = detail::log1p_sum_exp(b, neg, wn);
    out.values(i) = lp / alpha + ln / beta;
    out.grad.row(i) = upstream(i) * (wn - wp).transpose();
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> ms_loss_per_sample(const Matrix<Scalar>& s, const Labels& labels,
                                  const LossConfig& cfg) {
  return ms_loss_similarity(s, labels, cfg, Vector<Scalar>(Vector<Scalar>::Ones(s.rows()))).values;
}

/// Multi-Similarity loss with the gradient taken w.r.t. the embeddings.
template <typename Scalar>
LossAndGrad<Scalar> ms_loss_with_grad(const Matrix<Scalar>& embeddings, const Labels& labels,
                                      const LossConfig& cfg, const Vector<Scalar>& upstream) {
  const Matrix<Scalar> s = similarity_matrix(embeddings);
  LossAndGrad<Scalar> out = ms_loss_similarity(s, labels, cfg, upstream);
  out.grad = similarity_backward(embeddings, out.grad);
  return out;
}

/// Proxy-NCA: -log of the softmax probability of the own proxy under logits
/// scale * <e_i, p_c>. `labels` index rows of `proxies`. When
/// `include_target` is false the own class is dropped from the denominator
/// (the original formulation).
template <typename Scalar>
ProxyLossAndGrad<Scalar> proxy_nca_with_grad(const Matrix<Scalar>& embeddings, const Labels& labels,
                                             const Matrix<Scalar>& proxies, Scalar scale,
                                             const Vector<Scalar>& upstream,
                                             bool include_target = true) {
  const Eigen::Index n = embeddings.rows();
  const Eigen::Index classes = proxies.rows();
  detail::require_size(n, labels.size(), "proxy_nca");
  if (proxies.cols() != embeddings.cols()) throw DomainError("proxy_nca: dimension mismatch");
  if (upstream.size() != n) throw DomainError("proxy_nca: upstream size mismatch");
  if (!(scale > Scalar(0))) throw DomainError("proxy_nca: scale must be positive");
  detail::require_unit_rows(embeddings, "proxy_nca embeddings");
  detail::require_unit_rows(proxies, "proxy_nca proxies");
  for (auto y : labels) {
    if (y < 0 || y >= classes) throw DomainError("proxy_nca: label out of range");
  }

  const Matrix<Scalar> logits = scale * embeddings * proxies.transpose();
  Matrix<Scalar> grad_logits = Matrix<Scalar>::Zero(n, classes);
  ProxyLossAndGrad<Scalar> out;
  out.values.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (c == y && !include_target) continue;
      peak = std::max(peak, logits(i, c));
    }
    if (!std::isfinite(peak)) {
      // Only the target class exists and it is excluded: the loss is -logit.
      out.values(i) = -logits(i, y);
      grad_logits(i, y) = -upstream(i);
      continue;
    }
    Scalar denom = Scalar(0);
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (c == y && !include_target) continue;
      grad_logits(i, c) = std::exp(logits(i, c) - peak);
      denom += grad_logits(i, c);
    }
    out.values(i) = peak + std::log(denom) - logits(i, y);
    grad_logits.row(i) *= upstream(i) / denom;
    grad_logits(i, y) -= upstream(i);
  }
  out.grad_embeddings = scale * grad_logits * proxies;
  out.grad_proxies = scale * grad_logits.transpose() * embeddings;
  return out;
}

template <typename Scalar>
Vector<Scalar> proxy_nca_per_sample(const Matrix<Scalar>& embeddings, const Labels& labels,
                                    const Matrix<Scalar>& proxies, Scalar scale,
                                    bool include_target = true) {
  return proxy_nca_with_grad(embeddings, labels, proxies, scale,
                             Vector<Scalar>(Vector<Scalar>::Ones(embeddings.rows())), include_target)
      .values;
}

/// Contrastive pair losses: 1 - S_ij for same-label pairs and
/// max(0, S_ij - margin) otherwise. Diagonal is zero.
template <typename Scalar>
Matrix<Scalar> contrastive_pair_loss(const Matrix<Scalar>& s, const Labels& labels, Scalar margin) {
  const Eigen::Index n = s.rows();
  detail::require_size(n, labels.size(), "contrastive_pair_loss");
  if (margin < Scalar(0)) throw DomainError("contrastive_pair_loss: negative margin");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        out(i, j) = Scalar(1) - s(i, j);
      } else {
        out(i, j) = std::max(Scalar(0), s(i, j) - margin);
      }
    }
  }
  return out;
}

/// Row-wise KL(softmax(L_i / T) || softmax(S_i / T)) between the mean of the
/// language similarity matrices L and the visual similarities S, with the
/// diagonal masked from both softmaxes. `grad` is w.r.t. S.
template <typename Scalar>
LossAndGrad<Scalar> semantic_regularizer_similarity(const Matrix<Scalar>& s_visual,
                                                    const std::vector<Matrix<Scalar>>& semantic,
                                                    Scalar temperature,
                                                    const Vector<Scalar>& upstream) {
  const Eigen::Index n = s_visual.rows();
  if (semantic.empty()) throw DomainError("semantic_regularizer: no language matrices");
  if (!(temperature > Scalar(0))) throw DomainError("semantic_regularizer: temperature must be positive");
  if (upstream.size() != n) throw DomainError("semantic_regularizer: upstream size mismatch");
  Matrix<Scalar> mean_language = Matrix<Scalar>::Zero(n, n);
  for (const auto& m : semantic) {
    if (m.rows() != n || m.cols() != n) {
      throw DomainError("semantic_regularizer: language matrix dimension mismatch");
    }
    if (!m.allFinite()) throw DomainError("semantic_regularizer: non-finite language matrix");
    mean_language += m;
  }
  mean_language /= static_cast<Scalar>(semantic.size());

  LossAndGrad<Scalar> out;
  out.values.setZero(n);
  out.grad.setZero(n, n);
  if (n < 2) return out;
  auto masked_softmax = [&](const Matrix<Scalar>& m, Eigen::Index i, Vector<Scalar>& p,
                            Vector<Scalar>& logp) {
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) peak = std::max(peak, m(i, j) / temperature);
    }
    Scalar denom = Scalar(0);
    p.setZero(n);
    logp.setZero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      p(j) = std::exp(m(i, j) / temperature - peak);
      denom += p(j);
    }
    const Scalar log_denom = std::log(denom);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      p(j) /= denom;
      logp(j) = m(i, j) / temperature - peak - log_denom;
    }
  };
  Vector<Scalar> p, logp, q, logq;
  for (Eigen::Index i = 0; i < n; ++i) {
    masked_softmax(mean_language, i, p, logp);
    masked_softmax(s_visual, i, q, logq);
    Scalar kl = Scalar(0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && p(j) > Scalar(0)) kl += p(j) * (logp(j) - logq(j));
    }
    out.values(i) = std::max(kl, Scalar(0));
    out.grad.row(i) = (upstream(i) / temperature) * (q - p).transpose();
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> semantic_regularizer_per_sample(const Matrix<Scalar>& s_visual,
                                               const std::vector<Matrix<Scalar>>& semantic,
                                               Scalar temperature) {
  return semantic_regularizer_similarity(s_visual, semantic, temperature,
                                         Vector<Scalar>(Vector<Scalar>::Ones(s_visual.rows())))
      .values;
}

template <typename Scalar>
LossAndGrad<Scalar> semantic_regularizer_with_grad(const Matrix<Scalar>& embeddings,
                                                   const std::vector<Matrix<Scalar>>& semantic,
                                                   Scalar temperature,
                                                   const Vector<Scalar>& upstream) {
  const Matrix<Scalar> s = similarity_matrix(embeddings);
  LossAndGrad<Scalar> out = semantic_regularizer_similarity(s, semantic, temperature, upstream);
  out.grad = similarity_backward(embeddings, out.grad);
  return out;
}

/// Batch mean of sigma_i * dml_i + omega * ssl_i. Sigma is a constant: the
/// returned weights are the upstream gradients for the two loss vectors.
template <typename Scalar>
struct ObjectiveTerms {
  Scalar value{};
  Vector<Scalar> dml_weights;
  Vector<Scalar> ssl_weights;
};

template <typename Scalar>
ObjectiveTerms<Scalar> procsim_objective(const Vector<Scalar>& sigma, const Vector<Scalar>& dml,
                                         const Vector<Scalar>& ssl, Scalar omega) {
  const Eigen::Index n = sigma.size();
  if (dml.size() != n || ssl.size() != n) throw DomainError("procsim_objective: length mismatch");
  if (n == 0) throw DomainError("procsim_objective: empty batch");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  ObjectiveTerms<Scalar> out;
  out.value = (sigma.array() * dml.array() + omega * ssl.array()).sum() * inv_n;
  out.dml_weights = sigma * inv_n;
  out.ssl_weights = Vector<Scalar>::Constant(n, omega * inv_n);
  return out;
}

/// Per-rank language similarity matrices for a batch: entry (i, j) of matrix
/// r is the cosine similarity between the class embeddings ranked r-th for
/// samples i and j. `table` rows are indexed by class id.
template <typename Scalar>
std::vector<Matrix<Scalar>> language_similarity_matrices(
    const Matrix<Scalar>& table, const std::vector<std::vector<std::int64_t>>& topk) {
  if (topk.empty()) return {};
  const std::size_t k = topk.front().size();
  if (k == 0) throw DomainError("language_similarity_matrices: empty top-k list");
  Matrix<Scalar> unit = table;
  for (Eigen::Index r = 0; r < unit.rows(); ++r) {
    const Scalar norm = unit.row(r).norm();
    if (norm > Scalar(0)) unit.row(r) /= norm;
  }
  const auto n = static_cast<Eigen::Index>(topk.size());
  std::vector<Matrix<Scalar>> out;
  out.reserve(k);
  for (std::size_t rank = 0; rank < k; ++rank) {
    Matrix<Scalar> rows(n, unit.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& list = topk[static_cast<std::size_t>(i)];
      if (list.size() != k) throw DomainError("language_similarity_matrices: ragged top-k lists");
      const auto c = list[rank];
      if (c < 0 || c >= unit.rows()) throw DomainError("language_similarity_matrices: class id out of range");
      rows.row(i) = unit.row(static_cast<Eigen::Index>(c));
    }
    out.push_back(rows * rows.transpose());
  }
  return out;
}

}  // namespace procsim

#ifndef MB2L_ALIGNMENT_HPP
#define MB2L_ALIGNMENT_HPP

#include "mb2l/core.hpp"
#include "mb2l/nn.hpp"

#include <atomic>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

namespace mb2l {

namespace detail {

inline void warn_zero_vector() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) {
    std::cerr << "warning: cosine similarity of a zero vector is defined as 0\n";
  }
}

}  // namespace detail

/// Two affine maps with a nonlinearity in between; rows are samples.
template <typename Scalar>
struct ProjectionHead {
  Linear<Scalar> first;
  Linear<Scalar> second;
  Activation activation = Activation::gelu;

  struct Cache {
    Matrix<Scalar> pre;
    Matrix<Scalar> act;
  };

  static ProjectionHead random(Index in, Index hidden, Index out, Rng& rng, bool bias = true,
                               Activation act = Activation::gelu) {
    require(in >= 1 && hidden >= 1 && out >= 1, "projection head dimensions must be >= 1");
    return {Linear<Scalar>::random(in, hidden, rng, bias, std::sqrt(2.0)), Linear<Scalar>::random(hidden, out, rng, bias),
            act};
  }

  /// Square head whose affine maps are the identity.
  static ProjectionHead identity(Index dim, Activation act = Activation::relu) {
    ProjectionHead head{Linear<Scalar>(dim, dim, false), Linear<Scalar>(dim, dim, false), act};
    head.first.weight.setIdentity();
    head.second.weight.setIdentity();
    return head;
  }

  Index in_dim() const { return first.in_dim(); }
  Index out_dim() const { return second.out_dim(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    require(x.cols() == in_dim(), "projection head expects " + std::to_string(in_dim()) + " features, got " +
                                      std::to_string(x.cols()));
    cache.pre = first.forward(x);
    cache.act = activate(activation, cache.pre);
    return second.forward(cache.act);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Cache cache;
    return forward(x, cache);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Cache& cache, const Matrix<Scalar>& grad_out,
                          ProjectionHead& grad) const {
    const Matrix<Scalar> dact = second.backward(cache.act, grad_out, grad.second);
    const Matrix<Scalar> dpre = activate_backward(activation, cache.pre, dact);
    return first.backward(x, dpre, grad.first);
  }

  ProjectionHead zeros_like() const { return {first.zeros_like(), second.zeros_like(), activation}; }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    Linear<Scalar>::for_each(self.first, prefix + "first.", f);
    Linear<Scalar>::for_each(self.second, prefix + "second.", f);
  }
};

template <typename Scalar>
RowVector<Scalar> project(const RowVector<Scalar>& x, const ProjectionHead<Scalar>& head) {
  return head.forward(Matrix<Scalar>(x));
}

/// a.b / (|a||b|); 0 (with a one-time warning) when either vector is zero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  require(a.size() == b.size(), "cosine_sim: vectors differ in length");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    detail::warn_zero_vector();
    return Scalar(0);
  }
  Scalar dot(0);
  for (Index k = 0; k < a.size(); ++k) dot += a(k) * b(k);
  return dot / (na * nb);
}

struct ContrastiveConfig {
  double tau = 0.07;
  double alpha_low = 1.0;
  double alpha_high = 0.5;
  bool include_positive_in_denominator = true;
};

/// Intra-subject default weighting (alpha_high = 0.5).
inline ContrastiveConfig intra_subject_contrastive() { return {0.07, 1.0, 0.5, true}; }
/// Inter-subject default weighting (alpha_high = 0.1).
inline ContrastiveConfig inter_subject_contrastive() { return {0.07, 1.0, 0.1, true}; }

template <typename Scalar>
struct InfoNceResult {
  Scalar loss = Scalar(0);
  Matrix<Scalar> grad_image;  // dL/dZ_I
  Matrix<Scalar> grad_eeg;    // dL/dZ_E
  Scalar grad_log_inv_tau = Scalar(0);
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> normalize_rows(const Matrix<Scalar>& z, Vector<Scalar>& norms) {
  norms.resize(z.rows());
  Matrix<Scalar> u(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    norms(i) = z.row(i).norm();
    if (norms(i) == Scalar(0)) {
      warn_zero_vector();
      u.row(i).setZero();
    } else {
      u.row(i) = z.row(i) / norms(i);
    }
  }
  return u;
}

// Dot products in a fixed summation order so that swapping the arguments
// yields the exact transpose.
template <typename Scalar>
Matrix<Scalar> cosine_matrix(const Matrix<Scalar>& u, const Matrix<Scalar>& v) {
  Matrix<Scalar> s(u.rows(), v.rows());
  for (Index i = 0; i < u.rows(); ++i) {
    for (Index j = 0; j < v.rows(); ++j) {
      Scalar dot(0);
      for (Index k = 0; k < u.cols(); ++k) dot += u(i, k) * v(j, k);
      s(i, j) = dot;
    }
  }
  return s;
}

template <typename Scalar>
Matrix<Scalar> normalize_backward(const Matrix<Scalar>& u, const Vector<Scalar>& norms, const Matrix<Scalar>& du) {
  Matrix<Scalar> dz(u.rows(), u.cols());
  for (Index i = 0; i < u.rows(); ++i) {
    if (norms(i) == Scalar(0)) {
      dz.row(i).setZero();
      continue;
    }
    const Scalar proj = u.row(i).dot(du.row(i));
    dz.row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
  }
  return dz;
}

}  // namespace detail

/// Symmetric InfoNCE over cosine similarities scaled by 1/tau = exp(log_inv_tau).
/// Row j of each batch is a matched pair. When the positive is excluded from
/// the denominator, only the N-1 negatives are summed.
template <typename Scalar>
InfoNceResult<Scalar> info_nce_with_gradient(const Matrix<Scalar>& z_image, const Matrix<Scalar>& z_eeg,
                                             Scalar log_inv_tau, bool include_positive = true,
                                             bool want_gradient = true) {
  const Index n = z_image.rows();
  require(n >= 1, "InfoNCE needs at least one pair");
  require(z_eeg.rows() == n && z_eeg.cols() == z_image.cols(), "InfoNCE batches must have matching shapes");
  require(include_positive || n >= 2, "InfoNCE without the positive in the denominator needs N >= 2");
  require(std::isfinite(static_cast<double>(log_inv_tau)), "temperature must be finite");

  Vector<Scalar> norm_i, norm_e;
  const Matrix<Scalar> u = detail::normalize_rows(z_image, norm_i);
  const Matrix<Scalar> v = detail::normalize_rows(z_eeg, norm_e);
  const Scalar scale = std::exp(log_inv_tau);
  const Matrix<Scalar> logits = detail::cosine_matrix(u, v) * scale;

  // Softmax over rows (image -> eeg) and over columns (eeg -> image).
  Matrix<Scalar> p_row = Matrix<Scalar>::Zero(n, n);
  Matrix<Scalar> p_col = Matrix<Scalar>::Zero(n, n);
  Scalar row_sum(0);
  Scalar col_sum(0);
  for (Index i = 0; i < n; ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < n; ++j)
      if (include_positive || j != i) mx = std::max(mx, logits(i, j));
    Scalar acc(0);
    for (Index j = 0; j < n; ++j)
      if (include_positive || j != i) acc += std::exp(logits(i, j) - mx);
    for (Index j = 0; j < n; ++j)
      if (include_positive || j != i) p_row(i, j) = std::exp(logits(i, j) - mx) / acc;
    row_sum += mx + std::log(acc) - logits(i, i);
  }
  for (Index j = 0; j < n; ++j) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < n; ++i)
      if (include_positive || i != j) mx = std::max(mx, logits(i, j));
    Scalar acc(0);
    for (Index i = 0; i < n; ++i)
      if (include_positive || i != j) acc += std::exp(logits(i, j) - mx);
    for (Index i = 0; i < n; ++i)
      if (include_positive || i != j) p_col(i, j) = std::exp(logits(i, j) - mx) / acc;
    col_sum += mx + std::log(acc) - logits(j, j);
  }

  InfoNceResult<Scalar> result;
  result.loss = (row_sum + col_sum) / Scalar(2 * n);
  if (!want_gradient) return result;

  Matrix<Scalar> g = p_row + p_col;
  g.diagonal().array() -= Scalar(2);
  g /= Scalar(2 * n);
  result.grad_log_inv_tau = g.cwiseProduct(logits).sum();
  const Matrix<Scalar> ds = g * scale;
  result.grad_image = detail::normalize_backward(u, norm_i, Matrix<Scalar>(ds * v));
  result.grad_eeg = detail::normalize_backward(v, norm_e, Matrix<Scalar>(ds.transpose() * u));
  return result;
}

template <typename Scalar>
Scalar info_nce_bidirectional(const Matrix<Scalar>& z_image, const Matrix<Scalar>& z_eeg, const ContrastiveConfig& cfg) {
  require(cfg.tau > 0.0, "temperature must be positive");
  return info_nce_with_gradient(z_image, z_eeg, Scalar(-std::log(cfg.tau)), cfg.include_positive_in_denominator, false)
      .loss;
}

template <typename Scalar>
Scalar total_loss(Scalar loss_low, Scalar loss_high, const ContrastiveConfig& cfg) {
  return Scalar(cfg.alpha_low) * loss_low + Scalar(cfg.alpha_high) * loss_high;
}

}  // namespace mb2l

#endif  // MB2L_ALIGNMENT_HPP

#ifndef MB2L_OPTIMIZER_HPP
#define MB2L_OPTIMIZER_HPP

#include "mb2l/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mb2l {

/// Adam with decoupled weight decay: p <- p * (1 - lr * wd), then the usual
/// bias-corrected moment step. Operates on a fixed list of parameter tensors.
template <typename Scalar>
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW() = default;
  explicit AdamW(Options opts) : opts_(opts) {}

  const Options& options() const { return opts_; }
  long long steps() const { return t_; }

  void step(const std::vector<Matrix<Scalar>*>& params, const std::vector<const Matrix<Scalar>*>& grads) {
    require(params.size() == grads.size(), "optimizer: parameter and gradient lists differ in length");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      }
    }
    require(m_.size() == params.size(), "optimizer: parameter list changed between steps");
    ++t_;
    const Scalar lr = Scalar(opts_.lr);
    const Scalar b1 = Scalar(opts_.beta1);
    const Scalar b2 = Scalar(opts_.beta2);
    const Scalar c1 = Scalar(1) - Scalar(std::pow(opts_.beta1, static_cast<double>(t_)));
    const Scalar c2 = Scalar(1) - Scalar(std::pow(opts_.beta2, static_cast<double>(t_)));
    const Scalar decay = Scalar(1) - lr * Scalar(opts_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix<Scalar>& p = *params[i];
      const Matrix<Scalar>& g = *grads[i];
      require(p.rows() == g.rows() && p.cols() == g.cols(), "optimizer: gradient shape mismatch");
      if (opts_.lr == 0.0) continue;
      p *= decay;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + Scalar(opts_.eps));
    }
  }

 private:
  Options opts_;
  std::vector<Matrix<Scalar>> m_, v_;
  long long t_ = 0;
};

/// Rescales gradients in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(const std::vector<Matrix<Scalar>*>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads) sq += static_cast<double>(g->squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar s = Scalar(max_norm / (norm + 1e-12));
    for (auto* g : grads) *g *= s;
  }
  return norm;
}

}  // namespace mb2l

#endif  // MB2L_OPTIMIZER_HPP

#ifndef MB2L_NN_HPP
#define MB2L_NN_HPP

// Minimal dense layers with explicit backward passes. Forward functions are
// const and return a cache; backward functions accumulate parameter
// gradients into a zero-initialized copy of the layer.

#include "mb2l/core.hpp"

#include <random>
#include <string>

namespace mb2l {

using Rng = std::mt19937_64;

template <typename Scalar>
void fill_normal(Matrix<Scalar>& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(dist(rng));
}

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& pre, const Matrix<Scalar>& grad) {
  return (pre.array() > Scalar(0)).select(grad, Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& pre, const Matrix<Scalar>& grad) {
  return grad.cwiseProduct(pre.unaryExpr([](Scalar v) { return gelu_derivative(v); }));
}

enum class Activation { gelu, relu, identity };

template <typename Scalar>
Matrix<Scalar> activate(Activation act, const Matrix<Scalar>& x) {
  switch (act) {
    case Activation::gelu: return gelu(x);
    case Activation::relu: return relu(x);
    case Activation::identity: return x;
  }
  return x;
}

template <typename Scalar>
Matrix<Scalar> activate_backward(Activation act, const Matrix<Scalar>& pre, const Matrix<Scalar>& grad) {
  switch (act) {
    case Activation::gelu: return gelu_backward(pre, grad);
    case Activation::relu: return relu_backward(pre, grad);
    case Activation::identity: return grad;
  }
  return grad;
}

/// Affine map on row-major batches: Y = X W + b, X is N x in.
template <typename Scalar>
struct Linear {
  Matrix<Scalar> weight;  // in x out
  Matrix<Scalar> bias;    // 1 x out
  bool use_bias = true;

  Linear() = default;
  Linear(Index in, Index out, bool with_bias = true)
      : weight(Matrix<Scalar>::Zero(in, out)), bias(Matrix<Scalar>::Zero(1, out)), use_bias(with_bias) {}

  static Linear random(Index in, Index out, Rng& rng, bool with_bias = true, double gain = 1.0) {
    Linear layer(in, out, with_bias);
    fill_normal(layer.weight, rng, gain / std::sqrt(static_cast<double>(in)));
    return layer;
  }

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    require(x.cols() == in_dim(), "linear: expected " + std::to_string(in_dim()) + " input features, got " +
                                      std::to_string(x.cols()));
    Matrix<Scalar> y = x * weight;
    if (use_bias) y.rowwise() += bias.row(0);
    return y;
  }

  /// Returns dL/dx; accumulates dL/dW and dL/db into `grad`.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out, Linear& grad) const {
    grad.weight.noalias() += x.transpose() * grad_out;
    if (use_bias) grad.bias += grad_out.colwise().sum();
    return grad_out * weight.transpose();
  }

  Linear zeros_like() const {
    Linear z(in_dim(), out_dim(), use_bias);
    return z;
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "weight", self.weight);
    if (self.use_bias) f(prefix + "bias", self.bias);
  }
};

/// 2-D convolution on planar feature maps (channels x pixels) with zero padding.
template <typename Scalar>
struct Conv2d {
  Matrix<Scalar> weight;  // out_channels x (in_channels * k * k)
  Matrix<Scalar> bias;    // out_channels x 1
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  bool use_bias = true;

  Conv2d() = default;
  Conv2d(Index in, Index out, Index k, Index s, Index pad, bool with_bias)
      : weight(Matrix<Scalar>::Zero(out, in * k * k)),
        bias(Matrix<Scalar>::Zero(out, 1)),
        in_channels(in),
        out_channels(out),
        kernel(k),
        stride(s),
        padding(pad),
        use_bias(with_bias) {}

  static Conv2d random(Index in, Index out, Index k, Index s, Index pad, bool with_bias, Rng& rng, double gain = 1.0) {
    Conv2d conv(in, out, k, s, pad, with_bias);
    fill_normal(conv.weight, rng, gain * std::sqrt(2.0 / static_cast<double>(in * k * k)));
    return conv;
  }

  Index out_size(Index n) const { return (n + 2 * padding - kernel) / stride + 1; }

  Matrix<Scalar> im2col(const FeatureMap<Scalar>& x) const {
    const Index oh = out_size(x.height);
    const Index ow = out_size(x.width);
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(in_channels * kernel * kernel, oh * ow);
    for (Index c = 0; c < in_channels; ++c) {
      for (Index ki = 0; ki < kernel; ++ki) {
        for (Index kj = 0; kj < kernel; ++kj) {
          const Index row = (c * kernel + ki) * kernel + kj;
          for (Index oi = 0; oi < oh; ++oi) {
            const Index si = oi * stride - padding + ki;
            if (si < 0 || si >= x.height) continue;
            for (Index oj = 0; oj < ow; ++oj) {
              const Index sj = oj * stride - padding + kj;
              if (sj < 0 || sj >= x.width) continue;
              cols(row, oi * ow + oj) = x.data(c, si * x.width + sj);
            }
          }
        }
      }
    }
    return cols;
  }

  FeatureMap<Scalar> col2im(const Matrix<Scalar>& cols, Index height, Index width) const {
    const Index oh = out_size(height);
    const Index ow = out_size(width);
    FeatureMap<Scalar> x(height, width, in_channels);
    for (Index c = 0; c < in_channels; ++c) {
      for (Index ki = 0; ki < kernel; ++ki) {
        for (Index kj = 0; kj < kernel; ++kj) {
          const Index row = (c * kernel + ki) * kernel + kj;
          for (Index oi = 0; oi < oh; ++oi) {
            const Index si = oi * stride - padding + ki;
            if (si < 0 || si >= height) continue;
            for (Index oj = 0; oj < ow; ++oj) {
              const Index sj = oj * stride - padding + kj;
              if (sj < 0 || sj >= width) continue;
              x.data(c, si * width + sj) += cols(row, oi * ow + oj);
            }
          }
        }
      }
    }
    return x;
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) const {
    require(x.channels == in_channels, "conv: expected " + std::to_string(in_channels) + " input channels, got " +
                                           std::to_string(x.channels));
    FeatureMap<Scalar> y;
    y.height = out_size(x.height);
    y.width = out_size(x.width);
    y.channels = out_channels;
    y.data.noalias() = weight * im2col(x);
    if (use_bias) y.data.colwise() += bias.col(0);
    return y;
  }

  /// Returns dL/dx; accumulates parameter gradients into `grad` when non-null.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& x, const Matrix<Scalar>& grad_out, Conv2d* grad) const {
    if (grad != nullptr) {
      grad->weight.noalias() += grad_out * im2col(x).transpose();
      if (use_bias) grad->bias += grad_out.rowwise().sum();
    }
    const Matrix<Scalar> dcols = weight.transpose() * grad_out;
    return col2im(dcols, x.height, x.width);
  }

  Conv2d zeros_like() const { return Conv2d(in_channels, out_channels, kernel, stride, padding, use_bias); }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "weight", self.weight);
    if (self.use_bias) f(prefix + "bias", self.bias);
  }
};

/// Mean over rows: token matrix (n x d) -> 1 x d.
template <typename Scalar>
RowVector<Scalar> mean_pool(const Matrix<Scalar>& tokens) {
  return tokens.colwise().mean();
}

template <typename Scalar>
Matrix<Scalar> mean_pool_backward(Index rows, const RowVector<Scalar>& grad) {
  return grad.replicate(rows, 1) / Scalar(rows);
}

}  // namespace mb2l

#endif  // MB2L_NN_HPP

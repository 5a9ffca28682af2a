#ifndef MB2L_FOVEATION_HPP
#define MB2L_FOVEATION_HPP

// Foveated adaptive blur: a uniformly blurred copy of the image is blended
// with the original through a radial gate that is zero-ish at the fixation
// point and rises toward the periphery. Gate parameters are learnable.

#include "mb2l/core.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace mb2l {

template <typename Scalar>
struct GaussianKernel {
  Scalar sigma = Scalar(1);
  Index radius = 0;
  Matrix<Scalar> weights;  // (2*radius+1)^2, indexed by (m + radius, n + radius)

  Index size() const { return 2 * radius + 1; }
};

template <typename Scalar>
GaussianKernel<Scalar> build_gaussian_kernel(Scalar sigma, Index radius) {
  require(sigma > Scalar(0) && std::isfinite(static_cast<double>(sigma)), "gaussian sigma must be positive");
  require(radius >= 0, "gaussian radius must be non-negative");
  GaussianKernel<Scalar> kernel;
  kernel.sigma = sigma;
  kernel.radius = radius;
  const Index n = 2 * radius + 1;
  kernel.weights.resize(n, n);
  const Scalar denom = Scalar(2) * sigma * sigma;
  for (Index m = -radius; m <= radius; ++m) {
    for (Index k = -radius; k <= radius; ++k) {
      kernel.weights(m + radius, k + radius) = std::exp(-Scalar(m * m + k * k) / denom);
    }
  }
  kernel.weights /= kernel.weights.sum();
  return kernel;
}

/// sigma = 0.05 * min(H, W), radius = ceil(3 sigma).
template <typename Scalar>
GaussianKernel<Scalar> default_blur_kernel(Index height, Index width) {
  const double sigma = 0.05 * static_cast<double>(std::min(height, width));
  const double safe_sigma = std::max(sigma, 1e-3);
  return build_gaussian_kernel<Scalar>(Scalar(safe_sigma), static_cast<Index>(std::ceil(3.0 * safe_sigma)));
}

namespace detail {

// Mirror an out-of-range coordinate into [0, n) without repeating the edge
// sample (d c b | a b c d | c b a).
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace detail

/// Per-channel 2-D convolution with reflect padding; output has the input's shape.
template <typename Scalar>
ImageGrid<Scalar> blur_image(const ImageGrid<Scalar>& img, const GaussianKernel<Scalar>& kernel) {
  validate_image(img);
  require(kernel.weights.rows() == kernel.size() && kernel.weights.cols() == kernel.size(), "malformed kernel");
  const Index k = kernel.radius;
  const Index taps = kernel.size();
  // Source index for output coordinate i and tap t, i.e. reflect(i - (t - k)).
  Matrix<Index> row_src(img.height, taps);
  Matrix<Index> col_src(img.width, taps);
  for (Index i = 0; i < img.height; ++i)
    for (Index t = 0; t < taps; ++t) row_src(i, t) = detail::reflect_index(i - (t - k), img.height);
  for (Index j = 0; j < img.width; ++j)
    for (Index t = 0; t < taps; ++t) col_src(j, t) = detail::reflect_index(j - (t - k), img.width);

  ImageGrid<Scalar> out(img.height, img.width, img.channels);
  for (Index ch = 0; ch < img.channels; ++ch) {
    for (Index i = 0; i < img.height; ++i) {
      for (Index j = 0; j < img.width; ++j) {
        Scalar acc(0);
        for (Index tm = 0; tm < taps; ++tm) {
          const Index src_row = row_src(i, tm) * img.width;
          for (Index tn = 0; tn < taps; ++tn) {
            acc += img.data(ch, src_row + col_src(j, tn)) * kernel.weights(tm, tn);
          }
        }
        out.data(ch, i * img.width + j) = std::clamp(acc, Scalar(0), Scalar(1));
      }
    }
  }
  return out;
}

struct PixelCenter {
  double row = 0.0;
  double col = 0.0;
};

inline PixelCenter image_center(Index height, Index width) {
  return {0.5 * static_cast<double>(height - 1), 0.5 * static_cast<double>(width - 1)};
}

/// Normalized Euclidean distance of every pixel to the fixation point.
template <typename Scalar>
struct RadialMap {
  Index height = 0;
  Index width = 0;
  PixelCenter center;
  Matrix<Scalar> values;  // height x width, in [0,1]
};

template <typename Scalar>
RadialMap<Scalar> radial_map(Index height, Index width, PixelCenter center) {
  require(height >= 1 && width >= 1, "radial map needs a non-empty grid");
  require(center.row >= 0.0 && center.row <= static_cast<double>(height - 1) && center.col >= 0.0 &&
              center.col <= static_cast<double>(width - 1),
          "fixation center lies outside the image");
  RadialMap<Scalar> map;
  map.height = height;
  map.width = width;
  map.center = center;
  map.values.resize(height, width);
  const double far_row = std::max(center.row, static_cast<double>(height - 1) - center.row);
  const double far_col = std::max(center.col, static_cast<double>(width - 1) - center.col);
  const double max_dist = std::hypot(far_row, far_col);
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) {
      const double d = std::hypot(static_cast<double>(i) - center.row, static_cast<double>(j) - center.col);
      map.values(i, j) = max_dist > 0.0 ? Scalar(std::min(d / max_dist, 1.0)) : Scalar(0);
    }
  }
  return map;
}

template <typename Scalar>
RadialMap<Scalar> radial_map(Index height, Index width) {
  return radial_map<Scalar>(height, width, image_center(height, width));
}

enum class PriorKind { logistic, exponential, quadratic, free };

inline std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::logistic: return "logistic";
    case PriorKind::exponential: return "exp";
    case PriorKind::quadratic: return "quad";
    case PriorKind::free: return "free";
  }
  return "logistic";
}

inline PriorKind prior_kind_from_string(const std::string& name) {
  if (name == "logistic") return PriorKind::logistic;
  if (name == "exp") return PriorKind::exponential;
  if (name == "quad") return PriorKind::quadratic;
  if (name == "free") return PriorKind::free;
  throw InvalidParameter("unknown prior kind '" + name + "' (expected logistic|exp|quad|free)");
}

/// Radial gate family with its learnable parameters in unconstrained form.
///
/// Parameter layout of `params`:
///   logistic:    [k, logit(r0)]
///   exponential: [lambda, logit(r0)]
///   quadratic:   [gamma, logit(r0)]
///   free:        logit of every grid cell, row-major over grid_height x grid_width
template <typename Scalar>
struct FoveaPrior {
  static constexpr double kLogitLimit = 30.0;

  PriorKind kind = PriorKind::logistic;
  Matrix<Scalar> params;  // n x 1
  Index grid_height = 0;
  Index grid_width = 0;
  Eigen::Array<bool, Eigen::Dynamic, 1> trainable;

  static Scalar bounded_logit(Scalar p) {
    const Scalar raw = logit(std::clamp(p, Scalar(0), Scalar(1)));
    return std::clamp(raw, Scalar(-kLogitLimit), Scalar(kLogitLimit));
  }

  static FoveaPrior parametric(PriorKind kind, Scalar shape, Scalar r0) {
    require(r0 >= Scalar(0) && r0 <= Scalar(1), "fovea radius r0 must lie in [0,1]");
    FoveaPrior prior;
    prior.kind = kind;
    prior.params.resize(2, 1);
    prior.params << shape, bounded_logit(r0);
    prior.trainable = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(2, true);
    return prior;
  }

  static FoveaPrior logistic(Scalar k = Scalar(10), Scalar r0 = Scalar(0.25)) {
    return parametric(PriorKind::logistic, k, r0);
  }
  static FoveaPrior exponential(Scalar lambda = Scalar(5), Scalar r0 = Scalar(0.25)) {
    return parametric(PriorKind::exponential, lambda, r0);
  }
  static FoveaPrior quadratic(Scalar gamma = Scalar(2), Scalar r0 = Scalar(0.25)) {
    require(gamma > Scalar(0), "quadratic prior exponent must be positive");
    return parametric(PriorKind::quadratic, gamma, r0);
  }
  static FoveaPrior free(const Matrix<Scalar>& grid) {
    require(grid.size() > 0, "free prior grid must be non-empty");
    FoveaPrior prior;
    prior.kind = PriorKind::free;
    prior.grid_height = grid.rows();
    prior.grid_width = grid.cols();
    prior.params.resize(grid.size(), 1);
    for (Index i = 0; i < grid.rows(); ++i)
      for (Index j = 0; j < grid.cols(); ++j) prior.params(i * grid.cols() + j) = bounded_logit(grid(i, j));
    prior.trainable = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(grid.size(), true);
    return prior;
  }

  /// Default initialisation for a kind; free grids start from the logistic default map.
  static FoveaPrior make_default(PriorKind kind, Index height, Index width) {
    switch (kind) {
      case PriorKind::logistic: return logistic();
      case PriorKind::exponential: return exponential();
      case PriorKind::quadratic: return quadratic();
      case PriorKind::free: break;
    }
    const auto radial = radial_map<Scalar>(height, width);
    const FoveaPrior seed = logistic();
    Matrix<Scalar> grid(height, width);
    for (Index i = 0; i < height; ++i)
      for (Index j = 0; j < width; ++j) grid(i, j) = seed.weight_at(radial.values(i, j));
    return free(grid);
  }

  bool is_parametric() const { return kind != PriorKind::free; }
  Scalar shape() const { return params(0); }
  Scalar r0() const { return is_parametric() ? sigmoid(params(1)) : Scalar(0); }

  /// Gate value of a parametric prior at normalized radius r.
  Scalar weight_at(Scalar r) const {
    const Scalar x = r - r0();
    switch (kind) {
      case PriorKind::logistic: return sigmoid(shape() * x);
      case PriorKind::exponential: {
        const Scalar excess = std::max(x, Scalar(0));
        return std::clamp(Scalar(1) - std::exp(-shape() * excess), Scalar(0), Scalar(1));
      }
      case PriorKind::quadratic: {
        const Scalar excess = std::max(x, Scalar(0));
        return std::clamp(std::pow(excess, shape()), Scalar(0), Scalar(1));
      }
      case PriorKind::free: break;
    }
    throw InvalidParameter("free prior has no closed-form radial profile");
  }

  /// d weight / d (shape, logit r0) at radius r for a parametric prior.
  Eigen::Matrix<Scalar, 2, 1> weight_gradient_at(Scalar r) const {
    const Scalar rr0 = r0();
    const Scalar dr0_draw = rr0 * (Scalar(1) - rr0);
    const Scalar x = r - rr0;
    Eigen::Matrix<Scalar, 2, 1> g = Eigen::Matrix<Scalar, 2, 1>::Zero();
    switch (kind) {
      case PriorKind::logistic: {
        const Scalar w = sigmoid(shape() * x);
        const Scalar dw = w * (Scalar(1) - w);
        g(0) = dw * x;
        g(1) = -dw * shape() * dr0_draw;
        break;
      }
      case PriorKind::exponential: {
        if (x <= Scalar(0)) break;
        const Scalar e = std::exp(-shape() * x);
        const Scalar raw = Scalar(1) - e;
        if (raw <= Scalar(0) || raw >= Scalar(1)) break;
        g(0) = x * e;
        g(1) = -shape() * e * dr0_draw;
        break;
      }
      case PriorKind::quadratic: {
        if (x <= Scalar(0)) break;
        const Scalar p = std::pow(x, shape());
        if (p >= Scalar(1)) break;
        g(0) = p * std::log(x);
        g(1) = -shape() * std::pow(x, shape() - Scalar(1)) * dr0_draw;
        break;
      }
      case PriorKind::free: throw InvalidParameter("free prior has no closed-form radial profile");
    }
    return g;
  }

  /// Keeps shape parameters inside their admissible range after an update.
  void project() {
    if (kind == PriorKind::exponential || kind == PriorKind::quadratic) {
      params(0) = std::max(params(0), Scalar(1e-3));
    }
    if (is_parametric()) {
      params(1) = std::clamp(params(1), Scalar(-kLogitLimit), Scalar(kLogitLimit));
    } else {
      params = params.cwiseMax(Scalar(-kLogitLimit)).cwiseMin(Scalar(kLogitLimit));
    }
  }

  template <typename Other>
  FoveaPrior<Other> cast() const {
    FoveaPrior<Other> out;
    out.kind = kind;
    out.params = params.template cast<Other>();
    out.grid_height = grid_height;
    out.grid_width = grid_width;
    out.trainable = trainable;
    return out;
  }
};

/// Gate weight in [0,1] at normalized radius r.
template <typename Scalar>
Scalar gating_weight(const FoveaPrior<Scalar>& prior, Scalar r) {
  return prior.weight_at(r);
}

/// Per-pixel gate over a radial map. Free priors are looked up cell-wise.
template <typename Scalar>
Matrix<Scalar> gate_map(const FoveaPrior<Scalar>& prior, const RadialMap<Scalar>& radial) {
  Matrix<Scalar> w(radial.height, radial.width);
  if (prior.kind == PriorKind::free) {
    require(prior.grid_height == radial.height && prior.grid_width == radial.width,
            "free prior grid is " + std::to_string(prior.grid_height) + "x" + std::to_string(prior.grid_width) +
                " but the image is " + std::to_string(radial.height) + "x" + std::to_string(radial.width));
    for (Index i = 0; i < radial.height; ++i)
      for (Index j = 0; j < radial.width; ++j) w(i, j) = sigmoid(prior.params(i * radial.width + j));
    return w;
  }
  for (Index i = 0; i < radial.height; ++i)
    for (Index j = 0; j < radial.width; ++j) w(i, j) = prior.weight_at(radial.values(i, j));
  return w;
}

/// Gradient of a scalar loss with respect to prior.params, given dL/dw per pixel.
template <typename Scalar>
Matrix<Scalar> gate_map_backward(const FoveaPrior<Scalar>& prior, const RadialMap<Scalar>& radial,
                                 const Matrix<Scalar>& grad_weights) {
  require(grad_weights.rows() == radial.height && grad_weights.cols() == radial.width, "gate gradient shape mismatch");
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(prior.params.size(), 1);
  if (prior.kind == PriorKind::free) {
    for (Index i = 0; i < radial.height; ++i) {
      for (Index j = 0; j < radial.width; ++j) {
        const Index p = i * radial.width + j;
        const Scalar w = sigmoid(prior.params(p));
        grad(p) = grad_weights(i, j) * w * (Scalar(1) - w);
      }
    }
  } else {
    for (Index i = 0; i < radial.height; ++i)
      for (Index j = 0; j < radial.width; ++j) grad += grad_weights(i, j) * prior.weight_gradient_at(radial.values(i, j));
  }
  for (Index p = 0; p < grad.size(); ++p)
    if (!prior.trainable(p)) grad(p) = Scalar(0);
  return grad;
}

/// Pixelwise convex blend w * blurred + (1 - w) * img, w broadcast across channels.
template <typename Scalar>
ImageGrid<Scalar> fuse(const ImageGrid<Scalar>& img, const ImageGrid<Scalar>& blurred, const Matrix<Scalar>& weights) {
  require(img.same_shape(blurred), "fuse: original and blurred images differ in shape");
  require(weights.rows() == img.height && weights.cols() == img.width, "fuse: weight grid does not match image");
  require(weights.minCoeff() >= Scalar(0) && weights.maxCoeff() <= Scalar(1), "fuse: weights must lie in [0,1]");
  ImageGrid<Scalar> out(img.height, img.width, img.channels);
  for (Index i = 0; i < img.height; ++i) {
    for (Index j = 0; j < img.width; ++j) {
      const Index p = i * img.width + j;
      const Scalar w = weights(i, j);
      for (Index ch = 0; ch < img.channels; ++ch) {
        out.data(ch, p) = w * blurred.data(ch, p) + (Scalar(1) - w) * img.data(ch, p);
      }
    }
  }
  return out;
}

/// dL/dw for the blend, given dL/d(output).
template <typename Scalar>
Matrix<Scalar> fuse_weight_gradient(const ImageGrid<Scalar>& img, const ImageGrid<Scalar>& blurred,
                                    const Matrix<Scalar>& grad_out) {
  Matrix<Scalar> g(img.height, img.width);
  const Matrix<Scalar> diff = blurred.data - img.data;
  const RowVector<Scalar> per_pixel = diff.cwiseProduct(grad_out).colwise().sum();
  for (Index i = 0; i < img.height; ++i)
    for (Index j = 0; j < img.width; ++j) g(i, j) = per_pixel(i * img.width + j);
  return g;
}

/// Full foveated blur with a precomputed attenuated image (blurred or otherwise degraded).
template <typename Scalar>
ImageGrid<Scalar> apply_abvp(const ImageGrid<Scalar>& img, const ImageGrid<Scalar>& attenuated,
                             const FoveaPrior<Scalar>& prior, const RadialMap<Scalar>& radial) {
  return fuse(img, attenuated, gate_map(prior, radial));
}

template <typename Scalar>
ImageGrid<Scalar> apply_abvp(const ImageGrid<Scalar>& img, const FoveaPrior<Scalar>& prior,
                             const GaussianKernel<Scalar>& kernel, PixelCenter center) {
  validate_image(img);
  const auto radial = radial_map<Scalar>(img.height, img.width, center);
  const auto blurred = blur_image(img, kernel);
  return apply_abvp(img, blurred, prior, radial);
}

/// Gradient of a scalar loss w.r.t. prior.params given dL/d(apply_abvp output).
template <typename Scalar>
Matrix<Scalar> apply_abvp_backward(const ImageGrid<Scalar>& img, const ImageGrid<Scalar>& attenuated,
                                   const FoveaPrior<Scalar>& prior, const RadialMap<Scalar>& radial,
                                   const Matrix<Scalar>& grad_out) {
  return gate_map_backward(prior, radial, fuse_weight_gradient(img, attenuated, grad_out));
}

}  // namespace mb2l

#endif  // MB2L_FOVEATION_HPP

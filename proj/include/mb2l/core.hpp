#ifndef MB2L_CORE_HPP
#define MB2L_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mb2l {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Raised when an argument violates a documented precondition.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by readers when an on-disk artifact is malformed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidParameter(message);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p) - std::log1p(-p);
}

/// tanh-approximated GELU and its derivative.
template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);
  const Scalar inner = c * (x + Scalar(0.044715) * x * x * x);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(inner));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);
  const Scalar inner = c * (x + Scalar(0.044715) * x * x * x);
  const Scalar t = std::tanh(inner);
  const Scalar dinner = c * (Scalar(1) + Scalar(3) * Scalar(0.044715) * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * dinner;
}

/// Planar image / feature map. Storage is one row per channel and one column
/// per pixel (pixel index = row * width + col); accessors expose
/// channel-last (row, col, channel) addressing.
template <typename Scalar>
struct ImageGrid {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  Matrix<Scalar> data;

  ImageGrid() = default;
  ImageGrid(Index h, Index w, Index c) : height(h), width(w), channels(c), data(Matrix<Scalar>::Zero(c, h * w)) {}

  static ImageGrid constant(Index h, Index w, Index c, Scalar value) {
    ImageGrid img(h, w, c);
    img.data.setConstant(value);
    return img;
  }

  Scalar& operator()(Index row, Index col, Index channel) { return data(channel, row * width + col); }
  Scalar operator()(Index row, Index col, Index channel) const { return data(channel, row * width + col); }

  Index pixels() const { return height * width; }
  bool same_shape(const ImageGrid& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  template <typename Other>
  ImageGrid<Other> cast() const {
    ImageGrid<Other> out;
    out.height = height;
    out.width = width;
    out.channels = channels;
    out.data = data.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
using FeatureMap = ImageGrid<Scalar>;

/// Checks the ImageGrid invariants (finite, in [0,1], non-empty).
template <typename Scalar>
void validate_image(const ImageGrid<Scalar>& img) {
  require(img.height >= 1 && img.width >= 1, "image must be at least 1x1");
  require(img.channels == 1 || img.channels == 3, "image must have 1 or 3 channels");
  require(img.data.rows() == img.channels && img.data.cols() == img.pixels(), "image storage does not match its shape");
  require(img.data.allFinite(), "image contains non-finite values");
  require(img.data.minCoeff() >= Scalar(0) && img.data.maxCoeff() <= Scalar(1), "image values must lie in [0,1]");
}

/// C_ch x T block of samples with channel labels.
template <typename Scalar>
struct EEGEpoch {
  Matrix<Scalar> data;
  std::vector<std::string> channel_names;
  double sampling_rate = 250.0;

  Index channels() const { return data.rows(); }
  Index samples() const { return data.cols(); }

  template <typename Other>
  EEGEpoch<Other> cast() const {
    return EEGEpoch<Other>{data.template cast<Other>(), channel_names, sampling_rate};
  }
};

template <typename Scalar>
void validate_epoch(const EEGEpoch<Scalar>& epoch) {
  require(epoch.channels() == static_cast<Index>(epoch.channel_names.size()),
          "epoch has " + std::to_string(epoch.channels()) + " rows but " +
              std::to_string(epoch.channel_names.size()) + " channel names");
  require(epoch.samples() >= 1, "epoch must have at least one sample");
  require(epoch.data.allFinite(), "epoch contains non-finite samples");
}

}  // namespace mb2l

#endif  // MB2L_CORE_HPP

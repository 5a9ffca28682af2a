#ifndef MB2L_IMAGE_PIPELINE_HPP
#define MB2L_IMAGE_PIPELINE_HPP

#include "mb2l/core.hpp"
#include "mb2l/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mb2l {

enum class ImageEncoderKind { shallow_trainable, frozen_high };

struct ImageEncoderConfig {
  ImageEncoderKind kind = ImageEncoderKind::shallow_trainable;
  Index depth = 2;  // residual blocks (shallow) or conv stages (frozen)
  Index width = 16;
  Index out_dim = 64;
  std::uint64_t seed = 0;
  Index in_channels = 3;
  bool bias = true;
};

/// Trainable low-level image encoder: strided stem, residual 3x3 blocks,
/// global average pooling and a linear head.
template <typename Scalar>
struct ShallowResNet {
  ImageEncoderConfig cfg;
  Conv2d<Scalar> stem;
  std::vector<Conv2d<Scalar>> conv_a;
  std::vector<Conv2d<Scalar>> conv_b;
  Linear<Scalar> head;

  struct Cache {
    FeatureMap<Scalar> stem_pre;
    std::vector<FeatureMap<Scalar>> block_in, a_pre, a, b_pre;
    FeatureMap<Scalar> last;
    Matrix<Scalar> pooled;  // 1 x width
  };

  static ShallowResNet create(const ImageEncoderConfig& cfg) {
    require(cfg.kind == ImageEncoderKind::shallow_trainable, "shallow encoder requires kind shallow_trainable");
    require(cfg.depth >= 1 && cfg.width >= 1 && cfg.out_dim >= 1, "image encoder depth, width and out_dim must be >= 1");
    Rng rng(cfg.seed);
    ShallowResNet net;
    net.cfg = cfg;
    net.stem = Conv2d<Scalar>::random(cfg.in_channels, cfg.width, 3, 2, 1, cfg.bias, rng);
    for (Index b = 0; b < cfg.depth; ++b) {
      net.conv_a.push_back(Conv2d<Scalar>::random(cfg.width, cfg.width, 3, 1, 1, cfg.bias, rng));
      net.conv_b.push_back(Conv2d<Scalar>::random(cfg.width, cfg.width, 3, 1, 1, cfg.bias, rng, 0.5));
    }
    net.head = Linear<Scalar>::random(cfg.width, cfg.out_dim, rng, cfg.bias);
    return net;
  }

  RowVector<Scalar> forward(const FeatureMap<Scalar>& img, Cache& cache) const {
    cache.stem_pre = stem.forward(img);
    FeatureMap<Scalar> x = cache.stem_pre;
    x.data = relu(x.data);
    const auto blocks = static_cast<std::size_t>(cfg.depth);
    cache.block_in.resize(blocks);
    cache.a_pre.resize(blocks);
    cache.a.resize(blocks);
    cache.b_pre.resize(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      cache.block_in[b] = x;
      cache.a_pre[b] = conv_a[b].forward(x);
      cache.a[b] = cache.a_pre[b];
      cache.a[b].data = relu(cache.a[b].data);
      cache.b_pre[b] = conv_b[b].forward(cache.a[b]);
      cache.b_pre[b].data += x.data;
      x = cache.b_pre[b];
      x.data = relu(x.data);
    }
    cache.pooled = x.data.rowwise().mean().transpose();
    cache.last = std::move(x);
    return head.forward(cache.pooled);
  }

  RowVector<Scalar> forward(const FeatureMap<Scalar>& img) const {
    Cache cache;
    return forward(img, cache);
  }

  /// Accumulates parameter gradients; returns dL/d(image) when `want_input_grad`.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& img, const Cache& cache, const RowVector<Scalar>& grad_out,
                              ShallowResNet& grad, bool want_input_grad) const {
    const Matrix<Scalar> dpooled = head.backward(cache.pooled, grad_out, grad.head);
    const Index pixels = cache.last.pixels();
    Matrix<Scalar> dx = dpooled.transpose().replicate(1, pixels) / Scalar(pixels);
    for (std::size_t b = static_cast<std::size_t>(cfg.depth); b-- > 0;) {
      const Matrix<Scalar> db_pre = relu_backward(cache.b_pre[b].data, dx);
      const FeatureMap<Scalar> da = conv_b[b].backward(cache.a[b], db_pre, &grad.conv_b[b]);
      const Matrix<Scalar> da_pre = relu_backward(cache.a_pre[b].data, da.data);
      const FeatureMap<Scalar> dblock = conv_a[b].backward(cache.block_in[b], da_pre, &grad.conv_a[b]);
      dx = db_pre + dblock.data;
    }
    const Matrix<Scalar> dstem = relu_backward(cache.stem_pre.data, dx);
    if (want_input_grad) return stem.backward(img, dstem, &grad.stem);
    grad.stem.weight.noalias() += dstem * stem.im2col(img).transpose();
    if (stem.use_bias) grad.stem.bias += dstem.rowwise().sum();
    return {};
  }

  ShallowResNet zeros_like() const {
    ShallowResNet z;
    z.cfg = cfg;
    z.stem = stem.zeros_like();
    for (const auto& c : conv_a) z.conv_a.push_back(c.zeros_like());
    for (const auto& c : conv_b) z.conv_b.push_back(c.zeros_like());
    z.head = head.zeros_like();
    return z;
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    Conv2d<Scalar>::for_each(self.stem, prefix + "stem.", f);
    for (std::size_t b = 0; b < self.conv_a.size(); ++b) {
      Conv2d<Scalar>::for_each(self.conv_a[b], prefix + "block" + std::to_string(b) + ".a.", f);
      Conv2d<Scalar>::for_each(self.conv_b[b], prefix + "block" + std::to_string(b) + ".b.", f);
    }
    Linear<Scalar>::for_each(self.head, prefix + "head.", f);
  }
};

/// Seeded random conv stack standing in for a pretrained high-level backbone.
/// Immutable after construction; gradients only flow through it to the input.
template <typename Scalar>
class FrozenEncoder {
 public:
  struct Cache {
    std::vector<FeatureMap<Scalar>> inputs;
    std::vector<FeatureMap<Scalar>> pre;
    Matrix<Scalar> pooled;
    Index last_pixels = 0;
  };

  FrozenEncoder() = default;

  static FrozenEncoder create(const ImageEncoderConfig& cfg) {
    require(cfg.kind == ImageEncoderKind::frozen_high, "frozen encoder requires kind frozen_high");
    require(cfg.depth >= 1 && cfg.width >= 1 && cfg.out_dim >= 1, "image encoder depth, width and out_dim must be >= 1");
    FrozenEncoder enc;
    enc.cfg_ = cfg;
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Index in = cfg.in_channels;
    Index width = cfg.width;
    for (Index s = 0; s < cfg.depth; ++s) {
      enc.convs_.push_back(Conv2d<Scalar>::random(in, width, 3, 2, 1, cfg.bias, rng));
      if (cfg.bias) fill_normal(enc.convs_.back().bias, rng, 0.1);
      in = width;
      width *= 2;
    }
    enc.head_ = Linear<Scalar>::random(in, cfg.out_dim, rng, false);
    return enc;
  }

  const ImageEncoderConfig& config() const { return cfg_; }
  Index out_dim() const { return cfg_.out_dim; }

  RowVector<Scalar> forward(const FeatureMap<Scalar>& img, Cache& cache) const {
    FeatureMap<Scalar> x = img;
    cache.inputs.clear();
    cache.pre.clear();
    for (const auto& conv : convs_) {
      cache.inputs.push_back(x);
      cache.pre.push_back(conv.forward(x));
      x = cache.pre.back();
      x.data = relu(x.data);
    }
    cache.pooled = x.data.rowwise().mean().transpose();
    cache.last_pixels = x.pixels();
    return head_.forward(cache.pooled);
  }

  RowVector<Scalar> forward(const FeatureMap<Scalar>& img) const {
    Cache cache;
    return forward(img, cache);
  }

  /// dL/d(image); no parameter gradient exists for this encoder.
  FeatureMap<Scalar> backward_input(const Cache& cache, const RowVector<Scalar>& grad_out) const {
    const Matrix<Scalar> dpooled = grad_out * head_.weight.transpose();
    Matrix<Scalar> dx = dpooled.transpose().replicate(1, cache.last_pixels) / Scalar(cache.last_pixels);
    FeatureMap<Scalar> dimg;
    for (std::size_t s = convs_.size(); s-- > 0;) {
      const Matrix<Scalar> dpre = relu_backward(cache.pre[s].data, dx);
      dimg = convs_[s].backward(cache.inputs[s], dpre, nullptr);
      dx = dimg.data;
    }
    return dimg;
  }

  /// Read-only view of every parameter, in a stable order.
  template <typename F>
  void inspect(F&& f) const {
    for (std::size_t s = 0; s < convs_.size(); ++s) {
      f("conv" + std::to_string(s) + ".weight", convs_[s].weight);
      if (convs_[s].use_bias) f("conv" + std::to_string(s) + ".bias", convs_[s].bias);
    }
    f("head.weight", head_.weight);
  }

 private:
  ImageEncoderConfig cfg_;
  std::vector<Conv2d<Scalar>> convs_;
  Linear<Scalar> head_;
};

template <typename Scalar>
RowVector<Scalar> encode_image_low(const ImageGrid<Scalar>& img, const ShallowResNet<Scalar>& encoder) {
  require(encoder.cfg.kind == ImageEncoderKind::shallow_trainable, "encode_image_low needs a shallow_trainable encoder");
  return encoder.forward(img);
}

template <typename Scalar>
RowVector<Scalar> encode_image_low(const ImageGrid<Scalar>& img, const ImageEncoderConfig& cfg) {
  require(cfg.kind == ImageEncoderKind::shallow_trainable, "encode_image_low needs kind shallow_trainable");
  return ShallowResNet<Scalar>::create(cfg).forward(img);
}

template <typename Scalar>
RowVector<Scalar> encode_image_high(const ImageGrid<Scalar>& img, const FrozenEncoder<Scalar>& encoder) {
  return encoder.forward(img);
}

template <typename Scalar>
RowVector<Scalar> encode_image_high(const ImageGrid<Scalar>& img, const ImageEncoderConfig& cfg) {
  require(cfg.kind == ImageEncoderKind::frozen_high, "encode_image_high needs kind frozen_high");
  return FrozenEncoder<Scalar>::create(cfg).forward(img);
}

/// Externally computed high-level features: N x dim float32 rows plus a
/// sidecar text file (count, dim, source).
struct PrecomputedFeatures {
  std::string source;
  Matrix<float> values;
};

void write_precomputed_features(const std::filesystem::path& path, const PrecomputedFeatures& features);
PrecomputedFeatures read_precomputed_features(const std::filesystem::path& path);

}  // namespace mb2l

#endif  // MB2L_IMAGE_PIPELINE_HPP

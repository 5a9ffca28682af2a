#ifndef MB2L_MODEL_HPP
#define MB2L_MODEL_HPP

// Full EEG-image alignment model: foveated image gate, low/high image
// encoders, dual-stream EEG branch, four projection heads and a shared
// learnable temperature, with a batch loss that returns exact gradients.

#include "mb2l/alignment.hpp"
#include "mb2l/core.hpp"
#include "mb2l/degradation.hpp"
#include "mb2l/eeg_pipeline.hpp"
#include "mb2l/foveation.hpp"
#include "mb2l/image_pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mb2l {

struct ModelConfig {
  bool abvp = true;
  bool bvfe = true;
  bool mbcl = true;
  PriorKind prior = PriorKind::logistic;
  Degradation degradation = Degradation::blur;

  int image_size = 32;
  int image_channels = 3;
  std::vector<std::string> channel_names;
  int samples = 64;

  EegEncoderKind eeg_encoder = EegEncoderKind::projection;
  int token_dim = 64;
  int eeg_hidden = 64;
  int eeg_kernel = 8;
  int eeg_stride = 8;
  int eeg_filters = 4;
  int eeg_pool = 8;
  int attention_dim = 64;
  int heads = 1;

  int image_depth = 2;
  int image_width = 16;
  int image_out = 64;
  int frozen_depth = 3;
  int frozen_width = 16;
  int frozen_out = 64;
  std::uint64_t frozen_seed = 1234;

  int projection_dim = 64;
  double tau = 0.07;
  double alpha_low = 1.0;
  double alpha_high = 0.5;
  bool include_positive = true;
  double prior_preferred = 1.0;
  double prior_other = 0.3;

  std::uint64_t seed = 0;

  /// The gate only exists on the trainable image path.
  bool gate_active() const { return abvp && mbcl; }

  EegEncoderConfig eeg_encoder_config() const {
    EegEncoderConfig c;
    c.kind = eeg_encoder;
    c.channels = static_cast<Index>(channel_names.size());
    c.samples = samples;
    c.token_dim = token_dim;
    c.hidden = eeg_hidden;
    c.kernel = eeg_kernel;
    c.stride = eeg_stride;
    c.filters = eeg_filters;
    c.pool = eeg_pool;
    return c;
  }

  ImageEncoderConfig image_low_config() const {
    return {ImageEncoderKind::shallow_trainable, image_depth, image_width, image_out, seed ^ 0x51ULL, image_channels, true};
  }

  ImageEncoderConfig image_high_config() const {
    return {ImageEncoderKind::frozen_high, frozen_depth, frozen_width, frozen_out, frozen_seed, image_channels, true};
  }
};

template <typename Scalar>
struct ModelParams {
  bool gate_active = true;
  bool mbcl = true;
  FoveaPrior<Scalar> gate;
  EegBranch<Scalar> eeg;
  ShallowResNet<Scalar> image_low;
  ProjectionHead<Scalar> head_eeg_low;
  ProjectionHead<Scalar> head_eeg_high;
  ProjectionHead<Scalar> head_image_low;
  ProjectionHead<Scalar> head_image_high;
  Matrix<Scalar> log_inv_tau;  // 1 x 1, log(1 / tau)

  ModelParams zeros_like() const {
    ModelParams z;
    z.gate_active = gate_active;
    z.mbcl = mbcl;
    z.gate = gate;
    z.gate.params.setZero();
    z.eeg = eeg.zeros_like();
    if (mbcl) z.image_low = image_low.zeros_like();
    z.head_eeg_low = head_eeg_low.zeros_like();
    z.head_eeg_high = head_eeg_high.zeros_like();
    z.head_image_low = head_image_low.zeros_like();
    z.head_image_high = head_image_high.zeros_like();
    z.log_inv_tau = Matrix<Scalar>::Zero(1, 1);
    return z;
  }

  /// Visits every trainable tensor (the frozen encoder is not part of this set).
  template <typename Self, typename F>
  static void for_each(Self& self, F&& f) {
    if (self.gate_active) f(std::string("gate.params"), self.gate.params);
    EegBranch<Scalar>::for_each(self.eeg, "eeg.", f);
    if (self.mbcl) {
      ShallowResNet<Scalar>::for_each(self.image_low, "image_low.", f);
      ProjectionHead<Scalar>::for_each(self.head_eeg_low, "head_eeg_low.", f);
      ProjectionHead<Scalar>::for_each(self.head_image_low, "head_image_low.", f);
      ProjectionHead<Scalar>::for_each(self.head_image_high, "head_image_high.", f);
    }
    ProjectionHead<Scalar>::for_each(self.head_eeg_high, "head_eeg_high.", f);
    f(std::string("log_inv_tau"), self.log_inv_tau);
  }
};

template <typename Scalar>
struct Model {
  ModelConfig cfg;
  ModelParams<Scalar> params;
  FrozenEncoder<Scalar> frozen;

  static Model create(const ModelConfig& cfg) {
    require(!cfg.channel_names.empty(), "model config needs a channel montage");
    require(cfg.image_size >= 4, "image size must be at least 4");
    Model model;
    model.cfg = cfg;
    Rng rng(cfg.seed);
    auto& p = model.params;
    p.gate_active = cfg.gate_active();
    p.mbcl = cfg.mbcl;
    p.gate = FoveaPrior<Scalar>::make_default(cfg.prior, cfg.image_size, cfg.image_size);

    const auto eeg_cfg = cfg.eeg_encoder_config();
    p.eeg.biomimetic = cfg.bvfe;
    p.eeg.prior = default_channel_prior<Scalar>(cfg.channel_names, {cfg.prior_preferred, cfg.prior_other});
    p.eeg.f_low = EegEncoder<Scalar>::create(eeg_cfg, rng);
    p.eeg.f_high = EegEncoder<Scalar>::create(eeg_cfg, rng);
    const Index token_dim = p.eeg.f_low.output_dim();
    p.eeg.attn = CrossAttention<Scalar>::random(token_dim, token_dim, cfg.attention_dim, rng, cfg.heads);

    model.frozen = FrozenEncoder<Scalar>::create(cfg.image_high_config());
    const Index proj = cfg.projection_dim;
    const Index high_in = p.eeg.high_dim();
    if (cfg.mbcl) {
      p.image_low = ShallowResNet<Scalar>::create(cfg.image_low_config());
      p.head_eeg_low = ProjectionHead<Scalar>::random(token_dim, 2 * proj, proj, rng);
      p.head_eeg_high = ProjectionHead<Scalar>::random(high_in, 2 * proj, proj, rng);
      p.head_image_low = ProjectionHead<Scalar>::random(cfg.image_out, 2 * proj, proj, rng);
      p.head_image_high = ProjectionHead<Scalar>::random(cfg.frozen_out, 2 * proj, proj, rng);
    } else {
      p.head_eeg_high = ProjectionHead<Scalar>::random(high_in, 2 * cfg.frozen_out, cfg.frozen_out, rng);
    }
    p.log_inv_tau = Matrix<Scalar>::Constant(1, 1, Scalar(-std::log(cfg.tau)));
    return model;
  }

  ContrastiveConfig contrastive() const {
    return {static_cast<double>(std::exp(-params.log_inv_tau(0, 0))), cfg.alpha_low, cfg.alpha_high,
            cfg.include_positive};
  }
};

/// Model-ready view of a sample list: images (original, attenuated and the
/// fixed input used when the gate is inactive), EEG matrices and, for a
/// fixed image input, cached frozen features.
template <typename Scalar>
struct PreparedSet {
  std::vector<ImageGrid<Scalar>> original;
  std::vector<ImageGrid<Scalar>> attenuated;
  std::vector<ImageGrid<Scalar>> input;
  std::vector<Matrix<Scalar>> epochs;
  std::vector<int> concept_ids;
  std::vector<RowVector<Scalar>> frozen_features;
  RadialMap<Scalar> radial;

  Index size() const { return static_cast<Index>(epochs.size()); }
};

/// Fills frozen-feature cache for the fixed (gate-free) image input.
template <typename Scalar>
void cache_frozen_features(const Model<Scalar>& model, PreparedSet<Scalar>& set) {
  set.frozen_features.clear();
  if (model.cfg.gate_active()) return;
  for (const auto& img : set.input) set.frozen_features.push_back(model.frozen.forward(img));
}

template <typename Scalar>
struct BatchLoss {
  Scalar total = Scalar(0);
  Scalar low = Scalar(0);
  Scalar high = Scalar(0);
};

/// Total contrastive loss of a batch; when `grad` is non-null, accumulates
/// the gradient of that loss into it.
template <typename Scalar>
BatchLoss<Scalar> batch_loss(const Model<Scalar>& model, const PreparedSet<Scalar>& data,
                             const std::vector<Index>& batch, ModelParams<Scalar>* grad) {
  const auto& cfg = model.cfg;
  const auto& p = model.params;
  const Index n = static_cast<Index>(batch.size());
  require(n >= 1, "batch must be non-empty");
  const bool gate = cfg.gate_active();
  const bool need_grad = grad != nullptr;

  Matrix<Scalar> gate_weights;
  if (gate) gate_weights = gate_map(p.gate, data.radial);

  std::vector<ImageGrid<Scalar>> fused(gate ? static_cast<std::size_t>(n) : 0);
  std::vector<typename ShallowResNet<Scalar>::Cache> low_caches(cfg.mbcl ? static_cast<std::size_t>(n) : 0);
  std::vector<typename FrozenEncoder<Scalar>::Cache> high_caches(gate ? static_cast<std::size_t>(n) : 0);
  std::vector<typename EegBranch<Scalar>::Cache> eeg_caches(static_cast<std::size_t>(n));

  Matrix<Scalar> x_image_low(n, cfg.mbcl ? cfg.image_out : 0);
  Matrix<Scalar> x_image_high(n, cfg.frozen_out);
  Matrix<Scalar> x_eeg_low(n, p.eeg.low_dim());
  Matrix<Scalar> x_eeg_high(n, p.eeg.high_dim());

  for (Index b = 0; b < n; ++b) {
    const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(b)]);
    const auto ub = static_cast<std::size_t>(b);
    const ImageGrid<Scalar>* image = &data.input[idx];
    if (gate) {
      fused[ub] = fuse(data.original[idx], data.attenuated[idx], gate_weights);
      image = &fused[ub];
    }
    if (cfg.mbcl) x_image_low.row(b) = p.image_low.forward(*image, low_caches[ub]);
    if (gate) {
      x_image_high.row(b) = model.frozen.forward(*image, high_caches[ub]);
    } else if (idx < data.frozen_features.size()) {
      x_image_high.row(b) = data.frozen_features[idx];
    } else {
      x_image_high.row(b) = model.frozen.forward(*image);
    }
    const auto emb = p.eeg.forward(data.epochs[idx], eeg_caches[ub]);
    x_eeg_low.row(b) = emb.low;
    x_eeg_high.row(b) = emb.high;
  }

  const Scalar theta = p.log_inv_tau(0, 0);
  const Scalar alpha_low = Scalar(cfg.alpha_low);
  const Scalar alpha_high = Scalar(cfg.alpha_high);
  BatchLoss<Scalar> out;
  typename ProjectionHead<Scalar>::Cache c_el, c_eh, c_il, c_ih;

  if (!cfg.mbcl) {
    const Matrix<Scalar> z_eh = p.head_eeg_high.forward(x_eeg_high, c_eh);
    const auto r = info_nce_with_gradient(x_image_high, z_eh, theta, cfg.include_positive, need_grad);
    out.high = r.loss;
    out.total = r.loss;
    if (!need_grad) return out;
    grad->log_inv_tau(0, 0) += r.grad_log_inv_tau;
    const Matrix<Scalar> d_eh = p.head_eeg_high.backward(x_eeg_high, c_eh, r.grad_eeg, grad->head_eeg_high);
    const RowVector<Scalar> zero_low = RowVector<Scalar>::Zero(p.eeg.low_dim());
    for (Index b = 0; b < n; ++b) {
      const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(b)]);
      p.eeg.backward(data.epochs[idx], eeg_caches[static_cast<std::size_t>(b)], zero_low, d_eh.row(b), grad->eeg);
    }
    return out;
  }

  const Matrix<Scalar> z_el = p.head_eeg_low.forward(x_eeg_low, c_el);
  const Matrix<Scalar> z_eh = p.head_eeg_high.forward(x_eeg_high, c_eh);
  const Matrix<Scalar> z_il = p.head_image_low.forward(x_image_low, c_il);
  const Matrix<Scalar> z_ih = p.head_image_high.forward(x_image_high, c_ih);
  const auto r_low = info_nce_with_gradient(z_il, z_el, theta, cfg.include_positive, need_grad);
  const auto r_high = info_nce_with_gradient(z_ih, z_eh, theta, cfg.include_positive, need_grad);
  out.low = r_low.loss;
  out.high = r_high.loss;
  out.total = alpha_low * r_low.loss + alpha_high * r_high.loss;
  if (!need_grad) return out;

  grad->log_inv_tau(0, 0) += alpha_low * r_low.grad_log_inv_tau + alpha_high * r_high.grad_log_inv_tau;
  const Matrix<Scalar> d_el =
      p.head_eeg_low.backward(x_eeg_low, c_el, Matrix<Scalar>(alpha_low * r_low.grad_eeg), grad->head_eeg_low);
  const Matrix<Scalar> d_eh =
      p.head_eeg_high.backward(x_eeg_high, c_eh, Matrix<Scalar>(alpha_high * r_high.grad_eeg), grad->head_eeg_high);
  const Matrix<Scalar> d_il =
      p.head_image_low.backward(x_image_low, c_il, Matrix<Scalar>(alpha_low * r_low.grad_image), grad->head_image_low);
  const Matrix<Scalar> d_ih = p.head_image_high.backward(x_image_high, c_ih,
                                                         Matrix<Scalar>(alpha_high * r_high.grad_image),
                                                         grad->head_image_high);

  Matrix<Scalar> d_gate_weights;
  if (gate) d_gate_weights = Matrix<Scalar>::Zero(data.radial.height, data.radial.width);
  for (Index b = 0; b < n; ++b) {
    const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(b)]);
    const auto ub = static_cast<std::size_t>(b);
    p.eeg.backward(data.epochs[idx], eeg_caches[ub], d_el.row(b), d_eh.row(b), grad->eeg);
    const ImageGrid<Scalar>& image = gate ? fused[ub] : data.input[idx];
    FeatureMap<Scalar> d_image = p.image_low.backward(image, low_caches[ub], d_il.row(b), grad->image_low, gate);
    if (gate) {
      d_image.data += model.frozen.backward_input(high_caches[ub], d_ih.row(b)).data;
      d_gate_weights += fuse_weight_gradient(data.original[idx], data.attenuated[idx], d_image.data);
    }
  }
  if (gate) grad->gate.params += gate_map_backward(p.gate, data.radial, d_gate_weights);
  return out;
}

template <typename Scalar>
struct EmbeddingSet {
  bool has_low = true;
  Matrix<Scalar> eeg_low, eeg_high, image_low, image_high;
};

/// Projected embeddings of every sample (no gradient bookkeeping).
template <typename Scalar>
EmbeddingSet<Scalar> embed(const Model<Scalar>& model, const PreparedSet<Scalar>& data) {
  const auto& cfg = model.cfg;
  const auto& p = model.params;
  const Index n = data.size();
  const bool gate = cfg.gate_active();
  Matrix<Scalar> gate_weights;
  if (gate) gate_weights = gate_map(p.gate, data.radial);
  Matrix<Scalar> x_il(n, cfg.mbcl ? cfg.image_out : 0), x_ih(n, cfg.frozen_out);
  Matrix<Scalar> x_el(n, p.eeg.low_dim()), x_eh(n, p.eeg.high_dim());
  for (Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    ImageGrid<Scalar> fused;
    const ImageGrid<Scalar>* image = &data.input[idx];
    if (gate) {
      fused = fuse(data.original[idx], data.attenuated[idx], gate_weights);
      image = &fused;
    }
    if (cfg.mbcl) x_il.row(i) = p.image_low.forward(*image);
    if (!gate && idx < data.frozen_features.size()) {
      x_ih.row(i) = data.frozen_features[idx];
    } else {
      x_ih.row(i) = model.frozen.forward(*image);
    }
    const auto emb = p.eeg.forward(data.epochs[idx]);
    x_el.row(i) = emb.low;
    x_eh.row(i) = emb.high;
  }
  EmbeddingSet<Scalar> out;
  out.has_low = cfg.mbcl;
  if (cfg.mbcl) {
    out.eeg_low = p.head_eeg_low.forward(x_el);
    out.image_low = p.head_image_low.forward(x_il);
    out.image_high = p.head_image_high.forward(x_ih);
  } else {
    out.image_high = x_ih;
  }
  out.eeg_high = p.head_eeg_high.forward(x_eh);
  return out;
}

}  // namespace mb2l

#endif  // MB2L_MODEL_HPP

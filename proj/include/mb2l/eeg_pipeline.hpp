#ifndef MB2L_EEG_PIPELINE_HPP
#define MB2L_EEG_PIPELINE_HPP

#include "mb2l/core.hpp"
#include "mb2l/nn.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mb2l {

/// Occipital / parieto-occipital electrodes that seed the low-level stream.
inline const std::set<std::string>& low_level_channels() {
  static const std::set<std::string> names{"O1", "Oz", "O2", "PO7", "PO3", "POz", "PO4", "PO8"};
  return names;
}

/// Parietal / posterior electrodes that seed the high-level stream.
inline const std::set<std::string>& high_level_channels() {
  static const std::set<std::string> names{"P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PO7", "PO8"};
  return names;
}

/// The 17 occipital/parietal electrodes used for visual decoding, in canonical order.
inline const std::vector<std::string>& visual_montage() {
  static const std::vector<std::string> names{"P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
                                              "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2"};
  return names;
}

struct ChannelWeights {
  std::vector<double> low;
  std::vector<double> high;
};

struct ChannelPriorConfig {
  double preferred = 1.0;
  double other = 0.3;
};

/// Nominal physiological initial weights for a montage.
inline ChannelWeights default_channel_weights(const std::vector<std::string>& names,
                                              const ChannelPriorConfig& cfg = {}) {
  require(!names.empty(), "channel prior needs at least one channel name");
  ChannelWeights w;
  for (const auto& name : names) {
    w.low.push_back(low_level_channels().count(name) ? cfg.preferred : cfg.other);
    w.high.push_back(high_level_channels().count(name) ? cfg.preferred : cfg.other);
  }
  return w;
}

/// Learnable per-channel weights for the two streams, stored as logits.
template <typename Scalar>
struct ChannelPrior {
  static constexpr double kEpsilon = 0.01;

  Matrix<Scalar> low_logits;   // C x 1
  Matrix<Scalar> high_logits;  // C x 1
  bool trainable = true;

  static ChannelPrior from_weights(const std::vector<double>& low, const std::vector<double>& high) {
    require(low.size() == high.size() && !low.empty(), "channel prior weight vectors must be non-empty and equal length");
    ChannelPrior prior;
    prior.low_logits.resize(static_cast<Index>(low.size()), 1);
    prior.high_logits.resize(static_cast<Index>(high.size()), 1);
    for (std::size_t i = 0; i < low.size(); ++i) {
      prior.low_logits(static_cast<Index>(i), 0) = Scalar(logit(std::clamp(low[i], kEpsilon, 1.0 - kEpsilon)));
      prior.high_logits(static_cast<Index>(i), 0) = Scalar(logit(std::clamp(high[i], kEpsilon, 1.0 - kEpsilon)));
    }
    return prior;
  }

  Index channels() const { return low_logits.rows(); }
  Vector<Scalar> low_weights() const { return low_logits.col(0).unaryExpr([](Scalar v) { return sigmoid(v); }); }
  Vector<Scalar> high_weights() const { return high_logits.col(0).unaryExpr([](Scalar v) { return sigmoid(v); }); }

  ChannelPrior zeros_like() const {
    return {Matrix<Scalar>::Zero(channels(), 1), Matrix<Scalar>::Zero(channels(), 1), trainable};
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    if (!self.trainable) return;
    f(prefix + "low_logits", self.low_logits);
    f(prefix + "high_logits", self.high_logits);
  }
};

template <typename Scalar>
ChannelPrior<Scalar> default_channel_prior(const std::vector<std::string>& names, const ChannelPriorConfig& cfg = {}) {
  const auto w = default_channel_weights(names, cfg);
  return ChannelPrior<Scalar>::from_weights(w.low, w.high);
}

/// Row-wise channel scaling of both streams.
template <typename Scalar>
std::pair<EEGEpoch<Scalar>, EEGEpoch<Scalar>> split_channels(const EEGEpoch<Scalar>& epoch,
                                                             const Vector<Scalar>& w_low,
                                                             const Vector<Scalar>& w_high) {
  require(w_low.size() == epoch.channels() && w_high.size() == epoch.channels(),
          "channel prior has " + std::to_string(w_low.size()) + " weights for an epoch with " +
              std::to_string(epoch.channels()) + " channels");
  EEGEpoch<Scalar> low{w_low.asDiagonal() * epoch.data, epoch.channel_names, epoch.sampling_rate};
  EEGEpoch<Scalar> high{w_high.asDiagonal() * epoch.data, epoch.channel_names, epoch.sampling_rate};
  return {std::move(low), std::move(high)};
}

template <typename Scalar>
std::pair<EEGEpoch<Scalar>, EEGEpoch<Scalar>> split_channels(const EEGEpoch<Scalar>& epoch,
                                                             const ChannelPrior<Scalar>& prior) {
  require(prior.channels() == epoch.channels(), "channel prior has " + std::to_string(prior.channels()) +
                                                    " weights for an epoch with " + std::to_string(epoch.channels()) +
                                                    " channels");
  return split_channels(epoch, Vector<Scalar>(prior.low_weights()), Vector<Scalar>(prior.high_weights()));
}

enum class EegEncoderKind { projection, shallow_conv, depthwise_conv, identity };

inline std::string to_string(EegEncoderKind kind) {
  switch (kind) {
    case EegEncoderKind::projection: return "projection";
    case EegEncoderKind::shallow_conv: return "shallow_conv";
    case EegEncoderKind::depthwise_conv: return "depthwise_conv";
    case EegEncoderKind::identity: return "identity";
  }
  return "projection";
}

inline EegEncoderKind eeg_encoder_kind_from_string(const std::string& name) {
  if (name == "projection") return EegEncoderKind::projection;
  if (name == "shallow_conv") return EegEncoderKind::shallow_conv;
  if (name == "depthwise_conv") return EegEncoderKind::depthwise_conv;
  if (name == "identity") return EegEncoderKind::identity;
  throw InvalidParameter("unknown EEG encoder '" + name + "'");
}

struct EegEncoderConfig {
  EegEncoderKind kind = EegEncoderKind::projection;
  Index channels = 17;
  Index samples = 64;
  Index token_dim = 64;  // d_in
  Index hidden = 64;     // projection: hidden width
  Index kernel = 8;      // temporal patch / filter length
  Index stride = 8;      // projection: patch stride
  Index filters = 4;     // shallow_conv: temporal filters
  Index pool = 8;        // conv variants: token pooling window
  bool bias = true;
  bool positional = true;  // learnable per-position pre-activation offset
};

/// Pluggable EEG encoder: C x T epoch -> token matrix (tokens x token_dim).
///
/// projection      non-overlapping temporal patches across all channels,
///                 two-layer GELU MLP per patch.
/// shallow_conv    shared temporal filters per channel, spatial mixing,
///                 GELU, average pooling into tokens.
/// depthwise_conv  per-channel temporal filter, pointwise mixing, GELU,
///                 average pooling into tokens.
/// identity        tokens are the time samples (T x C).
template <typename Scalar>
struct EegEncoder {
  EegEncoderConfig cfg;
  Matrix<Scalar> w1, b1, w2, b2;
  Matrix<Scalar> pos;  // rows of the pre-activation x hidden width

  struct Cache {
    Matrix<Scalar> features;  // patches or temporal filter outputs
    Matrix<Scalar> pre;       // pre-activation
    Matrix<Scalar> act;       // post-activation
  };

  static EegEncoder create(const EegEncoderConfig& cfg, Rng& rng) {
    require(cfg.channels >= 1 && cfg.samples >= 1, "EEG encoder needs a non-empty epoch shape");
    EegEncoder enc;
    enc.cfg = cfg;
    switch (cfg.kind) {
      case EegEncoderKind::projection: {
        require(cfg.kernel >= 1 && cfg.kernel <= cfg.samples && cfg.stride >= 1, "invalid projection patch geometry");
        enc.w1.resize(cfg.channels * cfg.kernel, cfg.hidden);
        fill_normal(enc.w1, rng, std::sqrt(2.0 / static_cast<double>(cfg.channels * cfg.kernel)));
        enc.b1 = Matrix<Scalar>::Zero(1, cfg.hidden);
        enc.w2.resize(cfg.hidden, cfg.token_dim);
        fill_normal(enc.w2, rng, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
        enc.b2 = Matrix<Scalar>::Zero(1, cfg.token_dim);
        break;
      }
      case EegEncoderKind::shallow_conv: {
        require(cfg.kernel >= 1 && cfg.kernel <= cfg.samples && cfg.pool >= 1, "invalid shallow-conv geometry");
        require((cfg.samples - cfg.kernel + 1) / cfg.pool >= 1, "shallow-conv pooling window exceeds signal length");
        enc.w1.resize(cfg.kernel, cfg.filters);
        fill_normal(enc.w1, rng, 1.0 / std::sqrt(static_cast<double>(cfg.kernel)));
        enc.w2.resize(cfg.channels * cfg.filters, cfg.token_dim);
        fill_normal(enc.w2, rng, std::sqrt(2.0 / static_cast<double>(cfg.channels * cfg.filters)));
        enc.b2 = Matrix<Scalar>::Zero(1, cfg.token_dim);
        break;
      }
      case EegEncoderKind::depthwise_conv: {
        require(cfg.kernel >= 1 && cfg.kernel <= cfg.samples && cfg.pool >= 1, "invalid depthwise-conv geometry");
        require((cfg.samples - cfg.kernel + 1) / cfg.pool >= 1, "depthwise-conv pooling window exceeds signal length");
        enc.w1.resize(cfg.channels, cfg.kernel);
        fill_normal(enc.w1, rng, 1.0 / std::sqrt(static_cast<double>(cfg.kernel)));
        enc.w2.resize(cfg.channels, cfg.token_dim);
        fill_normal(enc.w2, rng, std::sqrt(2.0 / static_cast<double>(cfg.channels)));
        enc.b2 = Matrix<Scalar>::Zero(1, cfg.token_dim);
        break;
      }
      case EegEncoderKind::identity: break;
    }
    if (cfg.positional && cfg.kind != EegEncoderKind::identity) {
      const Index rows = cfg.kind == EegEncoderKind::projection ? enc.token_count() : cfg.samples - cfg.kernel + 1;
      enc.pos.resize(rows, cfg.kind == EegEncoderKind::projection ? cfg.hidden : cfg.token_dim);
      fill_normal(enc.pos, rng, 0.1);
    }
    return enc;
  }

  bool has_pos() const { return pos.size() > 0; }

  Index output_dim() const { return cfg.kind == EegEncoderKind::identity ? cfg.channels : cfg.token_dim; }

  Index token_count() const {
    switch (cfg.kind) {
      case EegEncoderKind::projection: return (cfg.samples - cfg.kernel) / cfg.stride + 1;
      case EegEncoderKind::shallow_conv:
      case EegEncoderKind::depthwise_conv: return (cfg.samples - cfg.kernel + 1) / cfg.pool;
      case EegEncoderKind::identity: return cfg.samples;
    }
    return 0;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    require(x.rows() == cfg.channels && x.cols() == cfg.samples,
            "EEG encoder expects " + std::to_string(cfg.channels) + "x" + std::to_string(cfg.samples) + " input, got " +
                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    switch (cfg.kind) {
      case EegEncoderKind::projection: {
        const Index n = token_count();
        cache.features.resize(n, cfg.channels * cfg.kernel);
        for (Index t = 0; t < n; ++t)
          for (Index c = 0; c < cfg.channels; ++c)
            cache.features.block(t, c * cfg.kernel, 1, cfg.kernel) = x.block(c, t * cfg.stride, 1, cfg.kernel);
        cache.pre = cache.features * w1;
        if (cfg.bias) cache.pre.rowwise() += b1.row(0);
        if (has_pos()) cache.pre += pos;
        cache.act = gelu(cache.pre);
        Matrix<Scalar> tokens = cache.act * w2;
        if (cfg.bias) tokens.rowwise() += b2.row(0);
        return tokens;
      }
      case EegEncoderKind::shallow_conv: {
        const Index steps = cfg.samples - cfg.kernel + 1;
        cache.features.resize(steps, cfg.channels * cfg.filters);
        for (Index c = 0; c < cfg.channels; ++c) {
          const Matrix<Scalar> windows = sliding_windows(x.row(c), steps);
          cache.features.block(0, c * cfg.filters, steps, cfg.filters) = windows * w1;
        }
        cache.pre = cache.features * w2;
        if (cfg.bias) cache.pre.rowwise() += b2.row(0);
        if (has_pos()) cache.pre += pos;
        cache.act = gelu(cache.pre);
        return pool(cache.act);
      }
      case EegEncoderKind::depthwise_conv: {
        const Index steps = cfg.samples - cfg.kernel + 1;
        cache.features.resize(steps, cfg.channels);
        for (Index c = 0; c < cfg.channels; ++c) {
          cache.features.col(c) = sliding_windows(x.row(c), steps) * w1.row(c).transpose();
        }
        cache.pre = cache.features * w2;
        if (cfg.bias) cache.pre.rowwise() += b2.row(0);
        if (has_pos()) cache.pre += pos;
        cache.act = gelu(cache.pre);
        return pool(cache.act);
      }
      case EegEncoderKind::identity: return x.transpose();
    }
    return {};
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Cache cache;
    return forward(x, cache);
  }

  /// Returns dL/dx and accumulates parameter gradients into `grad`.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Cache& cache, const Matrix<Scalar>& grad_tokens,
                          EegEncoder& grad) const {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(cfg.channels, cfg.samples);
    switch (cfg.kind) {
      case EegEncoderKind::projection: {
        grad.w2.noalias() += cache.act.transpose() * grad_tokens;
        if (cfg.bias) grad.b2 += grad_tokens.colwise().sum();
        const Matrix<Scalar> dpre = gelu_backward(cache.pre, Matrix<Scalar>(grad_tokens * w2.transpose()));
        grad.w1.noalias() += cache.features.transpose() * dpre;
        if (cfg.bias) grad.b1 += dpre.colwise().sum();
        if (has_pos()) grad.pos += dpre;
        const Matrix<Scalar> dpatch = dpre * w1.transpose();
        for (Index t = 0; t < token_count(); ++t)
          for (Index c = 0; c < cfg.channels; ++c)
            dx.block(c, t * cfg.stride, 1, cfg.kernel) += dpatch.block(t, c * cfg.kernel, 1, cfg.kernel);
        return dx;
      }
      case EegEncoderKind::shallow_conv: {
        const Index steps = cfg.samples - cfg.kernel + 1;
        const Matrix<Scalar> dpre = gelu_backward(cache.pre, pool_backward(grad_tokens, steps));
        grad.w2.noalias() += cache.features.transpose() * dpre;
        if (cfg.bias) grad.b2 += dpre.colwise().sum();
        if (has_pos()) grad.pos += dpre;
        const Matrix<Scalar> dfeat = dpre * w2.transpose();
        for (Index c = 0; c < cfg.channels; ++c) {
          const Matrix<Scalar> windows = sliding_windows(x.row(c), steps);
          const Matrix<Scalar> dblock = dfeat.block(0, c * cfg.filters, steps, cfg.filters);
          grad.w1.noalias() += windows.transpose() * dblock;
          scatter_windows(Matrix<Scalar>(dblock * w1.transpose()), dx, c);
        }
        return dx;
      }
      case EegEncoderKind::depthwise_conv: {
        const Index steps = cfg.samples - cfg.kernel + 1;
        const Matrix<Scalar> dpre = gelu_backward(cache.pre, pool_backward(grad_tokens, steps));
        grad.w2.noalias() += cache.features.transpose() * dpre;
        if (cfg.bias) grad.b2 += dpre.colwise().sum();
        if (has_pos()) grad.pos += dpre;
        const Matrix<Scalar> dfeat = dpre * w2.transpose();
        for (Index c = 0; c < cfg.channels; ++c) {
          const Matrix<Scalar> windows = sliding_windows(x.row(c), steps);
          grad.w1.row(c) += (windows.transpose() * dfeat.col(c)).transpose();
          scatter_windows(Matrix<Scalar>(dfeat.col(c) * w1.row(c)), dx, c);
        }
        return dx;
      }
      case EegEncoderKind::identity: return grad_tokens.transpose();
    }
    return dx;
  }

  EegEncoder zeros_like() const {
    EegEncoder z;
    z.cfg = cfg;
    z.w1 = Matrix<Scalar>::Zero(w1.rows(), w1.cols());
    z.b1 = Matrix<Scalar>::Zero(b1.rows(), b1.cols());
    z.w2 = Matrix<Scalar>::Zero(w2.rows(), w2.cols());
    z.b2 = Matrix<Scalar>::Zero(b2.rows(), b2.cols());
    z.pos = Matrix<Scalar>::Zero(pos.rows(), pos.cols());
    return z;
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    switch (self.cfg.kind) {
      case EegEncoderKind::projection:
        f(prefix + "w1", self.w1);
        if (self.cfg.bias) f(prefix + "b1", self.b1);
        f(prefix + "w2", self.w2);
        if (self.cfg.bias) f(prefix + "b2", self.b2);
        break;
      case EegEncoderKind::shallow_conv:
      case EegEncoderKind::depthwise_conv:
        f(prefix + "w1", self.w1);
        f(prefix + "w2", self.w2);
        if (self.cfg.bias) f(prefix + "b2", self.b2);
        break;
      case EegEncoderKind::identity: break;
    }
    if (self.pos.size() > 0) f(prefix + "pos", self.pos);
  }

 private:
  Matrix<Scalar> sliding_windows(const RowVector<Scalar>& signal, Index steps) const {
    Matrix<Scalar> windows(steps, cfg.kernel);
    for (Index t = 0; t < steps; ++t) windows.row(t) = signal.segment(t, cfg.kernel);
    return windows;
  }

  void scatter_windows(const Matrix<Scalar>& dwindows, Matrix<Scalar>& dx, Index channel) const {
    for (Index t = 0; t < dwindows.rows(); ++t) dx.block(channel, t, 1, cfg.kernel) += dwindows.row(t);
  }

  Matrix<Scalar> pool(const Matrix<Scalar>& act) const {
    const Index n = act.rows() / cfg.pool;
    Matrix<Scalar> tokens(n, act.cols());
    for (Index t = 0; t < n; ++t) tokens.row(t) = act.block(t * cfg.pool, 0, cfg.pool, act.cols()).colwise().mean();
    return tokens;
  }

  Matrix<Scalar> pool_backward(const Matrix<Scalar>& grad_tokens, Index steps) const {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(steps, grad_tokens.cols());
    for (Index t = 0; t < grad_tokens.rows(); ++t)
      g.block(t * cfg.pool, 0, cfg.pool, grad_tokens.cols()) =
          grad_tokens.row(t).replicate(cfg.pool, 1) / Scalar(cfg.pool);
    return g;
  }
};

/// softmax((X W_Q)(Y W_K)^T / sqrt(d_head)) (Y W_V), optionally split into heads.
template <typename Scalar>
struct CrossAttention {
  Matrix<Scalar> w_q;  // d_x x d
  Matrix<Scalar> w_k;  // d_y x d
  Matrix<Scalar> w_v;  // d_y x d
  Index heads = 1;

  struct Cache {
    Matrix<Scalar> q, k, v;
    std::vector<Matrix<Scalar>> attention;  // per head, n x m
  };

  static CrossAttention random(Index d_x, Index d_y, Index d, Rng& rng, Index heads = 1) {
    require(d >= 1 && heads >= 1 && d % heads == 0, "attention dimension must be a positive multiple of the head count");
    CrossAttention attn;
    attn.heads = heads;
    attn.w_q.resize(d_x, d);
    attn.w_k.resize(d_y, d);
    attn.w_v.resize(d_y, d);
    fill_normal(attn.w_q, rng, 1.0 / std::sqrt(static_cast<double>(d_x)));
    fill_normal(attn.w_k, rng, 1.0 / std::sqrt(static_cast<double>(d_y)));
    fill_normal(attn.w_v, rng, 1.0 / std::sqrt(static_cast<double>(d_y)));
    return attn;
  }

  Index dim() const { return w_q.cols(); }
  Index head_dim() const { return dim() / heads; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& y, Cache& cache) const {
    require(x.cols() == w_q.rows(), "cross-attention query input has " + std::to_string(x.cols()) +
                                        " features, expected " + std::to_string(w_q.rows()));
    require(y.cols() == w_k.rows() && y.cols() == w_v.rows(), "cross-attention key/value input has " +
                                                                  std::to_string(y.cols()) + " features, expected " +
                                                                  std::to_string(w_k.rows()));
    require(w_q.cols() == w_k.cols() && w_q.cols() == w_v.cols(), "cross-attention projections disagree on d");
    require(y.rows() >= 1, "cross-attention needs at least one key");
    cache.q = x * w_q;
    cache.k = y * w_k;
    cache.v = y * w_v;
    const Index dh = head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    Matrix<Scalar> out(x.rows(), dim());
    cache.attention.resize(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
      Matrix<Scalar> scores = cache.q.middleCols(h * dh, dh) * cache.k.middleCols(h * dh, dh).transpose() * scale;
      for (Index i = 0; i < scores.rows(); ++i) {
        const Scalar mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      out.middleCols(h * dh, dh) = scores * cache.v.middleCols(h * dh, dh);
      cache.attention[static_cast<std::size_t>(h)] = std::move(scores);
    }
    return out;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& y) const {
    Cache cache;
    return forward(x, y, cache);
  }

  /// Returns (dL/dX, dL/dY); accumulates projection gradients into `grad`.
  std::pair<Matrix<Scalar>, Matrix<Scalar>> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                                                     const Cache& cache, const Matrix<Scalar>& grad_out,
                                                     CrossAttention& grad) const {
    const Index dh = head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    Matrix<Scalar> dq(cache.q.rows(), dim());
    Matrix<Scalar> dk(cache.k.rows(), dim());
    Matrix<Scalar> dv(cache.v.rows(), dim());
    for (Index h = 0; h < heads; ++h) {
      const Matrix<Scalar>& a = cache.attention[static_cast<std::size_t>(h)];
      const Matrix<Scalar> dout = grad_out.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = a.transpose() * dout;
      const Matrix<Scalar> da = dout * cache.v.middleCols(h * dh, dh).transpose();
      const Vector<Scalar> row_dot = a.cwiseProduct(da).rowwise().sum();
      const Matrix<Scalar> dscores = a.cwiseProduct(Matrix<Scalar>(da.colwise() - row_dot)) * scale;
      dq.middleCols(h * dh, dh) = dscores * cache.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = dscores.transpose() * cache.q.middleCols(h * dh, dh);
    }
    grad.w_q.noalias() += x.transpose() * dq;
    grad.w_k.noalias() += y.transpose() * dk;
    grad.w_v.noalias() += y.transpose() * dv;
    Matrix<Scalar> dx = dq * w_q.transpose();
    Matrix<Scalar> dy = dk * w_k.transpose() + dv * w_v.transpose();
    return {std::move(dx), std::move(dy)};
  }

  CrossAttention zeros_like() const {
    CrossAttention z;
    z.heads = heads;
    z.w_q = Matrix<Scalar>::Zero(w_q.rows(), w_q.cols());
    z.w_k = Matrix<Scalar>::Zero(w_k.rows(), w_k.cols());
    z.w_v = Matrix<Scalar>::Zero(w_v.rows(), w_v.cols());
    return z;
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "w_q", self.w_q);
    f(prefix + "w_k", self.w_k);
    f(prefix + "w_v", self.w_v);
  }
};

template <typename Scalar>
Matrix<Scalar> cross_attention(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const CrossAttention<Scalar>& params) {
  return params.forward(x, y);
}

template <typename Scalar>
struct LevelEmbeddings {
  RowVector<Scalar> low;
  RowVector<Scalar> high;
};

/// Dual-stream EEG branch: channel prior split, low/high encoders and
/// low-to-high cross-attention. With `biomimetic == false` the channel
/// weights are uniform and the high stream is the f_high output directly.
template <typename Scalar>
struct EegBranch {
  bool biomimetic = true;
  ChannelPrior<Scalar> prior;
  EegEncoder<Scalar> f_low;
  EegEncoder<Scalar> f_high;
  CrossAttention<Scalar> attn;

  struct Cache {
    Matrix<Scalar> e_low, e_high;
    typename EegEncoder<Scalar>::Cache low_cache, high_cache;
    Matrix<Scalar> tokens_low, tokens_high, attended;
    typename CrossAttention<Scalar>::Cache attn_cache;
  };

  Index low_dim() const { return f_low.output_dim(); }
  Index high_dim() const { return biomimetic ? attn.dim() : f_high.output_dim(); }

  LevelEmbeddings<Scalar> forward(const Matrix<Scalar>& epoch, Cache& cache) const {
    if (biomimetic) {
      require(prior.channels() == epoch.rows(), "channel prior has " + std::to_string(prior.channels()) +
                                                    " weights for an epoch with " + std::to_string(epoch.rows()) +
                                                    " channels");
      cache.e_low = prior.low_weights().asDiagonal() * epoch;
      cache.e_high = prior.high_weights().asDiagonal() * epoch;
    } else {
      cache.e_low = epoch;
      cache.e_high = epoch;
    }
    cache.tokens_low = f_low.forward(cache.e_low, cache.low_cache);
    cache.tokens_high = f_high.forward(cache.e_high, cache.high_cache);
    LevelEmbeddings<Scalar> out;
    out.low = mean_pool(cache.tokens_low);
    if (biomimetic) {
      cache.attended = attn.forward(cache.tokens_low, cache.tokens_high, cache.attn_cache);
      out.high = mean_pool(cache.attended);
    } else {
      out.high = mean_pool(cache.tokens_high);
    }
    return out;
  }

  LevelEmbeddings<Scalar> forward(const Matrix<Scalar>& epoch) const {
    Cache cache;
    return forward(epoch, cache);
  }

  /// Accumulates gradients of both pooled embeddings into `grad`.
  void backward(const Matrix<Scalar>& epoch, const Cache& cache, const RowVector<Scalar>& grad_low,
                const RowVector<Scalar>& grad_high, EegBranch& grad) const {
    Matrix<Scalar> d_tokens_low = mean_pool_backward<Scalar>(cache.tokens_low.rows(), grad_low);
    Matrix<Scalar> d_tokens_high;
    if (biomimetic) {
      const Matrix<Scalar> d_att = mean_pool_backward<Scalar>(cache.attended.rows(), grad_high);
      auto [dx, dy] = attn.backward(cache.tokens_low, cache.tokens_high, cache.attn_cache, d_att, grad.attn);
      d_tokens_low += dx;
      d_tokens_high = std::move(dy);
    } else {
      d_tokens_high = mean_pool_backward<Scalar>(cache.tokens_high.rows(), grad_high);
    }
    const Matrix<Scalar> d_e_low = f_low.backward(cache.e_low, cache.low_cache, d_tokens_low, grad.f_low);
    const Matrix<Scalar> d_e_high = f_high.backward(cache.e_high, cache.high_cache, d_tokens_high, grad.f_high);
    if (biomimetic && prior.trainable) {
      // d e_low[c,t] / d logit_c = sigmoid'(logit_c) * epoch[c,t]
      const Vector<Scalar> wl = prior.low_weights();
      const Vector<Scalar> wh = prior.high_weights();
      const Vector<Scalar> gl = d_e_low.cwiseProduct(epoch).rowwise().sum();
      const Vector<Scalar> gh = d_e_high.cwiseProduct(epoch).rowwise().sum();
      grad.prior.low_logits.col(0) += gl.cwiseProduct(wl.cwiseProduct((Vector<Scalar>::Ones(wl.size()) - wl)));
      grad.prior.high_logits.col(0) += gh.cwiseProduct(wh.cwiseProduct((Vector<Scalar>::Ones(wh.size()) - wh)));
    }
  }

  EegBranch zeros_like() const {
    EegBranch z;
    z.biomimetic = biomimetic;
    z.prior = prior.zeros_like();
    z.f_low = f_low.zeros_like();
    z.f_high = f_high.zeros_like();
    z.attn = attn.zeros_like();
    return z;
  }

  template <typename Self, typename F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    if (self.biomimetic) ChannelPrior<Scalar>::for_each(self.prior, prefix + "prior.", f);
    EegEncoder<Scalar>::for_each(self.f_low, prefix + "f_low.", f);
    EegEncoder<Scalar>::for_each(self.f_high, prefix + "f_high.", f);
    if (self.biomimetic) CrossAttention<Scalar>::for_each(self.attn, prefix + "attn.", f);
  }
};

/// Low = mean-pooled f_low tokens; high = mean-pooled cross-attention of
/// f_low tokens (queries) over f_high tokens (keys/values).
template <typename Scalar>
LevelEmbeddings<Scalar> encode_eeg(const EEGEpoch<Scalar>& epoch, const ChannelPrior<Scalar>& prior,
                                   const EegEncoder<Scalar>& f_low, const EegEncoder<Scalar>& f_high,
                                   const CrossAttention<Scalar>& attn) {
  validate_epoch(epoch);
  EegBranch<Scalar> branch{true, prior, f_low, f_high, attn};
  return branch.forward(epoch.data);
}

}  // namespace mb2l

#endif  // MB2L_EEG_PIPELINE_HPP

#include "mb2l/eeg_pipeline.hpp"
#include "suites.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace mb2l;
using namespace mb2l::testing;

namespace {

EEGEpoch<double> epoch_of(const Matrix<double>& data) {
  EEGEpoch<double> e;
  e.data = data;
  for (Index i = 0; i < data.rows(); ++i) e.channel_names.push_back("c" + std::to_string(i));
  return e;
}

}  // namespace

TEST_SUITE("eeg_pipeline") {

TEST_CASE("split_channels scales rows and preserves order") {
  Matrix<double> x(2, 2);
  x << 1, 2, 3, 4;
  const auto e = epoch_of(x);
  Vector<double> wl(2), wh(2);
  wl << 0.5, 1.0;
  wh << 1.0, 0.0;
  const auto [low, high] = split_channels(e, wl, wh);
  Matrix<double> expected_low(2, 2);
  expected_low << 0.5, 1, 3, 4;
  CHECK(low.data == expected_low);
  CHECK(high.data.row(1).isZero());
  CHECK(high.data.row(0) == x.row(0));
  CHECK(low.channel_names == e.channel_names);

  const auto [a, b] = split_channels(e, Vector<double>(Vector<double>::Ones(2)), Vector<double>(Vector<double>::Ones(2)));
  CHECK(a.data == x);
  CHECK(b.data == x);
  CHECK_THROWS_AS(split_channels(e, Vector<double>(Vector<double>::Ones(3)), wh), InvalidParameter);
}

TEST_CASE("split_channels is linear") {
  Rng rng(1);
  const Vector<double> wl = random_matrix<double>(4, 1, rng).array().abs();
  const Vector<double> wh = random_matrix<double>(4, 1, rng).array().abs();
  const auto e1 = epoch_of(random_matrix<double>(4, 6, rng));
  const auto e2 = epoch_of(random_matrix<double>(4, 6, rng));
  const double a = 1.7, b = -0.4;
  const auto combo = epoch_of(a * e1.data + b * e2.data);
  const auto [l, h] = split_channels(combo, wl, wh);
  const auto [l1, h1] = split_channels(e1, wl, wh);
  const auto [l2, h2] = split_channels(e2, wl, wh);
  CHECK((l.data - (a * l1.data + b * l2.data)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h.data - (a * h1.data + b * h2.data)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("default channel prior follows the physiological groups") {
  const std::vector<std::string> names{"Oz", "Pz", "Fp1", "PO7"};
  const auto w = default_channel_weights(names);
  CHECK(w.low == std::vector<double>{1.0, 0.3, 0.3, 1.0});
  CHECK(w.high == std::vector<double>{0.3, 1.0, 0.3, 1.0});
  const auto prior = default_channel_prior<double>(names);
  // Stored as logits; the 1.0 group starts at 0.99.
  CHECK(prior.low_weights()(0) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(prior.low_weights()(1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(prior.high_weights()(1) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(prior.high_weights()(2) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(default_channel_weights({}), InvalidParameter);
  CHECK(visual_montage().size() == 17);
}

TEST_CASE("cross-attention rows are convex combinations of value rows") {
  Rng rng(2);
  const auto attn = CrossAttention<double>::random(5, 4, 6, rng);
  const Matrix<double> x = random_matrix<double>(3, 5, rng);
  const Matrix<double> y = random_matrix<double>(7, 4, rng);
  typename CrossAttention<double>::Cache cache;
  const Matrix<double> out = attn.forward(x, y, cache);
  for (const auto& a : cache.attention) {
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK(a.minCoeff() >= 0.0);
  }
  const Matrix<double> v = y * attn.w_v;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      CHECK(out(i, j) >= v.col(j).minCoeff() - 1e-12);
      CHECK(out(i, j) <= v.col(j).maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("cross-attention with identical keys returns v W_V") {
  Rng rng(3);
  const auto attn = CrossAttention<double>::random(3, 4, 5, rng);
  const RowVector<double> v = random_matrix<double>(1, 4, rng);
  const Matrix<double> y = v.replicate(6, 1);
  const Matrix<double> out = cross_attention(random_matrix<double>(2, 3, rng), y, attn);
  const RowVector<double> expected = v * attn.w_v;
  for (Index i = 0; i < out.rows(); ++i) CHECK((out.row(i) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-attention single key, scalar weights") {
  CrossAttention<double> attn;
  attn.w_q = Matrix<double>::Constant(1, 1, 2.0);
  attn.w_k = Matrix<double>::Constant(1, 1, 3.0);
  attn.w_v = Matrix<double>::Constant(1, 1, 0.5);
  const Matrix<double> out = cross_attention(Matrix<double>(Matrix<double>::Constant(1, 1, 1.3)), Matrix<double>(Matrix<double>::Constant(1, 1, 4.0)), attn);
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("cross-attention is invariant to permuting keys and values together") {
  Rng rng(4);
  const auto attn = CrossAttention<double>::random(3, 3, 4, rng, 2);
  const Matrix<double> x = random_matrix<double>(4, 3, rng);
  const Matrix<double> y = random_matrix<double>(5, 3, rng);
  Matrix<double> yp(5, 3);
  const std::vector<Index> perm{3, 0, 4, 1, 2};
  for (Index i = 0; i < 5; ++i) yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
  CHECK((cross_attention(x, y, attn) - cross_attention(x, yp, attn)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-attention dimension checks") {
  Rng rng(5);
  const auto attn = CrossAttention<double>::random(3, 4, 2, rng);
  CHECK_THROWS_AS(cross_attention(random_matrix<double>(2, 4, rng), random_matrix<double>(2, 4, rng), attn),
                  InvalidParameter);
  CHECK_THROWS_AS(cross_attention(random_matrix<double>(2, 3, rng), random_matrix<double>(2, 3, rng), attn),
                  InvalidParameter);
  CHECK_THROWS_AS(CrossAttention<double>::random(3, 3, 5, rng, 2), InvalidParameter);
}

TEST_CASE("encode_eeg composes identity encoders with the single-key attention") {
  // 1 channel, 1 sample: identity encoders give one 1-dim token per stream.
  EegEncoderConfig ec;
  ec.kind = EegEncoderKind::identity;
  ec.channels = 1;
  ec.samples = 1;
  Rng rng(6);
  const auto f = EegEncoder<double>::create(ec, rng);
  CrossAttention<double> attn;
  attn.w_q = Matrix<double>::Constant(1, 1, 2.0);
  attn.w_k = Matrix<double>::Constant(1, 1, 3.0);
  attn.w_v = Matrix<double>::Constant(1, 1, 0.5);
  const auto prior = ChannelPrior<double>::from_weights({0.5}, {0.8});
  EEGEpoch<double> e{Matrix<double>::Constant(1, 1, 5.0), {"Oz"}, 250.0};
  const auto emb = encode_eeg(e, prior, f, f, attn);
  CHECK(emb.low(0) == doctest::Approx(0.5 * 5.0).epsilon(1e-12));
  CHECK(emb.high(0) == doctest::Approx(0.8 * 5.0 * 0.5).epsilon(1e-12));
}

TEST_CASE("encode_eeg: zero signal, determinism, constant dims") {
  Rng rng(7);
  EegEncoderConfig ec;
  ec.channels = 4;
  ec.samples = 16;
  ec.token_dim = 6;
  ec.hidden = 5;
  ec.kernel = 4;
  ec.stride = 4;
  ec.bias = false;
  ec.positional = false;
  const auto f_low = EegEncoder<double>::create(ec, rng);
  const auto f_high = EegEncoder<double>::create(ec, rng);
  const auto attn = CrossAttention<double>::random(6, 6, 4, rng);
  const auto prior = default_channel_prior<double>({"O1", "Oz", "Pz", "P3"});
  EEGEpoch<double> zero{Matrix<double>::Zero(4, 16), {"O1", "Oz", "Pz", "P3"}, 250.0};
  CHECK(encode_eeg(zero, prior, f_low, f_high, attn).low.isZero());

  EEGEpoch<double> e{random_matrix<double>(4, 16, rng), zero.channel_names, 250.0};
  const auto a = encode_eeg(e, prior, f_low, f_high, attn);
  const auto b = encode_eeg(e, prior, f_low, f_high, attn);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  EEGEpoch<double> e2{random_matrix<double>(4, 16, rng), zero.channel_names, 250.0};
  const auto c = encode_eeg(e2, prior, f_low, f_high, attn);
  CHECK(c.low.size() == a.low.size());
  CHECK(c.high.size() == a.high.size());
  EEGEpoch<double> wrong{random_matrix<double>(4, 12, rng), zero.channel_names, 250.0};
  CHECK_THROWS_AS(encode_eeg(wrong, prior, f_low, f_high, attn), InvalidParameter);
}

TEST_CASE("encoder variants produce the advertised token shapes") {
  Rng rng(8);
  for (auto kind : {EegEncoderKind::projection, EegEncoderKind::shallow_conv, EegEncoderKind::depthwise_conv,
                    EegEncoderKind::identity}) {
    EegEncoderConfig ec;
    ec.kind = kind;
    ec.channels = 5;
    ec.samples = 32;
    ec.token_dim = 7;
    const auto enc = EegEncoder<double>::create(ec, rng);
    const Matrix<double> tokens = enc.forward(random_matrix<double>(5, 32, rng));
    CHECK(tokens.rows() == enc.token_count());
    CHECK(tokens.cols() == enc.output_dim());
    CHECK(tokens.allFinite());
    CHECK(eeg_encoder_kind_from_string(to_string(kind)) == kind);
  }
}

TEST_CASE("branch without the biomimetic stage ignores channel weights") {
  Rng rng(9);
  EegEncoderConfig ec;
  ec.channels = 3;
  ec.samples = 8;
  ec.token_dim = 4;
  ec.kernel = 4;
  ec.stride = 4;
  EegBranch<double> branch;
  branch.biomimetic = false;
  branch.prior = default_channel_prior<double>({"O1", "Pz", "Fp1"});
  branch.f_low = EegEncoder<double>::create(ec, rng);
  branch.f_high = EegEncoder<double>::create(ec, rng);
  const Matrix<double> x = random_matrix<double>(3, 8, rng);
  const auto emb = branch.forward(x);
  CHECK(emb.high == mean_pool(Matrix<double>(branch.f_high.forward(x))));
  CHECK(emb.low == mean_pool(Matrix<double>(branch.f_low.forward(x))));
  int visited = 0;
  EegBranch<double>::for_each(branch, "", [&](const std::string& name, Matrix<double>&) {
    CHECK(name.find("prior") == std::string::npos);
    CHECK(name.find("attn") == std::string::npos);
    ++visited;
  });
  CHECK(visited > 0);
}

TEST_CASE("EEG branch gradients match finite differences") {
  Rng rng(10);
  CHECK(eeg_branch_gradient(EegEncoderKind::identity, 2, 4, 1, rng).worst < kGradTolerance);
  CHECK(eeg_branch_gradient(EegEncoderKind::projection, 4, 8, 2, rng).worst < kGradTolerance);
  CHECK(eeg_branch_gradient(EegEncoderKind::shallow_conv, 3, 8, 1, rng).worst < kGradTolerance);
  CHECK(eeg_branch_gradient(EegEncoderKind::depthwise_conv, 3, 8, 1, rng).worst < kGradTolerance);
}

}  // TEST_SUITE

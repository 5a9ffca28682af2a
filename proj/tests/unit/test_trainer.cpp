#include "mb2l/evaluator.hpp"
#include "mb2l/optimizer.hpp"
#include "mb2l/trainer.hpp"
#include "suites.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace mb2l;
using namespace mb2l::testing;

namespace {

ModelConfig small_model(const Dataset& ds) {
  ModelConfig base;
  base.token_dim = 16;
  base.eeg_hidden = 16;
  base.attention_dim = 16;
  base.image_width = 8;
  base.image_out = 16;
  base.frozen_width = 8;
  base.frozen_out = 16;
  base.projection_dim = 16;
  return model_config_for(ds, base);
}

TrainConfig quick_train(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  return cfg;
}

std::vector<Matrix<float>> snapshot(const ModelParams<float>& params) {
  std::vector<Matrix<float>> out;
  ModelParams<float>::for_each(params, [&](const std::string&, const Matrix<float>& m) { out.push_back(m); });
  return out;
}

std::vector<Matrix<float>> frozen_snapshot(const FrozenEncoder<float>& enc) {
  std::vector<Matrix<float>> out;
  enc.inspect([&](const std::string&, const Matrix<float>& m) { out.push_back(m); });
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("AdamW with zero learning rate leaves parameters bit-identical") {
  Rng rng(1);
  Matrix<float> p = random_matrix<float>(3, 4, rng);
  const Matrix<float> before = p;
  const Matrix<float> g = random_matrix<float>(3, 4, rng);
  AdamW<float> opt({0.0, 0.9, 0.999, 1e-8, 0.1});
  for (int i = 0; i < 5; ++i) opt.step({&p}, {&g});
  CHECK(p == before);
}

TEST_CASE("AdamW decay is decoupled from the gradient") {
  Matrix<double> p = Matrix<double>::Constant(2, 2, 3.0);
  const Matrix<double> g = Matrix<double>::Zero(2, 2);
  AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step({&p}, {&g});
  CHECK(p(0, 0) == doctest::Approx(3.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("AdamW first step moves each entry by lr against the gradient sign") {
  // Bias correction makes the first update exactly lr * g / (|g| + eps).
  Matrix<double> p = Matrix<double>::Zero(1, 3);
  Matrix<double> g(1, 3);
  g << 2.0, -0.5, 1e-3;
  AdamW<double> opt({0.01, 0.9, 0.999, 1e-8, 0.0});
  opt.step({&p}, {&g});
  for (Index i = 0; i < 3; ++i) CHECK(p(0, i) == doctest::Approx(-0.01 * g(0, i) / (std::abs(g(0, i)) + 1e-8)));
}

TEST_CASE("global norm clipping") {
  Matrix<double> a = Matrix<double>::Constant(1, 1, 3.0);
  Matrix<double> b = Matrix<double>::Constant(1, 1, 4.0);
  CHECK(clip_global_norm<double>({&a, &b}, 1.0) == doctest::Approx(5.0));
  CHECK(std::hypot(a(0, 0), b(0, 0)) == doctest::Approx(1.0));
  CHECK(a(0, 0) / b(0, 0) == doctest::Approx(0.75));
  Matrix<double> c = Matrix<double>::Constant(1, 1, 0.5);
  clip_global_norm<double>({&c}, 1.0);
  CHECK(c(0, 0) == 0.5);
}

TEST_CASE("early stopping requires strict improvement") {
  TrainState state;
  const std::vector<double> vals{0.5, 0.6, 0.6, 0.6, 0.6};
  std::size_t stopped_at = vals.size();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (early_stop_check(state, vals[i], 3) == StopDecision::stop) {
      stopped_at = i;
      break;
    }
  }
  CHECK(stopped_at == 4);
  CHECK(state.best_epoch == 1);
  CHECK(state.best_val_metric == 0.6);
}

TEST_CASE("presets") {
  const auto desk = train_preset("desk");
  CHECK(desk.batch_size == 32);
  CHECK(desk.learning_rate == 1e-3);
  CHECK(desk.early_stop_patience == 10);
  const auto intra = train_preset("paper-intra");
  const auto inter = train_preset("paper-inter");
  CHECK(intra.batch_size == 256);
  CHECK(intra.learning_rate == 1e-4);
  CHECK(intra.epochs == 60);
  CHECK(intra.alpha_high == 0.5);
  CHECK(inter.alpha_high == 0.1);
  CHECK(inter.mode == TrainMode::inter_subject);
  CHECK_THROWS_AS(train_preset("fast"), InvalidParameter);
  auto bad = desk;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(bad), InvalidParameter);
}

TEST_CASE("a single batch of 8 pairs can be memorized") {
  auto cfg = small_synthetic(21);
  cfg.train_concepts = 8;
  cfg.images_per_concept = 1;
  const auto ds = generate_synthetic(cfg);
  // Default widths: the narrow test model plateaus on the low branch.
  auto model = Model<float>::create(model_config_for(ds));
  const auto data = prepare(model, ds.train);
  std::vector<Index> batch(8);
  for (Index i = 0; i < 8; ++i) batch[static_cast<std::size_t>(i)] = i;

  std::vector<Matrix<float>*> params;
  ModelParams<float>::for_each(model.params, [&](const std::string&, Matrix<float>& m) { params.push_back(&m); });
  AdamW<float> opt({1e-3, 0.9, 0.999, 1e-8, 1e-4});
  const double initial = batch_loss(model, data, batch, static_cast<ModelParams<float>*>(nullptr)).total;
  double last = initial;
  for (int step = 0; step < 200; ++step) {
    auto grad = model.params.zeros_like();
    last = batch_loss(model, data, batch, &grad).total;
    std::vector<Matrix<float>*> grads;
    ModelParams<float>::for_each(grad, [&](const std::string&, Matrix<float>& m) { grads.push_back(&m); });
    clip_global_norm(grads, 1.0);
    opt.step(params, std::vector<const Matrix<float>*>(grads.begin(), grads.end()));
    model.params.gate.project();
  }
  last = batch_loss(model, data, batch, static_cast<ModelParams<float>*>(nullptr)).total;
  INFO("initial " << initial << " final " << last);
  CHECK(last < 0.05);
  CHECK(last * 10.0 <= initial);
}

TEST_CASE("zero learning rate training keeps every parameter") {
  const auto ds = generate_synthetic(small_synthetic(22));
  auto model = Model<float>::create(small_model(ds));
  const auto before = snapshot(model.params);
  auto cfg = quick_train(2);
  cfg.learning_rate = 0.0;
  const auto result = train(model, ds.train, {}, cfg);
  CHECK(snapshot(result.model.params) == before);
  CHECK(result.history.size() == 2);
}

TEST_CASE("frozen encoder is untouched by training, gate on and off") {
  const auto ds = generate_synthetic(small_synthetic(23));
  for (bool abvp : {true, false}) {
    auto mc = small_model(ds);
    mc.abvp = abvp;
    const auto model = Model<float>::create(mc);
    const auto before = frozen_snapshot(model.frozen);
    const auto result = train(model, ds.train, {}, quick_train(2));
    CHECK(frozen_snapshot(result.model.frozen) == before);
    CHECK(snapshot(result.model.params) != snapshot(model.params));
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto ds = generate_synthetic(small_synthetic(24));
  const auto [train_set, val_set] = hold_out_last_image(ds.train);
  const auto a = train(small_model(ds), train_set, val_set, quick_train(3));
  const auto b = train(small_model(ds), train_set, val_set, quick_train(3));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_top1 == b.history[i].val_top1);
  }
  CHECK(snapshot(a.model.params) == snapshot(b.model.params));
}

TEST_CASE("the returned model is the best validation snapshot") {
  const auto ds = generate_synthetic(small_synthetic(25));
  const auto [train_set, val_set] = hold_out_last_image(ds.train);
  const auto result = train(small_model(ds), train_set, val_set, quick_train(4));
  const auto val = prepare(result.model, val_set);
  const auto emb = embed(result.model, val);
  const auto sim = retrieval_similarity(emb, Level::fused, result.model.cfg.alpha_low, result.model.cfg.alpha_high,
                                        val.concept_ids);
  CHECK(top_k_accuracy(sim, 1) == doctest::Approx(result.state.best_val_metric));
}

TEST_CASE("non-finite loss raises NumericalFailure") {
  const auto ds = generate_synthetic(small_synthetic(26));
  auto model = Model<float>::create(small_model(ds));
  model.params.head_eeg_high.first.weight(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train(model, ds.train, {}, quick_train(1)), NumericalFailure);
}

TEST_CASE("training rejects overlapping or empty inputs") {
  const auto ds = generate_synthetic(small_synthetic(27));
  CHECK_THROWS_AS(train(small_model(ds), {}, {}, quick_train(1)), InvalidParameter);
  auto cfg = quick_train(1);
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(train(small_model(ds), ds.train, {}, cfg), InvalidParameter);
}

TEST_CASE("history CSV layout") {
  ScratchDir dir("history");
  write_history_csv(dir / "h.csv", {{0, 1.5, 0.25}, {1, 1.0, std::numeric_limits<double>::quiet_NaN()}});
  const auto lines = split_lines(read_file(dir / "h.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,train_loss,val_top1");
  CHECK(lines[1] == "0,1.5,0.25");
  CHECK(lines[2] == "1,1,");
}

}  // TEST_SUITE

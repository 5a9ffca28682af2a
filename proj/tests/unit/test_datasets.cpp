#include "mb2l/datasets.hpp"
#include "mb2l/eeg_pipeline.hpp"
#include "suites.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <map>
#include <set>

using namespace mb2l;
using namespace mb2l::testing;

namespace {

Matrix<double> flatten_epochs(const std::vector<PairedSample>& samples) {
  const Index dim = samples.front().epoch.data.size();
  Matrix<double> x(static_cast<Index>(samples.size()), dim);
  for (std::size_t i = 0; i < samples.size(); ++i)
    x.row(static_cast<Index>(i)) = samples[i].epoch.data.cast<double>().reshaped().transpose();
  return x;
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("default synthetic split sizes and disjointness") {
  SyntheticConfig cfg;
  cfg.test_trials = 4;  // trial count does not affect layout
  const auto ds = generate_synthetic(cfg);
  std::set<int> train_ids, test_ids;
  for (const auto& s : ds.train) train_ids.insert(s.concept_id);
  for (const auto& s : ds.test) test_ids.insert(s.concept_id);
  CHECK(train_ids.size() == 64);
  CHECK(test_ids.size() == 16);
  CHECK(ds.test.size() == 16);
  CHECK(ds.train.size() == 64 * 4);
  for (int id : test_ids) CHECK(train_ids.count(id) == 0);
  CHECK_NOTHROW(assert_zero_shot(ds.train, ds.test));
  CHECK(ds.channel_names == visual_montage());
  for (const auto& s : ds.test) {
    CHECK(s.epoch.channels() == 17);
    CHECK(s.epoch.samples() == 64);
    CHECK(s.image.height == 32);
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto cfg = small_synthetic(11);
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].epoch.data == b.train[i].epoch.data);
    CHECK(a.train[i].image.data == b.train[i].image.data);
  }
  auto other = cfg;
  other.seed = 12;
  CHECK(generate_synthetic(other).train[0].epoch.data != a.train[0].epoch.data);
}

TEST_CASE("noise-free trials are identical") {
  auto cfg = small_synthetic(1);
  cfg.noise_sigma = 0.0;
  const auto ds = generate_synthetic(cfg);
  for (const auto& s : ds.test) {
    REQUIRE(s.trials.size() == 5);
    for (const auto& t : s.trials) CHECK(t == s.trials.front());
    CHECK((s.epoch.data - s.trials.front()).cwiseAbs().maxCoeff() <= 1e-6f * (1.0f + s.trials.front().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("invalid generator settings are rejected") {
  auto cfg = small_synthetic(1);
  cfg.test_concepts = 0;
  CHECK_THROWS_AS(generate_synthetic(cfg), InvalidParameter);
  cfg = small_synthetic(1);
  cfg.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_synthetic(cfg), InvalidParameter);
}

TEST_CASE("average_repetitions examples") {
  const std::vector<std::string> names{"Oz"};
  const std::vector<EEGEpoch<double>> two{{Matrix<double>::Constant(1, 1, 0.0), names, 100.0},
                                          {Matrix<double>::Constant(1, 1, 2.0), names, 100.0}};
  CHECK(average_repetitions(two).data(0, 0) == 1.0);
  CHECK_THROWS_AS(average_repetitions(std::vector<EEGEpoch<double>>{}), InvalidParameter);
  const std::vector<EEGEpoch<double>> ragged{{Matrix<double>::Zero(1, 2), names, 100.0},
                                             {Matrix<double>::Zero(1, 3), names, 100.0}};
  CHECK_THROWS_AS(average_repetitions(ragged), InvalidParameter);
}

TEST_CASE("averaging 80 unit-variance trials shrinks noise to 1/sqrt(80)") {
  Rng rng(5);
  std::vector<EEGEpoch<double>> trials;
  for (int t = 0; t < 80; ++t) trials.push_back({random_matrix<double>(17, 200, rng), visual_montage(), 100.0});
  const auto avg = average_repetitions(trials);
  const double mean = avg.data.mean();
  const double sd = std::sqrt((avg.data.array() - mean).square().sum() / static_cast<double>(avg.data.size() - 1));
  // 3400 draws: the sample sd is within ~5% of 1/sqrt(80) with overwhelming probability.
  CHECK(sd == doctest::Approx(1.0 / std::sqrt(80.0)).epsilon(0.05));
}

TEST_CASE("select_channels picks and orders rows") {
  Rng rng(6);
  std::vector<std::string> names;
  for (int i = 0; i < 63; ++i) names.push_back("E" + std::to_string(i));
  names[40] = "Oz";
  names[12] = "Pz";
  EEGEpoch<double> e{random_matrix<double>(63, 10, rng), names, 250.0};
  const auto oz = select_channels(e, {"Oz"});
  CHECK(oz.channels() == 1);
  CHECK(oz.data.row(0) == e.data.row(40));
  const auto two = select_channels(e, {"Oz", "Pz"});
  CHECK(two.data.row(1) == e.data.row(12));
  CHECK(two.channel_names == std::vector<std::string>{"Oz", "Pz"});
  CHECK_THROWS_AS(select_channels(e, {"O1"}), InvalidParameter);
  CHECK_THROWS_AS(select_channels(e, {}), InvalidParameter);
}

TEST_CASE("channel selection commutes with averaging") {
  Rng rng(7);
  std::vector<std::string> names{"Fp1", "O1", "Oz", "Pz"};
  std::vector<EEGEpoch<double>> trials;
  for (int t = 0; t < 6; ++t) trials.push_back({random_matrix<double>(4, 9, rng), names, 250.0});
  const std::vector<std::string> wanted{"Pz", "O1"};
  std::vector<EEGEpoch<double>> selected;
  for (const auto& t : trials) selected.push_back(select_channels(t, wanted));
  const auto a = select_channels(average_repetitions(trials), wanted);
  const auto b = average_repetitions(selected);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hold_out_last_image keeps one image per concept aside") {
  const auto ds = generate_synthetic(small_synthetic(2));
  const auto [keep, held] = hold_out_last_image(ds.train);
  CHECK(held.size() == 6);
  CHECK(keep.size() == 6);
  for (const auto& s : held) CHECK(s.image_index == 1);
  for (const auto& s : keep) CHECK(s.image_index == 0);
}

TEST_CASE("metadata text round trip and validation") {
  ArrayMetadata meta;
  meta.count = 2;
  meta.trials = 3;
  meta.channels = 2;
  meta.samples = 4;
  meta.sampling_rate = 100.0;
  meta.channel_names = {"O1", "Oz"};
  meta.concept_ids = {3, 9};
  meta.image_indices = {0, 1};
  const auto back = parse_metadata(format_metadata(meta));
  CHECK(back.count == 2);
  CHECK(back.channel_names == meta.channel_names);
  CHECK(back.concept_ids == meta.concept_ids);
  CHECK(back.image_indices == meta.image_indices);
  CHECK(back.sampling_rate == 100.0);

  auto bad = meta;
  bad.channel_names = {"O1"};
  CHECK_THROWS(parse_metadata(format_metadata(bad)));
  CHECK_THROWS(parse_metadata("format: something-else\n"));
}

TEST_CASE("loader rejects arrays whose byte size disagrees with the sidecar") {
  ScratchDir dir("bytes");
  const auto ds = generate_synthetic(small_synthetic(4));
  write_things_format(dir.path(), ds);
  const auto f16 = dir.path() / "data" / "0" / "test.f16";
  REQUIRE(std::filesystem::exists(f16));
  std::filesystem::resize_file(f16, std::filesystem::file_size(f16) - 2);
  CHECK_THROWS(load_things_format(dir.path()));
  CHECK_THROWS(load_things_format(dir.path() / "nowhere"));
}

TEST_CASE("loader subject and channel options") {
  ScratchDir dir("subjects");
  auto cfg = small_synthetic(5);
  cfg.subjects = 2;
  const auto ds = generate_synthetic(cfg);
  write_things_format(dir.path(), ds);
  LoadOptions opt;
  opt.subject = 1;
  opt.channels = {"Oz", "Pz"};
  const auto loaded = load_things_format(dir.path(), opt);
  CHECK(loaded.channel_names == opt.channels);
  CHECK(loaded.test.size() == 3);
  for (const auto& s : loaded.test) CHECK(s.subject_id == 1);
  opt.subject = 7;
  CHECK_THROWS(load_things_format(dir.path(), opt));
}

TEST_CASE("a linear probe on noise-free epochs transfers to unseen concepts") {
  // Colour is linearly encoded in the templates, so a ridge probe fitted on
  // training concepts should predict it on held-out ones.
  auto cfg = small_synthetic(8);
  cfg.train_concepts = 64;
  cfg.test_concepts = 16;
  cfg.images_per_concept = 1;
  cfg.noise_sigma = 0.0;
  const auto ds = generate_synthetic(cfg);
  const auto concepts = synthetic_concepts(cfg);
  const Matrix<double> x_train = flatten_epochs(ds.train);
  const Matrix<double> x_test = flatten_epochs(ds.test);
  Vector<double> y_train(x_train.rows()), y_test(x_test.rows());
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    y_train(static_cast<Index>(i)) = concepts[static_cast<std::size_t>(ds.train[i].concept_id)].color[0];
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    y_test(static_cast<Index>(i)) = concepts[static_cast<std::size_t>(ds.test[i].concept_id)].color[0];
  const double y_mean = y_train.mean();
  const Matrix<double> gram = x_train * x_train.transpose() + 1.0 * Matrix<double>::Identity(x_train.rows(), x_train.rows());
  const Vector<double> dual = gram.ldlt().solve(Vector<double>(y_train.array() - y_mean));
  const Vector<double> pred = (x_test * (x_train.transpose() * dual)).array() + y_mean;
  const Vector<double> pc = pred.array() - pred.mean();
  const Vector<double> yc = y_test.array() - y_test.mean();
  const double corr = pc.dot(yc) / (pc.norm() * yc.norm());
  CHECK(corr > 0.7);

  // Distinct concepts give distinct epochs.
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    for (std::size_t j = i + 1; j < ds.test.size(); ++j)
      CHECK((ds.test[i].epoch.data - ds.test[j].epoch.data).norm() > 1e-3);
}

TEST_CASE("data contract checks") {
  const auto checks = data_contract_suite();
  INFO(failures(checks));
  CHECK(all_ok(checks));
}

}  // TEST_SUITE

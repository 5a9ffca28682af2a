#include "mb2l/datasets.hpp"
#include "mb2l/evaluator.hpp"
#include "mb2l/trainer.hpp"
#include "suites.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace mb2l;
using namespace mb2l::testing;

TEST_SUITE("evaluator") {

TEST_CASE("orthonormal embeddings give the identity matrix") {
  const Matrix<double> e = Matrix<double>::Identity(4, 4);
  const auto sim = similarity_matrix(e, e);
  CHECK(sim.scores.isApprox(Matrix<double>::Identity(4, 4)));
  CHECK(top_k_accuracy(sim, 1) == 1.0);
  CHECK(sim.row_ids == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("positive scaling leaves the matrix unchanged") {
  Rng rng(1);
  const Matrix<double> a = random_matrix<double>(5, 3, rng);
  const Matrix<double> b = random_matrix<double>(5, 3, rng);
  CHECK((similarity_matrix(Matrix<double>(3.0 * a), b).scores - similarity_matrix(a, b).scores).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("hand-computed 2x2 similarity") {
  Matrix<double> eeg(2, 2), img(2, 2);
  eeg << 1, 1, 1, 0;
  img << 1, 0, 0, 1;
  const auto sim = similarity_matrix(eeg, img);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(sim.scores(0, 0) == doctest::Approx(r));
  CHECK(sim.scores(0, 1) == doctest::Approx(r));
  CHECK(sim.scores(1, 0) == doctest::Approx(1.0));
  CHECK(sim.scores(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("3x3 top-k example") {
  SimilarityMatrix<double> sim;
  sim.scores.resize(3, 3);
  sim.scores << 0.9, 0.1, 0.2,
                0.3, 0.8, 0.1,
                0.7, 0.6, 0.5;
  CHECK(top_k_accuracy(sim, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(top_k_accuracy(sim, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(top_k_accuracy(sim, 3) == 1.0);
  CHECK_THROWS_AS(top_k_accuracy(sim, 0), InvalidParameter);
  CHECK_THROWS_AS(top_k_accuracy(sim, 4), InvalidParameter);
  const auto m = retrieval_metrics(sim);
  CHECK(m.top1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.top5 == 1.0);
  CHECK(m.count == 3);
}

TEST_CASE("ties are broken against the diagonal") {
  SimilarityMatrix<double> sim;
  sim.scores = Matrix<double>::Constant(3, 3, 0.5);
  // Row 0 wins every tie, the others lose to lower columns.
  CHECK(top_k_accuracy(sim, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("dimension mismatch is rejected") {
  CHECK_THROWS_AS(similarity_matrix(Matrix<double>(Matrix<double>::Ones(3, 4)), Matrix<double>(Matrix<double>::Ones(3, 5))),
                  InvalidParameter);
}

TEST_CASE("fuse_levels weighting") {
  Rng rng(2);
  const Matrix<double> a = random_matrix<double>(4, 3, rng), b = random_matrix<double>(4, 3, rng);
  const auto low = similarity_matrix(a, b, {}, Level::low);
  const auto high = similarity_matrix(b, a, {}, Level::high);
  CHECK(fuse_levels(low, high, 1.0, 0.0).scores == low.scores);
  CHECK(fuse_levels(low, high, 1.0, 0.5).scores.isApprox(low.scores + 0.5 * high.scores));

  // High-level evidence can flip the retrieved image of a query.
  SimilarityMatrix<double> l, h;
  l.scores.resize(2, 2);
  h.scores.resize(2, 2);
  l.scores << 0.5, 0.6, 0.0, 1.0;
  h.scores << 1.0, 0.0, 0.0, 1.0;
  l.row_ids = l.col_ids = h.row_ids = h.col_ids = {0, 1};
  CHECK(top_k_accuracy(l, 1) == 0.5);
  CHECK(top_k_accuracy(fuse_levels(l, h, 1.0, 0.5), 1) == 1.0);
}

TEST_CASE("random embeddings retrieve at chance") {
  // 200 resamples of N = 20: mean top-k must sit within 3 standard errors of k / N.
  Rng rng(3);
  const Index n = 20;
  for (Index k : {1, 5}) {
    double sum = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      const auto sim = similarity_matrix(Matrix<double>(random_matrix<double>(n, 8, rng)),
                                         Matrix<double>(random_matrix<double>(n, 8, rng)));
      sum += top_k_accuracy(sim, k);
    }
    const double p = static_cast<double>(k) / static_cast<double>(n);
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n * reps));
    CHECK(std::abs(sum / reps - p) < 3.0 * se);
  }
}

TEST_CASE("symmetry checks") {
  const auto checks = symmetry_suite();
  INFO(failures(checks));
  CHECK(all_ok(checks));
}

TEST_CASE("ablation spec validation and grid") {
  AblationSpec bad{"gate-only", true, true, false};
  CHECK_THROWS_AS(validate_spec(bad), InvalidParameter);
  const auto grid = core_ablation_grid();
  CHECK(grid.size() == 6);
  for (const auto& s : grid) CHECK_NOTHROW(validate_spec(s));
  const auto full = std::find_if(grid.begin(), grid.end(), [](const AblationSpec& s) { return s.abvp && s.bvfe && s.mbcl; });
  CHECK(full != grid.end());

  ModelConfig base;
  const auto mc = apply_spec(base, {"x", false, false, true, Degradation::gaussian_noise, PriorKind::quadratic});
  CHECK(!mc.abvp);
  CHECK(!mc.bvfe);
  CHECK(mc.degradation == Degradation::gaussian_noise);
  CHECK(mc.prior == PriorKind::quadratic);
}

TEST_CASE("ablation runner outputs") {
  const auto ds = generate_synthetic(small_synthetic(4));
  ModelConfig base;
  base.token_dim = 8;
  base.eeg_hidden = 8;
  base.attention_dim = 8;
  base.image_width = 4;
  base.image_out = 8;
  base.frozen_width = 4;
  base.frozen_out = 8;
  base.projection_dim = 8;
  base = model_config_for(ds, base);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;

  CHECK(run_ablation_grid({}, base, tc, {0}, ds).empty());
  const std::vector<AblationSpec> one{{"full"}};
  const auto rows = run_ablation_grid(one, base, tc, {0, 1}, ds);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].seed == 0);
  CHECK(rows[1].seed == 1);
  for (const auto& r : rows) {
    CHECK(r.top1 >= 0.0);
    CHECK(r.top1 <= r.top5);
  }
  const auto threaded = run_ablation_grid(one, base, tc, {0, 1}, ds, 2);
  CHECK(threaded[0].top1 == rows[0].top1);
  CHECK(threaded[1].top5 == rows[1].top5);
  CHECK_THROWS_AS(run_ablation_grid({{"bad", true, true, false}}, base, tc, {0}, ds), InvalidParameter);

  const auto summary = summarize(rows);
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].runs == 2);
  CHECK(summary[0].top1_mean == doctest::Approx((rows[0].top1 + rows[1].top1) / 2.0));

  ScratchDir dir("ablation");
  write_ablation_csv(dir / "a.csv", rows);
  write_summary_csv(dir / "s.csv", summary);
  write_ablation_csv(dir / "empty.csv", {});
  const auto a = split_lines(read_file(dir / "a.csv"));
  const auto s = split_lines(read_file(dir / "s.csv"));
  CHECK(a.size() == 3);
  CHECK(s.size() == 2);
  CHECK(split_lines(read_file(dir / "empty.csv")).size() == 1);
  CHECK(a[0].rfind("name,", 0) == 0);
}

TEST_CASE("similarity CSV is square with an id header") {
  Rng rng(5);
  auto sim = similarity_matrix(Matrix<float>(random_matrix<float>(3, 4, rng)),
                               Matrix<float>(random_matrix<float>(3, 4, rng)), {7, 8, 9});
  ScratchDir dir("simcsv");
  write_similarity_csv(dir / "s.csv", sim);
  const auto lines = split_lines(read_file(dir / "s.csv"));
  REQUIRE(lines.size() == 4);
  CHECK(std::count(lines[0].begin(), lines[0].end(), ',') == 3);
  CHECK(lines[0].find('9') != std::string::npos);
}

}  // TEST_SUITE

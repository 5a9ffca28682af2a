#include "mb2l/alignment.hpp"
#include "suites.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace mb2l;
using namespace mb2l::testing;

TEST_SUITE("alignment") {

TEST_CASE("projection head shapes and fixed points") {
  Rng rng(1);
  const auto head = ProjectionHead<double>::random(6, 12, 4, rng);
  CHECK(project(RowVector<double>(random_matrix<double>(1, 6, rng)), head).size() == 4);
  CHECK_THROWS_AS(project(RowVector<double>(random_matrix<double>(1, 5, rng)), head), InvalidParameter);

  const auto id = ProjectionHead<double>::identity(3);
  RowVector<double> x(3);
  x << 0.2, 1.5, 3.0;
  CHECK(project(x, id) == x);

  const auto no_bias = ProjectionHead<double>::random(5, 10, 3, rng, false);
  CHECK(project(RowVector<double>(RowVector<double>::Zero(5)), no_bias).isZero());
}

TEST_CASE("cosine similarity cases") {
  RowVector<double> a(3), b(3), c(3);
  a << 1, 0, 0;
  b << 0, 2, 0;
  c << -3, 0, 0;
  CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
  CHECK(cosine_sim(a, b) == doctest::Approx(0.0));
  CHECK(cosine_sim(a, c) == doctest::Approx(-1.0));
  CHECK(cosine_sim(a, RowVector<double>(RowVector<double>::Zero(3))) == 0.0);
  CHECK_THROWS_AS(cosine_sim(a, RowVector<double>(RowVector<double>::Zero(2))), InvalidParameter);
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const RowVector<double> u = random_matrix<double>(1, 8, rng);
    const RowVector<double> v = random_matrix<double>(1, 8, rng);
    const double s = cosine_sim(u, v);
    CHECK(std::abs(s) <= 1.0 + 1e-12);
    CHECK(cosine_sim(RowVector<double>(2.5 * u), RowVector<double>(0.1 * v)) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("InfoNCE edge cases") {
  Rng rng(3);
  const Matrix<double> z = random_matrix<double>(1, 4, rng);
  ContrastiveConfig cfg;
  CHECK(info_nce_bidirectional(z, z, cfg) == doctest::Approx(0.0).epsilon(1e-12));

  // Sharp temperature with perfectly matched one-hot pairs.
  Matrix<double> eye = Matrix<double>::Identity(4, 4);
  cfg.tau = 0.01;
  CHECK(info_nce_bidirectional(eye, eye, cfg) < 1e-4);

  cfg.tau = 0.0;
  CHECK_THROWS_AS(info_nce_bidirectional(eye, eye, cfg), InvalidParameter);
  CHECK_THROWS_AS(info_nce_bidirectional(eye, Matrix<double>(Matrix<double>::Identity(3, 4)), ContrastiveConfig{}),
                  InvalidParameter);
}

TEST_CASE("InfoNCE equals a direct log-softmax evaluation") {
  Rng rng(4);
  const Matrix<double> zi = random_matrix<double>(5, 6, rng);
  const Matrix<double> ze = random_matrix<double>(5, 6, rng);
  const double tau = 0.2;
  Matrix<double> s(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) s(i, j) = cosine_sim(zi.row(i), ze.row(j)) / tau;
  double i2e = 0.0, e2i = 0.0;
  for (Index i = 0; i < 5; ++i) {
    i2e += std::log(s.row(i).array().exp().sum()) - s(i, i);
    e2i += std::log(s.col(i).array().exp().sum()) - s(i, i);
  }
  const double expected = 0.5 * (i2e + e2i) / 5.0;
  ContrastiveConfig cfg;
  cfg.tau = tau;
  CHECK(info_nce_bidirectional(zi, ze, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("level weighting presets") {
  CHECK(intra_subject_contrastive().alpha_high == 0.5);
  CHECK(inter_subject_contrastive().alpha_high == 0.1);
  CHECK(total_loss(2.0, 4.0, intra_subject_contrastive()) == doctest::Approx(4.0));
  CHECK(total_loss(2.0, 4.0, inter_subject_contrastive()) == doctest::Approx(2.4));
}

TEST_CASE("analytic invariants") {
  const auto checks = analytic_suite();
  INFO(failures(checks));
  CHECK(all_ok(checks));
}

TEST_CASE("similarity and loss symmetries") {
  const auto checks = symmetry_suite();
  INFO(failures(checks));
  CHECK(all_ok(checks));
}

TEST_CASE("head and temperature gradients") {
  Rng rng(5);
  CHECK(head_temperature_gradient(true, rng).worst < kGradTolerance);
  CHECK(head_temperature_gradient(false, rng).worst < kGradTolerance);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfcov/errors.hpp"
#include "mfcov/metric.hpp"
#include "support/test_support.hpp"

using namespace mfcov;
using mfcov::testing::Rng;

namespace {

double rel_frob(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

LearnedMetric metric_of(const Matrix& a) { return LearnedMetric{SpdMatrix(a), 0.1, "test"}; }

}  // namespace

TEST_CASE("similarity and dissimilarity") {
  Rng rng(51);
  const SpdMatrix i3 = SpdMatrix::identity(3);
  CHECK(similarity_matrix(i3, i3).matrix() == 2.0 * Matrix::Identity(3, 3));
  for (int trial = 0; trial < 20; ++trial) {
    const SpdMatrix a(rng.spd(4, 100.0)), b(rng.spd(4, 100.0));
    const SpdMatrix s = similarity_matrix(a, b);
    CHECK(s.matrix() == similarity_matrix(b, a).matrix());
    CHECK(s.min_eigenvalue() >= a.min_eigenvalue() + b.min_eigenvalue() - 1e-10);

    Vector mu = rng.gaussian(4, 1).col(0);
    const SpdMatrix d = dissimilarity_matrix(s, mu);
    const Matrix diff = d.matrix() - s.matrix();
    CHECK(diff.trace() == doctest::Approx(mu.squaredNorm()));
    Eigen::JacobiSVD<Matrix> svd(diff);
    CHECK(svd.singularValues()(1) <= 1e-10 * svd.singularValues()(0));
    CHECK(d.min_eigenvalue() >= s.min_eigenvalue() - 1e-12);
    CHECK(dissimilarity_matrix(s, Vector::Zero(4)).matrix() == s.matrix());
  }
  CHECK_THROWS_AS(dissimilarity_matrix(i3, Vector::Zero(2)), DimensionError);
}

TEST_CASE("gmml endpoints and geodesic") {
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = rng.integer(2, 9);
    const SpdMatrix s(rng.spd(d, 1e3));
    const SpdMatrix dis = dissimilarity_matrix(s, rng.gaussian(d, 1).col(0));
    CHECK(rel_frob(gmml_metric(s, dis, 0.0).A.matrix(), s.matrix().inverse()) <= 1e-10);
    CHECK(rel_frob(gmml_metric(s, dis, 1.0).A.matrix(), dis.matrix()) <= 1e-10);
    CHECK(rel_frob(gmml_metric(s, s, 0.5).A.matrix(), Matrix::Identity(d, d)) <= 1e-10);

    const SpdMatrix s_inv = spd_inverse(s);
    const double total = dist_affine_invariant(s_inv, dis);
    for (double t : {0.1, 0.3, 0.75}) {
      const LearnedMetric m = gmml_metric(s, dis, t, "lemf");
      CHECK(m.t == t);
      CHECK(m.provenance == "lemf");
      CHECK(std::abs(dist_affine_invariant(s_inv, m.A) - t * total) <= 1e-8 * std::max(1.0, total));
    }
  }
  const SpdMatrix i2 = SpdMatrix::identity(2);
  CHECK_THROWS(gmml_metric(i2, i2, 1.5));
  CHECK_THROWS_AS(gmml_metric(i2, SpdMatrix::identity(3), 0.1), DimensionError);
}

TEST_CASE("Mahalanobis distance") {
  const LearnedMetric id = metric_of(Matrix::Identity(2, 2));
  Vector y1(2), y2(2);
  y1 << 3.0, 1.0;
  y2 << 0.0, -3.0;
  CHECK(mahalanobis_distance(id, y1, y1) == 0.0);
  CHECK(mahalanobis_distance(id, y1, y2) == doctest::Approx(5.0));
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 4.0;
  a(1, 1) = 1.0;
  Vector one = Vector::Ones(2);
  CHECK(mahalanobis_distance(metric_of(a), one, Vector::Zero(2)) == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(mahalanobis_distance(id, Vector::Ones(3), Vector::Ones(3)), DimensionError);
}

TEST_CASE("mean relative error") {
  Rng rng(53);
  const Matrix a0 = rng.spd(4, 50.0);
  std::vector<Vector> points;
  for (int i = 0; i < 100; ++i) points.push_back(rng.gaussian(4, 1).col(0));

  CHECK(mean_relative_error(metric_of(a0), metric_of(a0), points).mre == 0.0);
  CHECK(mean_relative_error(metric_of(4.0 * a0), metric_of(a0), points).mre == doctest::Approx(1.0));

  // Loop-free recomputation: all quadratic forms at once via a matrix product.
  const Matrix a = rng.spd(4, 50.0);
  Matrix y(4, 100);
  for (int i = 0; i < 100; ++i) y.col(i) = points[i];
  const Vector qa = (y.array() * (a * y).array()).colwise().sum().sqrt().matrix().transpose();
  const Vector q0 = (y.array() * (a0 * y).array()).colwise().sum().sqrt().matrix().transpose();
  const double oracle = ((qa - q0).array().abs() / q0.array()).mean();
  const RelativeErrorReport report = mean_relative_error(metric_of(a), metric_of(a0), points);
  CHECK(std::abs(report.mre - oracle) <= 1e-12);
  CHECK(report.mre >= 0.0);
  CHECK(report.used == 100);

  points.push_back(Vector::Zero(4));
  const RelativeErrorReport with_zero = mean_relative_error(metric_of(a), metric_of(a0), points);
  CHECK(with_zero.excluded_zero_points == 1);
  CHECK(with_zero.mre == doctest::Approx(report.mre).epsilon(1e-14));
  CHECK_THROWS(mean_relative_error(metric_of(a), metric_of(a0), std::vector<Vector>{}));
}

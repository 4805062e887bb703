#include "mfcov/metric.hpp"

#include <cmath>

#include "mfcov/errors.hpp"

namespace mfcov {

SpdMatrix similarity_matrix(const SpdMatrix& cov0, const SpdMatrix& cov1) {
  if (cov0.dim() != cov1.dim()) throw DimensionError("similarity_matrix: dimension mismatch");
  return SpdMatrix(cov0.matrix() + cov1.matrix());
}

SpdMatrix dissimilarity_matrix(const SpdMatrix& similarity, const Vector& mean_gap) {
  if (mean_gap.size() != similarity.dim()) {
    throw DimensionError("dissimilarity_matrix: mean gap has the wrong dimension");
  }
  return SpdMatrix(similarity.matrix() + mean_gap * mean_gap.transpose());
}

LearnedMetric gmml_metric(const SpdMatrix& similarity, const SpdMatrix& dissimilarity, double t,
                          std::string provenance) {
  if (similarity.dim() != dissimilarity.dim()) throw DimensionError("gmml_metric: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw Error("gmml_metric: t must lie in [0, 1]");

  const EigenDecomposition eig = similarity.eig();
  const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (!(lo > 0.0)) throw DefinitenessError("gmml_metric: similarity matrix is singular", lo);
  const Matrix s_half = eig.reconstruct(eig.eigenvalues.cwiseSqrt());
  const Matrix s_inv_half = eig.reconstruct(eig.eigenvalues.array().rsqrt().matrix());

  const SpdMatrix inner(s_half * dissimilarity.matrix() * s_half);
  const SpdMatrix powered = spd_pow(inner, t);
  SpdMatrix a(s_inv_half * powered.matrix() * s_inv_half);
  return LearnedMetric{std::move(a), t, std::move(provenance)};
}

double mahalanobis_distance(const LearnedMetric& metric, const Vector& y1, const Vector& y2) {
  if (y1.size() != metric.A.dim() || y2.size() != metric.A.dim()) {
    throw DimensionError("mahalanobis_distance: dimension mismatch");
  }
  const Vector diff = y1 - y2;
  // Clamp rounding below zero; A is SPD so the form is nonnegative.
  return std::sqrt(std::max(0.0, diff.dot(metric.A.matrix() * diff)));
}

RelativeErrorReport mean_relative_error(const LearnedMetric& metric, const LearnedMetric& reference,
                                        std::span<const Vector> test_points) {
  if (test_points.empty()) throw Error("mean_relative_error: empty test set");
  const Vector origin = Vector::Zero(metric.A.dim());
  RelativeErrorReport out;
  double sum = 0.0;
  for (const Vector& y : test_points) {
    const double ref = mahalanobis_distance(reference, y, origin);
    if (ref == 0.0) {
      ++out.excluded_zero_points;
      continue;
    }
    sum += std::abs(mahalanobis_distance(metric, y, origin) - ref) / ref;
    ++out.used;
  }
  if (out.used == 0) throw Error("mean_relative_error: every test point is at the origin");
  out.mre = sum / static_cast<double>(out.used);
  return out;
}

}  // namespace mfcov

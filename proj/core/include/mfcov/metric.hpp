#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mfcov/spd.hpp"

namespace mfcov {

/// Mahalanobis metric d_A(y1, y2) = sqrt((y1 - y2)^T A (y1 - y2)).
struct LearnedMetric {
  SpdMatrix A;
  double t = 0.1;
  std::string provenance;  ///< estimator that produced the class covariances
};

inline constexpr double kDefaultGmmlStep = 0.1;

/// S = cov0 + cov1.
SpdMatrix similarity_matrix(const SpdMatrix& cov0, const SpdMatrix& cov1);

/// D = S + mu mu^T, with mu the difference of class means.
SpdMatrix dissimilarity_matrix(const SpdMatrix& similarity, const Vector& mean_gap);

/// A = S^{-1/2} (S^{1/2} D S^{1/2})^t S^{-1/2}: the point at parameter t on the
/// affine-invariant geodesic from S^{-1} to D.
LearnedMetric gmml_metric(const SpdMatrix& similarity, const SpdMatrix& dissimilarity,
                          double t = kDefaultGmmlStep, std::string provenance = {});

double mahalanobis_distance(const LearnedMetric& metric, const Vector& y1, const Vector& y2);

struct RelativeErrorReport {
  double mre = 0.0;
  std::size_t used = 0;
  std::size_t excluded_zero_points = 0;
};

/// Mean over test points of |d_A(y, 0) - d_A0(y, 0)| / d_A0(y, 0). Points at
/// the origin are skipped and counted.
RelativeErrorReport mean_relative_error(const LearnedMetric& metric, const LearnedMetric& reference,
                                        std::span<const Vector> test_points);

}  // namespace mfcov

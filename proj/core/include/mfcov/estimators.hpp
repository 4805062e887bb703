#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfcov/spd.hpp"

namespace mfcov {

/// Samples stored one per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// How the mean is handled when forming sample covariances.
enum class MeanMode {
  KnownZero,   ///< (1/n) sum y y^T
  SampleMean,  ///< (1/(n-1)) sum (y - ybar)(y - ybar)^T
  /// As SampleMean, but in a hierarchy every covariance is centred by the
  /// mean of exactly the rows it sums over (see LevelCovariances).
  PerSetMean,
};

/// Per-level sample sets evaluated on shared events: row i of every level
/// comes from the same underlying draw omega_i. Level sizes are nondecreasing.
class CoupledSampleHierarchy {
 public:
  explicit CoupledSampleHierarchy(std::vector<SampleMatrix> levels);

  Index dim() const noexcept { return dim_; }
  std::size_t num_levels() const noexcept { return levels_.size(); }
  Index size(std::size_t level) const { return levels_.at(level).rows(); }
  std::vector<Index> sizes() const;
  const SampleMatrix& level(std::size_t level) const { return levels_.at(level); }

 private:
  std::vector<SampleMatrix> levels_;
  Index dim_ = 0;
};

/// Sample covariance of the rows of `samples`.
SymmetricMatrix sample_covariance(const SampleMatrix& samples, MeanMode mode);

/// The two covariances level `l` contributes: over all n_l rows and over the
/// first n_{l-1} rows. In SampleMean mode both are centred by the mean of
/// the full level (the shared mean printed in the estimator definition). In
/// PerSetMean mode the prefix is centred by its own mean, the same rows that
/// centre the level l-1 covariance, so the control variate stays coupled.
struct LevelCovariances {
  SymmetricMatrix full;
  SymmetricMatrix prefix;
};

/// Level 0 covariance followed by (full, prefix) pairs for levels 1..L.
struct HierarchyCovariances {
  SymmetricMatrix level0;
  std::vector<LevelCovariances> corrections;
};

HierarchyCovariances hierarchy_covariances(const CoupledSampleHierarchy& h, MeanMode mode);

/// Euclidean multi-fidelity estimate. May be indefinite; never repaired.
SymmetricMatrix emf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                             MeanMode mode);

/// Log-Euclidean multi-fidelity estimate, SPD by construction. Throws
/// DefinitenessError naming the level when a constituent covariance is not SPD.
SpdMatrix lemf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                        MeanMode mode);

/// The same estimate written as a weighted log-Euclidean Frechet mean of the
/// level-0 covariance and the per-level log-differences. Used as an
/// independent cross-check of lemf_estimate.
SpdMatrix lemf_frechet_form(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                            MeanMode mode);

/// Eigenvalue-truncated EMF estimate.
SpdMatrix truncated_emf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                                 MeanMode mode, double delta = kDefaultTruncationDelta);

}  // namespace mfcov

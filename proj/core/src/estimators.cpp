#include "mfcov/estimators.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "mfcov/errors.hpp"

namespace mfcov {
namespace {

SymmetricMatrix covariance_about(const SampleMatrix& rows, Index count, const Vector* center,
                                 double normalizer) {
  const auto block = rows.topRows(count);
  Matrix acc;
  if (center) {
    const SampleMatrix centered = block.rowwise() - center->transpose();
    acc = centered.transpose() * centered;
  } else {
    acc = block.transpose() * block;
  }
  return SymmetricMatrix(acc / normalizer);
}

void check_alphas(const CoupledSampleHierarchy& h, std::span<const double> alphas) {
  if (alphas.size() + 1 != h.num_levels()) {
    std::ostringstream os;
    os << "expected " << h.num_levels() - 1 << " control-variate weights, got " << alphas.size();
    throw DimensionError(os.str());
  }
  for (double a : alphas) {
    if (!std::isfinite(a)) throw Error("control-variate weights must be finite");
  }
}

SpdMatrix require_spd(const SymmetricMatrix& s, const std::string& label) {
  try {
    SpdMatrix spd(s);
    if (!(spd.min_eigenvalue() > 0.0)) {
      throw DefinitenessError("not strictly positive definite", spd.min_eigenvalue());
    }
    return spd;
  } catch (const DefinitenessError& e) {
    std::ostringstream os;
    os.precision(17);
    os << label << " is not positive definite (smallest eigenvalue " << e.eigenvalue()
       << "); the log-Euclidean estimator needs more than d samples per level";
    throw DefinitenessError(os.str(), e.eigenvalue());
  }
}

// Constituent covariances over n <= d samples are singular, although the
// computed smallest eigenvalue can still come out a rounding error above zero.
void require_enough_samples(const CoupledSampleHierarchy& h) {
  for (std::size_t l = 0; l < h.num_levels(); ++l) {
    if (h.size(l) <= h.dim()) {
      std::ostringstream os;
      os << "level " << l << " has n_" << l << " = " << h.size(l)
         << " samples; the log-Euclidean estimator needs more than d = " << h.dim()
         << " samples per level";
      throw DefinitenessError(os.str(), 0.0);
    }
  }
}

}  // namespace

CoupledSampleHierarchy::CoupledSampleHierarchy(std::vector<SampleMatrix> levels)
    : levels_(std::move(levels)) {
  if (levels_.empty()) throw HierarchyError("sample hierarchy needs at least one level");
  dim_ = levels_.front().cols();
  if (dim_ < 1) throw HierarchyError("samples must have dimension >= 1");
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (levels_[l].cols() != dim_) {
      std::ostringstream os;
      os << "level " << l << " has dimension " << levels_[l].cols() << ", expected " << dim_;
      throw HierarchyError(os.str());
    }
    if (levels_[l].rows() < 1) {
      std::ostringstream os;
      os << "level " << l << " is empty";
      throw HierarchyError(os.str());
    }
    if (l > 0 && levels_[l].rows() < levels_[l - 1].rows()) {
      std::ostringstream os;
      os << "level sizes must be nondecreasing: n_" << l << " = " << levels_[l].rows() << " < n_"
         << l - 1 << " = " << levels_[l - 1].rows();
      throw HierarchyError(os.str());
    }
  }
}

std::vector<Index> CoupledSampleHierarchy::sizes() const {
  std::vector<Index> out;
  out.reserve(levels_.size());
  for (const auto& l : levels_) out.push_back(l.rows());
  return out;
}

SymmetricMatrix sample_covariance(const SampleMatrix& samples, MeanMode mode) {
  const Index n = samples.rows();
  if (n < 1 || samples.cols() < 1) throw Error("sample_covariance: empty input");
  if (mode == MeanMode::KnownZero) {
    return covariance_about(samples, n, nullptr, static_cast<double>(n));
  }
  if (n < 2) throw Error("sample_covariance: sample-mean mode needs at least 2 samples");
  const Vector mean = samples.colwise().mean().transpose();
  return covariance_about(samples, n, &mean, static_cast<double>(n - 1));
}

HierarchyCovariances hierarchy_covariances(const CoupledSampleHierarchy& h, MeanMode mode) {
  HierarchyCovariances out{sample_covariance(h.level(0), mode), {}};
  out.corrections.reserve(h.num_levels() - 1);
  for (std::size_t l = 1; l < h.num_levels(); ++l) {
    const SampleMatrix& rows = h.level(l);
    const Index n_full = rows.rows();
    const Index n_prev = h.size(l - 1);
    if (mode == MeanMode::KnownZero) {
      out.corrections.push_back({covariance_about(rows, n_full, nullptr, double(n_full)),
                                 covariance_about(rows, n_prev, nullptr, double(n_prev))});
    } else {
      if (n_prev < 2) {
        std::ostringstream os;
        os << "level " << l << ": sample-mean mode needs at least 2 coupled samples";
        throw HierarchyError(os.str());
      }
      const Vector mean = rows.colwise().mean().transpose();
      const Vector prefix_mean =
          mode == MeanMode::PerSetMean ? Vector(rows.topRows(n_prev).colwise().mean().transpose()) : mean;
      out.corrections.push_back({covariance_about(rows, n_full, &mean, double(n_full - 1)),
                                 covariance_about(rows, n_prev, &prefix_mean, double(n_prev - 1))});
    }
  }
  return out;
}

SymmetricMatrix emf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                             MeanMode mode) {
  check_alphas(h, alphas);
  const HierarchyCovariances cov = hierarchy_covariances(h, mode);
  SymmetricMatrix est = cov.level0;
  for (std::size_t l = 0; l < cov.corrections.size(); ++l) {
    est += (cov.corrections[l].full - cov.corrections[l].prefix) * alphas[l];
  }
  return est;
}

SpdMatrix lemf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                        MeanMode mode) {
  check_alphas(h, alphas);
  require_enough_samples(h);
  const HierarchyCovariances cov = hierarchy_covariances(h, mode);
  SymmetricMatrix log_est = spd_log(require_spd(cov.level0, "level 0 covariance"));
  for (std::size_t l = 0; l < cov.corrections.size(); ++l) {
    const std::string level = "level " + std::to_string(l + 1);
    const SpdMatrix full = require_spd(cov.corrections[l].full, level + " covariance over n_" +
                                                                    std::to_string(l + 1) + " samples");
    const SpdMatrix prefix = require_spd(cov.corrections[l].prefix, level + " covariance over n_" +
                                                                        std::to_string(l) + " samples");
    log_est += (spd_log(full) - spd_log(prefix)) * alphas[l];
  }
  return sym_exp(log_est);
}

SpdMatrix lemf_frechet_form(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                            MeanMode mode) {
  check_alphas(h, alphas);
  require_enough_samples(h);
  const HierarchyCovariances cov = hierarchy_covariances(h, mode);
  const SpdMatrix base = require_spd(cov.level0, "level 0 covariance");

  // Perturbations D_l = full (-) prefix, with the subtraction order reversed
  // for negative weights so that every Frechet weight is positive.
  std::vector<SpdMatrix> perturbations;
  std::vector<double> weights;
  double total = 1.0;
  for (std::size_t l = 0; l < cov.corrections.size(); ++l) {
    if (alphas[l] == 0.0) continue;
    const std::string level = "level " + std::to_string(l + 1);
    const SpdMatrix full = require_spd(cov.corrections[l].full, level + " full covariance");
    const SpdMatrix prefix = require_spd(cov.corrections[l].prefix, level + " prefix covariance");
    perturbations.push_back(alphas[l] > 0.0 ? log_sub(full, prefix) : log_sub(prefix, full));
    weights.push_back(std::abs(alphas[l]));
    total += std::abs(alphas[l]);
  }
  if (perturbations.empty()) return base;

  // The normalized mean of logs divides by the weight total, so every point
  // is raised to that total first: the minimizer of
  //   d_LE(X, base^W)^2 + sum_l |a_l| d_LE(X, D_l^W)^2
  // has Log X = Log base + sum_l a_l Log(full) - a_l Log(prefix).
  std::vector<SpdMatrix> points;
  std::vector<double> point_weights;
  points.push_back(spd_pow(base, total));
  point_weights.push_back(1.0);
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    points.push_back(spd_pow(perturbations[i], total));
    point_weights.push_back(weights[i]);
  }
  return frechet_mean_log_euclidean(points, point_weights);
}

SpdMatrix truncated_emf_estimate(const CoupledSampleHierarchy& h, std::span<const double> alphas,
                                 MeanMode mode, double delta) {
  return truncate_eigenvalues(emf_estimate(h, alphas, mode), delta);
}

}  // namespace mfcov

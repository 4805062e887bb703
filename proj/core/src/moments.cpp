#include "mfcov/moments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfcov/errors.hpp"

namespace mfcov {
namespace {

void check_levels(const MomentSummary& m, const CostModel& c) {
  if (m.num_levels() != c.num_levels()) {
    std::ostringstream os;
    os << "moment summary has " << m.num_levels() << " levels but cost model has " << c.num_levels();
    throw DimensionError(os.str());
  }
}

// rho_l^2 - rho_{l+1}^2 for l = 0..L, after validating that the allocation
// formula applies.
std::vector<double> correlation_gaps(const MomentSummary& m) {
  const std::size_t levels = m.num_levels();
  if (levels > 1 && std::abs(m.rho(1)) >= 1.0) {
    throw AllocationError(
        "degenerate correlation: |rho_1| = 1 makes the optimal allocation undefined");
  }
  std::vector<double> gaps(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    gaps[l] = m.rho(l) * m.rho(l) - m.rho(l + 1) * m.rho(l + 1);
    if (gaps[l] < 0.0) {
      std::ostringstream os;
      os << "correlations are not ordered by fidelity: |rho_" << l + 1 << "| > |rho_" << l
         << "|; re-sort the surrogate levels or merge them before planning";
      throw AllocationError(os.str());
    }
  }
  return gaps;
}

double cost_of(const CostModel& c, std::span<const std::int64_t> n) {
  double total = 0.0;
  for (std::size_t l = 0; l < n.size(); ++l) total += static_cast<double>(n[l]) * c[l];
  return total;
}

// Makes the active (nonzero) counts nondecreasing in level order.
void repair_ordering(std::vector<std::int64_t>& n) {
  std::int64_t prev = n[0];
  for (std::size_t l = 1; l < n.size(); ++l) {
    if (n[l] == 0) continue;
    n[l] = std::max(n[l], prev);
    prev = n[l];
  }
}

// Removes samples until the plan fits the budget, largest counts first,
// keeping the active counts nondecreasing.
void shrink_to_budget(std::vector<std::int64_t>& n, const CostModel& c, double budget) {
  while (cost_of(c, n) > budget) {
    bool decremented = false;
    for (std::size_t l = n.size(); l-- > 1;) {
      if (n[l] == 0) continue;
      std::int64_t prev = n[0];
      for (std::size_t k = l; k-- > 1;) {
        if (n[k] > 0) {
          prev = n[k];
          break;
        }
      }
      if (n[l] > prev) {
        --n[l];
        decremented = true;
        break;
      }
    }
    if (!decremented) {
      for (auto& v : n) {
        if (v > 0) --v;
      }
    }
    if (n[0] < 1) throw AllocationError("budget cannot afford one high-fidelity sample");
  }
}

}  // namespace

// --- MomentSummary ---------------------------------------------------------

MomentSummary::MomentSummary(std::vector<double> sigma, std::vector<double> rho_surrogates)
    : sigma_(std::move(sigma)) {
  if (sigma_.empty()) throw Error("moment summary needs at least one level");
  if (rho_surrogates.size() + 1 != sigma_.size()) {
    std::ostringstream os;
    os << "moment summary: " << sigma_.size() << " generalized variances need "
       << sigma_.size() - 1 << " surrogate correlations, got " << rho_surrogates.size();
    throw DimensionError(os.str());
  }
  for (std::size_t l = 0; l < sigma_.size(); ++l) {
    if (!(sigma_[l] > 0.0) || !std::isfinite(sigma_[l])) {
      std::ostringstream os;
      os << "generalized standard deviation sigma_" << l << " must be positive, got " << sigma_[l];
      throw Error(os.str());
    }
  }
  rho_.reserve(sigma_.size() + 1);
  rho_.push_back(1.0);
  for (std::size_t l = 0; l < rho_surrogates.size(); ++l) {
    const double r = rho_surrogates[l];
    if (!(r >= -1.0 && r <= 1.0)) {
      std::ostringstream os;
      os << "generalized correlation rho_" << l + 1 << " must lie in [-1, 1], got " << r;
      throw Error(os.str());
    }
    rho_.push_back(r);
  }
  rho_.push_back(0.0);
}

bool MomentSummary::monotone_fidelity() const {
  for (std::size_t l = 2; l + 1 < rho_.size(); ++l) {
    if (std::abs(rho_[l]) > std::abs(rho_[l - 1])) return false;
  }
  return true;
}

MomentSummary MomentSummary::select(std::span<const std::size_t> levels) const {
  if (levels.empty() || levels.front() != 0) {
    throw Error("a level selection must start with level 0");
  }
  std::vector<double> sigma;
  std::vector<double> rho;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    sigma.push_back(this->sigma(levels[i]));
    if (i > 0) rho.push_back(this->rho(levels[i]));
  }
  return MomentSummary(std::move(sigma), std::move(rho));
}

// --- CostModel ------------------------------------------------------------

CostModel::CostModel(std::vector<double> c) : costs(std::move(c)) {
  if (costs.empty()) throw Error("cost model needs at least one level");
  for (std::size_t l = 0; l < costs.size(); ++l) {
    if (!(costs[l] > 0.0) || !std::isfinite(costs[l])) {
      std::ostringstream os;
      os << "cost c_" << l << " must be positive, got " << costs[l];
      throw Error(os.str());
    }
  }
}

bool CostModel::nonincreasing() const {
  return std::is_sorted(costs.rbegin(), costs.rend());
}

// --- AllocationPlan ------------------------------------------------------

std::vector<std::size_t> AllocationPlan::active_levels() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < n.size(); ++l) {
    if (n[l] > 0) out.push_back(l);
  }
  return out;
}

std::vector<double> AllocationPlan::active_alphas() const {
  std::vector<double> out;
  for (std::size_t l = 1; l < n.size(); ++l) {
    if (n[l] > 0) out.push_back(alphas.at(l - 1));
  }
  return out;
}

// --- Moments ---------------------------------------------------------------

MomentSummary estimate_moments(const CoupledSampleHierarchy& h, MeanMode mode) {
  const Index d = h.dim();
  const std::size_t levels = h.num_levels();

  // Outer products y y^T (optionally of mean-centred samples), flattened.
  auto outer_products = [&](std::size_t l, Index count) {
    const SampleMatrix& rows = h.level(l);
    Vector center = Vector::Zero(d);
    if (mode != MeanMode::KnownZero) center = rows.colwise().mean().transpose();
    Matrix out(count, d * d);
    for (Index i = 0; i < count; ++i) {
      const Vector y = rows.row(i).transpose() - center;
      const Matrix o = y * y.transpose();
      out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(o.data(), d * d);
    }
    return out;
  };
  auto centred = [](Matrix o) {
    const Eigen::RowVectorXd mean = o.colwise().mean();
    o.rowwise() -= mean;
    return o;
  };

  for (std::size_t l = 0; l < levels; ++l) {
    if (h.size(l) < 2) {
      std::ostringstream os;
      os << "moment estimation needs at least 2 samples per level; level " << l << " has "
         << h.size(l) << " (fewer than 2 paired events)";
      throw Error(os.str());
    }
  }

  std::vector<double> sigma(levels);
  std::vector<double> rho;
  for (std::size_t l = 0; l < levels; ++l) {
    const Index n = h.size(l);
    const Matrix o = centred(outer_products(l, n));
    sigma[l] = std::sqrt(o.squaredNorm() / static_cast<double>(n - 1));
  }

  // Level sizes are nondecreasing, so the paired events are the first n_0.
  const Index n0 = h.size(0);
  const Matrix o0 = centred(outer_products(0, n0));
  for (std::size_t l = 1; l < levels; ++l) {
    const Matrix ol = centred(outer_products(l, h.size(l)).topRows(n0));
    const double cross = (o0.array() * ol.array()).sum();
    const double denom = std::sqrt(o0.squaredNorm() * ol.squaredNorm());
    if (!(denom > 0.0)) throw Error("moment estimation: degenerate (zero-variance) level");
    rho.push_back(std::clamp(cross / denom, -1.0, 1.0));
  }
  return MomentSummary(std::move(sigma), std::move(rho));
}

MomentSummary closed_form_moments_gaussian(const SpdMatrix& sigma,
                                           std::span<const SymmetricMatrix> gammas) {
  auto generalized_sd = [](const Matrix& s) {
    const double tr = s.trace();
    return std::sqrt((s * s).trace() + tr * tr);
  };
  std::vector<double> sd{generalized_sd(sigma.matrix())};
  std::vector<double> rho;
  for (const auto& g : gammas) {
    if (g.dim() != sigma.dim()) throw DimensionError("noise covariance dimension mismatch");
    sd.push_back(generalized_sd(sigma.matrix() + g.matrix()));
    rho.push_back(sd.front() / sd.back());
  }
  return MomentSummary(std::move(sd), std::move(rho));
}

// --- Allocation -------------------------------------------------------------

std::vector<double> optimal_coefficients(const MomentSummary& m) {
  std::vector<double> alphas;
  for (std::size_t l = 1; l < m.num_levels(); ++l) {
    alphas.push_back(m.rho(l) * m.sigma(0) / m.sigma(l));
  }
  return alphas;
}

double predicted_mse(const MomentSummary& m, std::span<const double> n,
                     std::span<const double> alphas) {
  if (n.size() != m.num_levels() || alphas.size() + 1 != m.num_levels()) {
    throw DimensionError("predicted_mse: sample counts or weights do not match the moment summary");
  }
  for (std::size_t l = 0; l < n.size(); ++l) {
    if (!(n[l] > 0.0)) throw Error("predicted_mse: sample counts must be positive");
    if (l > 0 && n[l] < n[l - 1]) throw HierarchyError("predicted_mse: sample counts must be nondecreasing");
  }
  const double s0 = m.sigma(0);
  double mse = s0 * s0 / n[0];
  for (std::size_t l = 1; l < n.size(); ++l) {
    const double a = alphas[l - 1];
    const double sl = m.sigma(l);
    mse += (1.0 / n[l - 1] - 1.0 / n[l]) * (a * a * sl * sl - 2.0 * a * m.rho(l) * sl * s0);
  }
  return mse;
}

AllocationPlan optimal_allocation(const MomentSummary& m, const CostModel& c, double budget,
                                  Rounding rounding) {
  check_levels(m, c);
  if (!(budget > 0.0) || !std::isfinite(budget)) throw AllocationError("budget must be positive");
  if (budget < c[0]) throw AllocationError("budget cannot afford one high-fidelity sample");

  const std::vector<double> gaps = correlation_gaps(m);
  const std::size_t levels = m.num_levels();
  const double one_minus_rho1 = 1.0 - m.rho(1) * m.rho(1);

  std::vector<double> weight(levels);
  double denom = 0.0;
  for (std::size_t l = 0; l < levels; ++l) {
    weight[l] = std::sqrt(c[0] * gaps[l] / (c[l] * one_minus_rho1));
    denom += c[l] * weight[l];
  }

  AllocationPlan plan;
  plan.alphas = optimal_coefficients(m);
  plan.n_real.resize(levels);
  plan.n.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    plan.n_real[l] = budget * weight[l] / denom;
    switch (rounding) {
      case Rounding::Floor: plan.n[l] = static_cast<std::int64_t>(std::floor(plan.n_real[l])); break;
      case Rounding::Ceil: plan.n[l] = static_cast<std::int64_t>(std::ceil(plan.n_real[l])); break;
      case Rounding::None: plan.n[l] = static_cast<std::int64_t>(std::llround(plan.n_real[l])); break;
    }
  }
  if (plan.n[0] < 1) throw AllocationError("budget cannot afford one high-fidelity sample");

  if (rounding == Rounding::None) {
    // n_real itself stays the formula's value; the MSE and cost use the
    // ordering-repaired counts, as in the rounded modes.
    std::vector<double> repaired;
    std::vector<std::size_t> active;
    for (std::size_t l = 0; l < levels; ++l) {
      if (plan.n_real[l] <= 0.0) continue;
      repaired.push_back(repaired.empty() ? plan.n_real[l] : std::max(plan.n_real[l], repaired.back()));
      active.push_back(l);
    }
    plan.realized_cost = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k) plan.realized_cost += repaired[k] * c[active[k]];
    const MomentSummary sub = m.select(active);
    plan.predicted_mse = predicted_mse(sub, repaired, optimal_coefficients(sub));
    return plan;
  }

  repair_ordering(plan.n);
  if (rounding == Rounding::Floor) {
    shrink_to_budget(plan.n, c, budget);
    // Spend leftover budget above one high-fidelity sample on the cheapest
    // active level, so equal-budget comparisons stay within c_0.
    const std::vector<std::size_t> active = plan.active_levels();
    const std::size_t cheapest = active.back();
    while (budget - cost_of(c, plan.n) > c[0] && cost_of(c, plan.n) + c[cheapest] <= budget) {
      ++plan.n[cheapest];
    }
  }
  plan.realized_cost = cost_of(c, plan.n);

  const std::vector<std::size_t> active = plan.active_levels();
  std::vector<double> n_active;
  for (std::size_t l : active) n_active.push_back(static_cast<double>(plan.n[l]));
  plan.predicted_mse = predicted_mse(m.select(active), n_active, plan.active_alphas());
  return plan;
}

double first_order_optimal_mse(const MomentSummary& m, const CostModel& c, double budget) {
  check_levels(m, c);
  if (!(budget > 0.0)) throw AllocationError("budget must be positive");
  const std::vector<double> gaps = correlation_gaps(m);
  double sum = 0.0;
  for (std::size_t l = 0; l < gaps.size(); ++l) sum += std::sqrt(c[l] * gaps[l]);
  return m.sigma(0) * m.sigma(0) / budget * sum * sum;
}

BenefitCheck benefit_condition(const MomentSummary& m, const CostModel& c) {
  check_levels(m, c);
  const std::vector<double> gaps = correlation_gaps(m);
  BenefitCheck out;
  for (std::size_t l = 0; l < gaps.size(); ++l) out.lhs += std::sqrt(c[l] / c[0] * gaps[l]);
  out.holds = out.lhs < 1.0;
  return out;
}

BifidelityBenefit bifidelity_benefit(double rho1, double c0, double c1) {
  if (!(c0 > 0.0) || !(c1 > 0.0)) throw Error("bifidelity_benefit: costs must be positive");
  if (!(std::abs(rho1) <= 1.0)) throw Error("bifidelity_benefit: |rho_1| must not exceed 1");
  const double r2 = rho1 * rho1;
  BifidelityBenefit out;
  out.direct_lhs = std::sqrt(1.0 - r2) + std::sqrt(c1 / c0 * r2);
  out.rearranged_lhs = 2.0 * std::sqrt((1.0 - r2) / r2);
  out.rearranged_rhs = (c0 - c1) / std::sqrt(c0 * c1);
  return out;
}

double predicted_speedup(const MomentSummary& m, const CostModel& c) {
  const double lhs = benefit_condition(m, c).lhs;
  return 1.0 / (lhs * lhs);
}

}  // namespace mfcov

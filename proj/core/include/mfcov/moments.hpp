#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfcov/estimators.hpp"
#include "mfcov/spd.hpp"

namespace mfcov {

/// Generalized variances sigma_l (l = 0..L) and correlations rho_l
/// (l = 0..L+1, with rho_0 = 1 and rho_{L+1} = 0).
///
/// sigma_l^2 = Tr Cov[y_l y_l^T] = E ||y_l y_l^T - Sigma_l||_F^2, and rho_l is
/// the trace cross-covariance between the level-0 and level-l outer products
/// divided by sigma_0 sigma_l.
class MomentSummary {
 public:
  /// `rho_surrogates` holds rho_1..rho_L; the fixed endpoints are added here.
  MomentSummary(std::vector<double> sigma, std::vector<double> rho_surrogates);

  std::size_t num_levels() const noexcept { return sigma_.size(); }
  std::size_t num_surrogates() const noexcept { return sigma_.size() - 1; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  /// Length L+2 including rho_0 = 1 and rho_{L+1} = 0.
  const std::vector<double>& rho() const noexcept { return rho_; }
  double sigma(std::size_t l) const { return sigma_.at(l); }
  double rho(std::size_t l) const { return rho_.at(l); }

  /// |rho_1| >= ... >= |rho_L|. Recorded only; pilot noise may violate it.
  bool monotone_fidelity() const;

  /// Moments of a sub-hierarchy made of the given levels (level 0 first).
  MomentSummary select(std::span<const std::size_t> levels) const;

 private:
  std::vector<double> sigma_;
  std::vector<double> rho_;
};

/// Per-level sampling costs c_0 >= c_1 >= ... >= c_L > 0.
struct CostModel {
  std::vector<double> costs;

  explicit CostModel(std::vector<double> c);
  std::size_t num_levels() const noexcept { return costs.size(); }
  double operator[](std::size_t l) const { return costs.at(l); }
  /// Ordering is advisory: a violation is reported, not rejected.
  bool nonincreasing() const;
};

enum class Rounding { Floor, Ceil, None };

struct AllocationPlan {
  std::vector<double> alphas;      ///< length L
  std::vector<double> n_real;      ///< unrounded optimum, length L+1
  std::vector<std::int64_t> n;     ///< rounded sample counts, length L+1 (0 = level unused)
  double realized_cost = 0.0;
  double predicted_mse = 0.0;

  /// Indices of levels with n > 0, level 0 first.
  std::vector<std::size_t> active_levels() const;
  /// Weights of the active surrogate levels, matching active_levels()[1..].
  std::vector<double> active_alphas() const;
};

struct BenefitCheck {
  bool holds = false;
  double lhs = 0.0;
};

/// Both algebraic forms of the bifidelity benefit condition.
struct BifidelityBenefit {
  double direct_lhs = 0.0;      ///< sqrt(1 - rho^2) + sqrt(c1/c0 rho^2), compared against 1
  double rearranged_lhs = 0.0;  ///< 2 sqrt((1 - rho^2) / rho^2)
  double rearranged_rhs = 0.0;  ///< (c0 - c1) / sqrt(c0 c1)
  bool direct_holds() const { return direct_lhs < 1.0; }
  bool rearranged_holds() const { return rearranged_lhs < rearranged_rhs; }
};

/// Pilot estimates from a coupled hierarchy. Uses (m-1) normalization with
/// empirically centred outer products; rho_l pairs the first min(n_0, n_l)
/// events and is clamped to [-1, 1]. In SampleMean mode each sample is first
/// centred by its level's mean.
MomentSummary estimate_moments(const CoupledSampleHierarchy& h, MeanMode mode);

/// Closed form for y_l = y + eps_l with y ~ N(0, Sigma), eps_l ~ N(0, Gamma_l):
/// sigma_l^2 = Tr((Sigma+Gamma_l)^2) + Tr(Sigma+Gamma_l)^2 and rho_l = sigma_0 / sigma_l.
MomentSummary closed_form_moments_gaussian(const SpdMatrix& sigma,
                                           std::span<const SymmetricMatrix> gammas);

std::vector<double> optimal_coefficients(const MomentSummary& m);

/// sigma_0^2/n_0 + sum_l (1/n_{l-1} - 1/n_l)(a_l^2 sigma_l^2 - 2 a_l rho_l sigma_l sigma_0).
double predicted_mse(const MomentSummary& m, std::span<const double> n,
                     std::span<const double> alphas);

AllocationPlan optimal_allocation(const MomentSummary& m, const CostModel& c, double budget,
                                  Rounding rounding);

/// (sigma_0^2 / B) (sum_l sqrt(c_l (rho_l^2 - rho_{l+1}^2)))^2.
double first_order_optimal_mse(const MomentSummary& m, const CostModel& c, double budget);

BenefitCheck benefit_condition(const MomentSummary& m, const CostModel& c);

BifidelityBenefit bifidelity_benefit(double rho1, double c0, double c1);

/// Budget ratio of the high-fidelity-only estimator to the multi-fidelity
/// estimator at equal first-order MSE.
double predicted_speedup(const MomentSummary& m, const CostModel& c);

}  // namespace mfcov

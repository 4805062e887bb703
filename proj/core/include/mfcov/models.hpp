#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mfcov/estimators.hpp"
#include "mfcov/moments.hpp"
#include "mfcov/spd.hpp"

namespace mfcov {

/// Deterministic random stream. Substreams are derived from a root seed and
/// a path of integer keys, so trial i's stream does not depend on how many
/// other trials ran before it or on which thread runs it.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);
  static RandomStream derive(std::uint64_t root_seed, std::initializer_list<std::uint64_t> path);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// A hierarchy of coupled data sources. One event omega (a latent draw)
/// determines the outputs at every level; levels are evaluated lazily so
/// expensive levels are only computed when needed.
class Model {
 public:
  virtual ~Model() = default;

  virtual Index output_dim() const = 0;
  virtual std::size_t num_levels() const = 0;
  virtual const CostModel& costs() const = 0;
  /// Covariance of the level-0 output, when known analytically.
  virtual std::optional<SpdMatrix> true_covariance() const { return std::nullopt; }

  /// Draws the latent randomness of one event. Every call consumes the same
  /// number of variates, so prefixes of a stream give the same events.
  virtual Vector draw_latent(RandomStream& rng) const = 0;
  /// Output of `level` for a drawn event.
  virtual Vector evaluate(const Vector& latent, std::size_t level) const = 0;
};

/// Outputs of every level for one event.
std::vector<Vector> draw_event(const Model& model, RandomStream& rng);

/// Draws events omega_1..omega_{max n} once and evaluates level
/// `levels[k]` on the first `n[k]` of them. `levels` must be increasing and
/// `n` nondecreasing. Level k of the result is model level `levels[k]`.
CoupledSampleHierarchy sample_hierarchy(const Model& model, std::span<const std::size_t> levels,
                                        std::span<const std::int64_t> n, RandomStream& rng);

/// All levels, n.size() == model.num_levels().
CoupledSampleHierarchy sample_hierarchy(const Model& model, std::span<const std::int64_t> n,
                                        std::uint64_t seed);

/// sum_l n_l c_l over the given levels.
double sampling_cost(const CostModel& costs, std::span<const std::size_t> levels,
                     std::span<const std::int64_t> n);

/// y_l = mu + y + eps_l with y ~ N(0, Sigma) and independent eps_l ~ N(0, Gamma_l).
class GaussianNoiseHierarchy final : public Model {
 public:
  GaussianNoiseHierarchy(SpdMatrix sigma, std::vector<SymmetricMatrix> gammas, CostModel costs,
                         std::optional<Vector> mean = std::nullopt);

  Index output_dim() const override { return sigma_.dim(); }
  std::size_t num_levels() const override { return gammas_.size() + 1; }
  const CostModel& costs() const override { return costs_; }
  std::optional<SpdMatrix> true_covariance() const override { return sigma_; }

  Vector draw_latent(RandomStream& rng) const override;
  Vector evaluate(const Vector& latent, std::size_t level) const override;

  const SpdMatrix& sigma() const noexcept { return sigma_; }
  const std::vector<SymmetricMatrix>& gammas() const noexcept { return gammas_; }
  const Vector& mean() const noexcept { return mean_; }
  /// Sigma + Gamma_l (Gamma_0 = 0).
  SpdMatrix level_covariance(std::size_t level) const;
  MomentSummary closed_form_moments() const;

 private:
  SpdMatrix sigma_;
  std::vector<SymmetricMatrix> gammas_;
  CostModel costs_;
  Vector mean_;
  Matrix sigma_factor_;
  std::vector<Matrix> gamma_factors_;
};

/// The 4x4 covariance, noise levels (0.1, 0.5, 1.0) I and costs
/// (1, 1e-2, 1e-3, 1e-4) of the motivating Gaussian example.
GaussianNoiseHierarchy gaussian_motivating_example();

/// Observation locations x_i = i / 11, i = 1..10.
inline constexpr int kHeatObservations = 10;
inline constexpr int kHeatParameters = 4;
inline constexpr int kHeatMinGrid = 16;

/// Solves -(exp(kappa(x; theta)) u')' = 1 on (0, 1), u(0) = 0, u(1) = 1, with
/// kappa(x; theta) = sum_k theta_k sin(2 pi k x), by the conservative
/// second-order finite-difference scheme on `interior_points` uniformly
/// spaced nodes, and returns u at x_i = i/11 by linear interpolation.
Vector solve_heat_fd(std::span<const double> theta, int interior_points);

/// Multi-fidelity heat-conduction model: level l solves on grid_sizes[l]
/// interior nodes; theta ~ N(0, I_4) is shared across levels.
class HeatConduction1D final : public Model {
 public:
  /// Costs default to the grid sizes.
  explicit HeatConduction1D(std::vector<int> grid_sizes,
                            std::optional<std::vector<double>> costs = std::nullopt);
  ~HeatConduction1D() override;
  HeatConduction1D(HeatConduction1D&&) noexcept;
  HeatConduction1D& operator=(HeatConduction1D&&) noexcept;

  Index output_dim() const override { return kHeatObservations; }
  std::size_t num_levels() const override { return grid_sizes_.size(); }
  const CostModel& costs() const override { return costs_; }

  Vector draw_latent(RandomStream& rng) const override;
  Vector evaluate(const Vector& latent, std::size_t level) const override;

  const std::vector<int>& grid_sizes() const noexcept { return grid_sizes_; }

  /// 65536 / 1024 grid points.
  static HeatConduction1D full_scale_preset();
  /// 4096 / 256 grid points.
  static HeatConduction1D desk_preset();

 private:
  friend Vector solve_heat_fd(std::span<const double> theta, int interior_points);
  struct Grid;
  std::vector<int> grid_sizes_;
  CostModel costs_;
  std::vector<std::unique_ptr<Grid>> grids_;
};

}  // namespace mfcov

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mfcov/errors.hpp"
#include "mfcov/models.hpp"

namespace mfcov {

// Per-resolution tables: sin(2 pi k x) at the cell midpoints and the
// interpolation stencil of each observation point.
struct HeatConduction1D::Grid {
  explicit Grid(int interior_points);

  Vector solve(std::span<const double> theta) const;

  int m;
  double h;
  Matrix basis;  // (m + 1) x 4, row j at x = (j + 1/2) h
  Vector index;  // 0, 1, ..., m
  std::array<int, kHeatObservations> left{};
  std::array<double, kHeatObservations> weight{};
  // Bracketing node indices (left[i], left[i] + 1) in observation order;
  // nondecreasing because the observation points are.
  std::array<int, 2 * kHeatObservations> nodes{};
};

HeatConduction1D::Grid::Grid(int interior_points) : m(interior_points) {
  if (m < kHeatMinGrid) {
    std::ostringstream os;
    os << "heat solver needs at least " << kHeatMinGrid << " interior points, got " << m;
    throw Error(os.str());
  }
  h = 1.0 / (m + 1);
  basis.resize(m + 1, kHeatParameters);
  index = Vector::LinSpaced(m + 1, 0.0, static_cast<double>(m));
  for (int j = 0; j <= m; ++j) {
    const double x = (j + 0.5) * h;
    for (int k = 0; k < kHeatParameters; ++k) {
      basis(j, k) = std::sin(2.0 * std::numbers::pi * (k + 1) * x);
    }
  }
  for (int i = 0; i < kHeatObservations; ++i) {
    // Node index of x_i = (i+1)/11 in units of h, computed exactly in integers.
    const long num = static_cast<long>(i + 1) * (m + 1);
    left[i] = static_cast<int>(num / 11);
    weight[i] = static_cast<double>(num % 11) / 11.0;
    nodes[2 * i] = left[i];
    nodes[2 * i + 1] = left[i] + 1;
  }
}

Vector HeatConduction1D::Grid::solve(std::span<const double> theta) const {
  if (theta.size() != static_cast<std::size_t>(kHeatParameters)) {
    throw DimensionError("heat solver expects a 4-dimensional parameter");
  }
  // Resistivities 1 / a at the midpoints, a = exp(kappa), in one fused pass
  // into a per-thread buffer.
  static_assert(kHeatParameters == 4);
  thread_local Vector scratch;
  if (scratch.size() < m + 1) scratch.resize(m + 1);
  auto r = scratch.head(m + 1);
  r = (basis.col(0) * -theta[0] + basis.col(1) * -theta[1] + basis.col(2) * -theta[2] + basis.col(3) * -theta[3])
          .array()
          .exp()
          .matrix();

  // The rows -a[i-1] u_{i-1} + (a[i-1] + a[i]) u_i - a[i] u_{i+1} = h^2,
  // i = 1..m, say that the discrete flux g_i = a[i] (u_{i+1} - u_i) drops by h^2
  // per cell: g_i = g_0 - i h^2. Then u_{i+1} - u_i = g_i r[i], and u_{m+1} = 1
  // fixes g_0. This solves the tridiagonal system exactly, without pivots.
  // u_j = g_0 P_j - h^2 Q_j with P_j = sum_{k<j} r[k], Q_j = sum_{k<j} k r[k];
  // only the nodes bracketing observation points are needed.
  // The sums are accumulated segment by segment between consecutive nodes.
  const double h2 = h * h;
  std::array<double, 2 * kHeatObservations> p{}, q{};
  double sum_r = 0.0;
  double sum_ir = 0.0;
  int start = 0;
  auto advance = [&](int stop) {
    if (stop > start) {
      sum_r += r.segment(start, stop - start).sum();
      sum_ir += r.segment(start, stop - start).dot(index.segment(start, stop - start));
      start = stop;
    }
  };
  for (std::size_t slot = 0; slot < nodes.size(); ++slot) {
    advance(nodes[slot]);
    p[slot] = sum_r;
    q[slot] = sum_ir;
  }
  advance(m + 1);
  if (!(sum_r > 0.0) || !std::isfinite(sum_r) || !std::isfinite(sum_ir)) {
    throw Error("heat solver: singular finite-difference system");
  }
  const double g0 = (1.0 + h2 * sum_ir) / sum_r;
  auto node_value = [&](std::size_t slot) {
    return nodes[slot] == m + 1 ? 1.0 : g0 * p[slot] - h2 * q[slot];
  };

  Vector obs(kHeatObservations);
  for (int i = 0; i < kHeatObservations; ++i) {
    obs(i) = (1.0 - weight[i]) * node_value(2 * i) + weight[i] * node_value(2 * i + 1);
  }
  if (!obs.allFinite()) throw Error("heat solver: non-finite solution");
  return obs;
}

Vector solve_heat_fd(std::span<const double> theta, int interior_points) {
  return HeatConduction1D::Grid(interior_points).solve(theta);
}

HeatConduction1D::HeatConduction1D(std::vector<int> grid_sizes, std::optional<std::vector<double>> costs)
    : grid_sizes_(std::move(grid_sizes)),
      costs_(costs ? std::move(*costs)
                   : std::vector<double>(grid_sizes_.begin(), grid_sizes_.end())) {
  if (grid_sizes_.empty()) throw Error("heat model needs at least one grid");
  if (costs_.num_levels() != grid_sizes_.size()) {
    throw DimensionError("heat model: need one cost per grid");
  }
  for (int m : grid_sizes_) grids_.push_back(std::make_unique<Grid>(m));
}

HeatConduction1D::~HeatConduction1D() = default;
HeatConduction1D::HeatConduction1D(HeatConduction1D&&) noexcept = default;
HeatConduction1D& HeatConduction1D::operator=(HeatConduction1D&&) noexcept = default;

Vector HeatConduction1D::draw_latent(RandomStream& rng) const {
  Vector theta(kHeatParameters);
  for (int k = 0; k < kHeatParameters; ++k) theta(k) = rng.normal();
  return theta;
}

Vector HeatConduction1D::evaluate(const Vector& latent, std::size_t level) const {
  return grids_.at(level)->solve(std::span<const double>(latent.data(), latent.size()));
}

HeatConduction1D HeatConduction1D::full_scale_preset() { return HeatConduction1D({65536, 1024}); }

HeatConduction1D HeatConduction1D::desk_preset() { return HeatConduction1D({4096, 256}); }

}  // namespace mfcov

#include "mfcov/models.hpp"

#include <algorithm>
#include <sstream>

#include "mfcov/errors.hpp"

namespace mfcov {
namespace {

// Square root of a positive semidefinite matrix; tiny negative eigenvalues
// from rounding are clamped to zero.
Matrix psd_sqrt(const SymmetricMatrix& a, const char* what) {
  const EigenDecomposition eig = sym_eig(a);
  const double hi = std::max(1.0, eig.eigenvalues(0));
  const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (lo < -kSpdTolerance * hi) {
    std::ostringstream os;
    os << what << " is not positive semidefinite";
    throw DefinitenessError(os.str(), lo);
  }
  return eig.reconstruct(eig.eigenvalues.cwiseMax(0.0).cwiseSqrt());
}

}  // namespace

// --- RandomStream -----------------------------------------------------------

RandomStream::RandomStream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

RandomStream RandomStream::derive(std::uint64_t root_seed,
                                  std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(root_seed),
                                   static_cast<std::uint32_t>(root_seed >> 32),
                                   static_cast<std::uint32_t>(path.size())};
  for (std::uint64_t key : path) {
    words.push_back(static_cast<std::uint32_t>(key));
    words.push_back(static_cast<std::uint32_t>(key >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  RandomStream out(0);
  out.engine_.seed(seq);
  return out;
}

// --- Sampling ---------------------------------------------------------------

std::vector<Vector> draw_event(const Model& model, RandomStream& rng) {
  const Vector latent = model.draw_latent(rng);
  std::vector<Vector> out;
  out.reserve(model.num_levels());
  for (std::size_t l = 0; l < model.num_levels(); ++l) out.push_back(model.evaluate(latent, l));
  return out;
}

CoupledSampleHierarchy sample_hierarchy(const Model& model, std::span<const std::size_t> levels,
                                        std::span<const std::int64_t> n, RandomStream& rng) {
  if (levels.empty() || levels.size() != n.size()) {
    throw HierarchyError("sample_hierarchy: need one sample count per selected level");
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k] >= model.num_levels()) throw HierarchyError("sample_hierarchy: level out of range");
    if (k > 0 && levels[k] <= levels[k - 1]) {
      throw HierarchyError("sample_hierarchy: levels must be strictly increasing");
    }
    if (n[k] < 1) throw HierarchyError("sample_hierarchy: sample counts must be positive");
    if (k > 0 && n[k] < n[k - 1]) {
      std::ostringstream os;
      os << "sample_hierarchy: sample counts must be nondecreasing (n = " << n[k] << " after "
         << n[k - 1] << ")";
      throw HierarchyError(os.str());
    }
  }
  const Index d = model.output_dim();
  std::vector<SampleMatrix> data;
  data.reserve(levels.size());
  for (std::int64_t count : n) data.emplace_back(count, d);

  const std::int64_t events = n.back();
  for (std::int64_t i = 0; i < events; ++i) {
    const Vector latent = model.draw_latent(rng);
    // Only the levels whose sample count reaches event i are evaluated.
    for (std::size_t k = levels.size(); k-- > 0;) {
      if (i >= n[k]) break;
      data[k].row(i) = model.evaluate(latent, levels[k]).transpose();
    }
  }
  return CoupledSampleHierarchy(std::move(data));
}

CoupledSampleHierarchy sample_hierarchy(const Model& model, std::span<const std::int64_t> n,
                                        std::uint64_t seed) {
  if (n.size() != model.num_levels()) {
    throw HierarchyError("sample_hierarchy: need one sample count per model level");
  }
  std::vector<std::size_t> levels(n.size());
  for (std::size_t l = 0; l < levels.size(); ++l) levels[l] = l;
  RandomStream rng(seed);
  return sample_hierarchy(model, levels, n, rng);
}

double sampling_cost(const CostModel& costs, std::span<const std::size_t> levels,
                     std::span<const std::int64_t> n) {
  double total = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) total += static_cast<double>(n[k]) * costs[levels[k]];
  return total;
}

// --- GaussianNoiseHierarchy -------------------------------------------------

GaussianNoiseHierarchy::GaussianNoiseHierarchy(SpdMatrix sigma, std::vector<SymmetricMatrix> gammas,
                                               CostModel costs, std::optional<Vector> mean)
    : sigma_(std::move(sigma)),
      gammas_(std::move(gammas)),
      costs_(std::move(costs)),
      mean_(mean.value_or(Vector::Zero(sigma_.dim()))) {
  if (costs_.num_levels() != gammas_.size() + 1) {
    throw DimensionError("Gaussian hierarchy: need one cost per level");
  }
  if (mean_.size() != sigma_.dim()) throw DimensionError("Gaussian hierarchy: mean dimension mismatch");
  sigma_factor_ = psd_sqrt(sigma_, "Sigma");
  for (const auto& g : gammas_) {
    if (g.dim() != sigma_.dim()) throw DimensionError("Gaussian hierarchy: noise dimension mismatch");
    gamma_factors_.push_back(psd_sqrt(g, "noise covariance"));
  }
}

Vector GaussianNoiseHierarchy::draw_latent(RandomStream& rng) const {
  const Index d = sigma_.dim();
  Vector z(d * static_cast<Index>(num_levels()));
  for (Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return z;
}

Vector GaussianNoiseHierarchy::evaluate(const Vector& latent, std::size_t level) const {
  const Index d = sigma_.dim();
  Vector y = mean_ + sigma_factor_ * latent.head(d);
  if (level > 0) y += gamma_factors_.at(level - 1) * latent.segment(d * static_cast<Index>(level), d);
  return y;
}

SpdMatrix GaussianNoiseHierarchy::level_covariance(std::size_t level) const {
  if (level == 0) return sigma_;
  return SpdMatrix(sigma_.matrix() + gammas_.at(level - 1).matrix());
}

MomentSummary GaussianNoiseHierarchy::closed_form_moments() const {
  return closed_form_moments_gaussian(sigma_, gammas_);
}

GaussianNoiseHierarchy gaussian_motivating_example() {
  Matrix sigma(4, 4);
  sigma << 2.52, -0.17, 0.67, -0.98,  //
      -0.17, 0.64, -0.29, 0.35,       //
      0.67, -0.29, 0.49, -0.52,       //
      -0.98, 0.35, -0.52, 1.31;
  std::vector<SymmetricMatrix> gammas;
  for (double g : {0.1, 0.5, 1.0}) gammas.push_back(SymmetricMatrix::identity(4) * g);
  return GaussianNoiseHierarchy(SpdMatrix(sigma), std::move(gammas),
                                CostModel({1.0, 1e-2, 1e-3, 1e-4}));
}

}  // namespace mfcov

#include "mfcov/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json_support.hpp"
#include "mfcov/errors.hpp"
#include "mfcov/serialization.hpp"

namespace mfcov {

using detail::as_bool;
using detail::as_double;
using detail::as_doubles;
using detail::as_int;
using detail::as_ints;
using detail::as_matrix;
using detail::as_positive;
using detail::as_seed;
using detail::as_string;
using detail::as_strings;
using detail::as_vector;
using detail::config_fail;
using detail::json;
using detail::ObjectReader;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream identifiers: the first key of every derived random stream.
constexpr std::uint64_t kPilotStream = 1;
constexpr std::uint64_t kEstimateStream = 2;
constexpr std::uint64_t kBenchStream = 3;
constexpr std::uint64_t kReferenceStream = 4;
constexpr std::uint64_t kMetricStream = 5;
constexpr std::uint64_t kTestPointStream = 6;
constexpr std::uint64_t kMetricPilotStream = 7;

constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::HfOnly, EstimatorKind::SurrogateOnly, EstimatorKind::Emf,
                                            EstimatorKind::TruncatedEmf, EstimatorKind::Lemf};
constexpr DistanceKind kAllDistances[] = {DistanceKind::Frobenius, DistanceKind::LogEuclidean,
                                          DistanceKind::AffineInvariant};

bool is_multifidelity(EstimatorKind k) {
  return k == EstimatorKind::Emf || k == EstimatorKind::TruncatedEmf || k == EstimatorKind::Lemf;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

/// Samples affordable at `cost` each; the tiny relative slack absorbs
/// rounding in budgets such as 0.3 / 0.1.
std::int64_t affordable(double budget, double cost) {
  return static_cast<std::int64_t>(std::floor(budget / cost * (1.0 + 1e-12)));
}

/// Runs body(i) for i in [0, count) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// ---------------------------------------------------------------------------
// Config fragments

MeanMode parse_mean_mode(const json& j, const std::string& path) {
  const std::string s = as_string(j, path);
  if (s == "known_zero") return MeanMode::KnownZero;
  if (s == "sample_mean") return MeanMode::SampleMean;
  if (s == "per_set_mean") return MeanMode::PerSetMean;
  config_fail(path, "expected \"known_zero\", \"sample_mean\" or \"per_set_mean\", got \"" + s + "\"");
}

std::string mean_mode_name(MeanMode m) {
  switch (m) {
    case MeanMode::KnownZero: return "known_zero";
    case MeanMode::SampleMean: return "sample_mean";
    case MeanMode::PerSetMean: return "per_set_mean";
  }
  return "unknown";
}

Rounding parse_rounding(const json& j, const std::string& path) {
  const std::string s = as_string(j, path);
  if (s == "floor") return Rounding::Floor;
  if (s == "ceil") return Rounding::Ceil;
  if (s == "none") return Rounding::None;
  config_fail(path, "expected \"floor\", \"ceil\" or \"none\", got \"" + s + "\"");
}

std::vector<EstimatorKind> parse_estimators(const json& j, const std::string& path) {
  std::vector<EstimatorKind> out;
  const std::vector<std::string> names = as_strings(j, path);
  if (names.empty()) config_fail(path, "needs at least one estimator");
  for (std::size_t i = 0; i < names.size(); ++i) {
    EstimatorKind k;
    try {
      k = parse_estimator(names[i]);
    } catch (const ConfigError& e) {
      config_fail(path + "[" + std::to_string(i) + "]", e.what());
    }
    if (std::find(out.begin(), out.end(), k) != out.end()) config_fail(path, "duplicate estimator " + names[i]);
    out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DistanceKind> parse_distances(const json& j, const std::string& path) {
  std::vector<DistanceKind> out;
  const std::vector<std::string> names = as_strings(j, path);
  for (std::size_t i = 0; i < names.size(); ++i) {
    DistanceKind k;
    if (names[i] == "frobenius") {
      k = DistanceKind::Frobenius;
    } else if (names[i] == "log_euclidean") {
      k = DistanceKind::LogEuclidean;
    } else if (names[i] == "affine_invariant") {
      k = DistanceKind::AffineInvariant;
    } else {
      config_fail(path + "[" + std::to_string(i) + "]",
                  "unknown metric \"" + names[i] + "\" (frobenius, log_euclidean, affine_invariant)");
    }
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  if (out.empty()) config_fail(path, "needs at least one metric");
  return out;
}

std::int64_t parse_count(const json& j, const std::string& path, std::int64_t minimum) {
  const std::int64_t v = as_int(j, path);
  if (v < minimum) config_fail(path, "must be at least " + std::to_string(minimum));
  return v;
}

std::int64_t parse_pilot_size(const json& j, const std::string& path) {
  const std::int64_t v = as_int(j, path);
  if (v < 2) config_fail(path, "fewer than 2 paired events; a pilot needs at least 2 per level");
  return v;
}

struct ParsedModel {
  std::shared_ptr<const Model> model;
  std::string label;
};

CostModel parse_costs(const json& j, const std::string& path, std::size_t levels) {
  const std::vector<double> c = as_doubles(j, path);
  if (c.size() != levels) config_fail(path, "expected " + std::to_string(levels) + " costs (one per level)");
  for (std::size_t i = 0; i < c.size(); ++i) as_positive(json(c[i]), path + "[" + std::to_string(i) + "]");
  return CostModel(c);
}

GaussianNoiseHierarchy parse_gaussian_body(ObjectReader& r) {
  const Matrix sigma = as_matrix(r.required("sigma"), r.path("sigma"));
  const json& gj = r.required("gammas");
  if (!gj.is_array()) config_fail(r.path("gammas"), "expected an array of matrices");
  std::vector<SymmetricMatrix> gammas;
  for (std::size_t i = 0; i < gj.size(); ++i) {
    const std::string p = r.path("gammas") + "[" + std::to_string(i) + "]";
    const Matrix g = as_matrix(gj[i], p);
    if (g.rows() != sigma.rows()) config_fail(p, "dimension differs from sigma");
    const SymmetricMatrix gs(g);
    if (!(smallest_eigenvalue(gs) >= -kSpdTolerance * std::max(1.0, g.norm()))) {
      config_fail(p, "noise covariance must be positive semidefinite");
    }
    gammas.push_back(gs);
  }
  const CostModel costs = parse_costs(r.required("costs"), r.path("costs"), gammas.size() + 1);
  std::optional<Vector> mean;
  if (const json* m = r.optional("mean")) {
    mean = as_vector(*m, r.path("mean"));
    if (mean->size() != sigma.rows()) config_fail(r.path("mean"), "dimension differs from sigma");
  }
  if (!is_spd(SymmetricMatrix(sigma))) config_fail(r.path("sigma"), "must be symmetric positive definite");
  return GaussianNoiseHierarchy(SpdMatrix(sigma), gammas, costs, mean);
}

ParsedModel parse_model(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const std::string kind = as_string(r.required("kind"), r.path("kind"));
  const json* preset = r.optional("preset");
  ParsedModel out;
  if (kind == "gaussian") {
    if (preset) {
      const std::string name = as_string(*preset, r.path("preset"));
      if (name != "motivating") config_fail(r.path("preset"), "unknown gaussian preset \"" + name + "\"");
      r.finish();
      out.model = std::make_shared<GaussianNoiseHierarchy>(gaussian_motivating_example());
      out.label = "gaussian:motivating";
      return out;
    }
    out.model = std::make_shared<GaussianNoiseHierarchy>(parse_gaussian_body(r));
    r.finish();
    out.label = "gaussian:custom";
    return out;
  }
  if (kind == "heat") {
    if (preset) {
      const std::string name = as_string(*preset, r.path("preset"));
      r.finish();
      if (name == "desk") {
        out.model = std::make_shared<HeatConduction1D>(HeatConduction1D::desk_preset());
      } else if (name == "full") {
        out.model = std::make_shared<HeatConduction1D>(HeatConduction1D::full_scale_preset());
      } else {
        config_fail(r.path("preset"), "unknown heat preset \"" + name + "\" (desk, full)");
      }
      out.label = "heat:" + name;
      return out;
    }
    const std::vector<std::int64_t> grids = as_ints(r.required("grid_sizes"), r.path("grid_sizes"));
    if (grids.empty()) config_fail(r.path("grid_sizes"), "needs at least one grid");
    std::vector<int> g;
    for (std::size_t i = 0; i < grids.size(); ++i) {
      if (grids[i] < kHeatMinGrid || grids[i] > (1 << 26)) {
        config_fail(r.path("grid_sizes") + "[" + std::to_string(i) + "]",
                    "must be between " + std::to_string(kHeatMinGrid) + " and 67108864");
      }
      g.push_back(static_cast<int>(grids[i]));
    }
    std::optional<std::vector<double>> costs;
    if (const json* c = r.optional("costs")) costs = parse_costs(*c, r.path("costs"), g.size()).costs;
    r.finish();
    std::string label = "heat:";
    for (int m : g) label += std::to_string(m) + ",";
    out.model = std::make_shared<HeatConduction1D>(std::move(g), costs);
    out.label = label;
    return out;
  }
  config_fail(r.path("kind"), "unknown model kind \"" + kind + "\" (gaussian, heat)");
}

MomentSummary closed_form_or_throw(const Model& model, const std::string& path) {
  const auto* g = dynamic_cast<const GaussianNoiseHierarchy*>(&model);
  if (g == nullptr) config_fail(path, "closed-form moments need a gaussian model; set pilot_size");
  return g->closed_form_moments();
}

struct PilotRun {
  MomentSummary moments;
  PilotInfo info;
};

PilotRun run_pilot(const Model& model, std::int64_t pilot_size, MeanMode mode, std::uint64_t seed) {
  const std::vector<std::int64_t> n(model.num_levels(), pilot_size);
  std::vector<std::size_t> levels(model.num_levels());
  for (std::size_t l = 0; l < levels.size(); ++l) levels[l] = l;
  RandomStream rng = RandomStream::derive(seed, {kPilotStream});
  const CoupledSampleHierarchy h = sample_hierarchy(model, levels, n, rng);
  return PilotRun{estimate_moments(h, mode), PilotInfo{pilot_size, sampling_cost(model.costs(), levels, n)}};
}

struct Distances {
  double frob = kNaN, log_e = kNaN, aff = kNaN, lambda_min = kNaN;
};

/// Distances of an estimate to the reference. Non-SPD estimates (smallest
/// eigenvalue <= 0) get infinite log-Euclidean and affine-invariant distances.
Distances distances_to(const SymmetricMatrix& estimate, const SpdMatrix* spd_estimate, const SpdMatrix& reference) {
  Distances d;
  d.frob = dist_frobenius(estimate, reference);
  if (spd_estimate != nullptr) {
    d.lambda_min = spd_estimate->min_eigenvalue();
    if (d.lambda_min > 0.0) {
      d.log_e = dist_log_euclidean(*spd_estimate, reference);
      d.aff = dist_affine_invariant(*spd_estimate, reference);
    } else {
      d.log_e = d.aff = kInf;
    }
    return d;
  }
  EigenDecomposition eig = sym_eig(estimate);
  d.lambda_min = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (d.lambda_min > 0.0) {
    const SpdMatrix spd = SpdMatrix::from_spectrum(std::move(eig));
    d.log_e = dist_log_euclidean(spd, reference);
    d.aff = dist_affine_invariant(spd, reference);
  } else {
    d.log_e = d.aff = kInf;
  }
  return d;
}

void write_output(const std::string& text, const std::optional<std::filesystem::path>& path, std::ostream& out) {
  if (path) {
    write_text_file(*path, text);
  } else {
    out << text;
  }
}

std::filesystem::path summary_path(const std::filesystem::path& rows_path) {
  return rows_path.parent_path() / (rows_path.stem().string() + "_summary.csv");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::HfOnly: return "hf_only";
    case EstimatorKind::SurrogateOnly: return "surrogate_only";
    case EstimatorKind::Emf: return "emf";
    case EstimatorKind::TruncatedEmf: return "truncated_emf";
    case EstimatorKind::Lemf: return "lemf";
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
  for (EstimatorKind k : kAllEstimators) {
    if (estimator_name(k) == name) return k;
  }
  throw ConfigError("unknown estimator \"" + std::string(name) +
                    "\" (hf_only, surrogate_only, emf, truncated_emf, lemf)");
}

// ---------------------------------------------------------------------------
// pilot

std::string cmd_pilot(const std::string& config, const std::filesystem::path&, const RunOptions& options) {
  const json j = detail::parse_json(config, "config");
  ObjectReader r(j, "config");
  const ParsedModel model = parse_model(r.required("model"), r.path("model"));
  const std::int64_t pilot_size = parse_pilot_size(r.required("pilot_size"), r.path("pilot_size"));
  MeanMode mode = MeanMode::SampleMean;
  if (const json* m = r.optional("mean_mode")) mode = parse_mean_mode(*m, r.path("mean_mode"));
  std::uint64_t seed = 0;
  if (const json* s = r.optional("seed")) seed = as_seed(*s, r.path("seed"));
  if (options.seed) seed = *options.seed;
  r.optional("output");
  r.finish();

  const PilotRun pilot = run_pilot(*model.model, pilot_size, mode, seed);
  return moments_to_json(pilot.moments, pilot.info);
}

// ---------------------------------------------------------------------------
// plan

std::string cmd_plan(const std::string& config, const std::filesystem::path& base_dir, const RunOptions& options) {
  const json j = detail::parse_json(config, "config");
  ObjectReader r(j, "config");
  const double budget = as_positive(r.required("budget"), r.path("budget"));
  Rounding rounding = Rounding::Floor;
  if (const json* ro = r.optional("rounding")) rounding = parse_rounding(*ro, r.path("rounding"));
  const json* moments_inline = r.optional("moments");
  const json* moments_file = r.optional("moments_file");
  const json* model_json = r.optional("model");
  const json* costs_json = r.optional("costs");
  const json* pilot_json = r.optional("pilot_size");
  const json* mode_json = r.optional("mean_mode");
  const json* seed_json = r.optional("seed");
  r.optional("output");
  r.finish();

  if ((moments_inline != nullptr) + (moments_file != nullptr) + (model_json != nullptr) != 1) {
    config_fail("config", "give exactly one of 'moments', 'moments_file' or 'model'");
  }
  std::optional<MomentSummary> moments;
  std::optional<CostModel> costs;
  if (moments_inline) moments = detail::moments_from(*moments_inline, r.path("moments"));
  if (moments_file) {
    const std::filesystem::path p = resolve(base_dir, as_string(*moments_file, r.path("moments_file")));
    moments = detail::moments_from(detail::parse_json(read_text_file(p), p.string()), p.string());
  }
  if (model_json) {
    const ParsedModel model = parse_model(*model_json, r.path("model"));
    costs = model.model->costs();
    if (pilot_json) {
      MeanMode mode = MeanMode::SampleMean;
      if (mode_json) mode = parse_mean_mode(*mode_json, r.path("mean_mode"));
      std::uint64_t seed = seed_json ? as_seed(*seed_json, r.path("seed")) : 0;
      if (options.seed) seed = *options.seed;
      moments = run_pilot(*model.model, parse_pilot_size(*pilot_json, r.path("pilot_size")), mode, seed).moments;
    } else {
      moments = closed_form_or_throw(*model.model, r.path("model"));
    }
  } else if (pilot_json || mode_json || seed_json) {
    config_fail("config", "'pilot_size', 'mean_mode' and 'seed' apply only together with 'model'");
  }
  if (costs_json) costs = parse_costs(*costs_json, r.path("costs"), moments->num_levels());
  if (!costs) config_fail("config", "missing required key 'costs'");

  const AllocationPlan plan = optimal_allocation(*moments, *costs, budget, rounding);
  const BenefitCheck benefit = benefit_condition(*moments, *costs);

  json report = detail::plan_json(plan);
  report["budget"] = budget;
  report["costs"] = costs->costs;
  report["rounding"] = rounding == Rounding::Floor ? "floor" : rounding == Rounding::Ceil ? "ceil" : "none";
  report["active_levels"] = plan.active_levels();
  report["moments"] = json::parse(moments_to_json(*moments));
  report["benefit_condition"] = {{"holds", benefit.holds}, {"lhs", benefit.lhs}};
  report["predicted_speedup"] = predicted_speedup(*moments, *costs);
  report["first_order_mse"] = first_order_optimal_mse(*moments, *costs, budget);
  return report.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// estimate

std::string cmd_estimate(const std::string& config, const std::filesystem::path& base_dir,
                         const RunOptions& options) {
  const json j = detail::parse_json(config, "config");
  ObjectReader r(j, "config");
  const EstimatorKind kind = [&] {
    try {
      return parse_estimator(as_string(r.required("estimator"), r.path("estimator")));
    } catch (const ConfigError& e) {
      config_fail(r.path("estimator"), e.what());
    }
  }();
  MeanMode mode = MeanMode::SampleMean;
  if (const json* m = r.optional("mean_mode")) mode = parse_mean_mode(*m, r.path("mean_mode"));
  double delta = kDefaultTruncationDelta;
  if (const json* d = r.optional("delta")) delta = as_positive(*d, r.path("delta"));
  const json* samples_json = r.optional("samples");
  const json* model_json = r.optional("model");
  const json* plan_json = r.optional("plan");
  const json* plan_file = r.optional("plan_file");
  const json* n_json = r.optional("n");
  const json* alphas_json = r.optional("alphas");
  const json* export_json = r.optional("export_samples");
  std::uint64_t seed = 0;
  if (const json* s = r.optional("seed")) seed = as_seed(*s, r.path("seed"));
  if (options.seed) seed = *options.seed;
  r.optional("output");
  r.finish();

  if ((samples_json != nullptr) == (model_json != nullptr)) {
    config_fail("config", "give exactly one of 'samples' (a manifest) or 'model'");
  }
  if (options.verify_frechet && kind != EstimatorKind::Lemf) {
    config_fail("config", "--verify-frechet applies to the lemf estimator only");
  }

  // Sample hierarchy, its model level indices and costs.
  std::optional<CoupledSampleHierarchy> h;
  std::vector<std::size_t> levels;
  std::optional<CostModel> costs;
  std::vector<double> alphas;
  bool have_alphas = false;

  if (samples_json) {
    if (plan_json || plan_file || n_json) config_fail("config", "'plan', 'plan_file' and 'n' need 'model'");
    const SampleSet set = read_sample_set(resolve(base_dir, as_string(*samples_json, r.path("samples"))));
    h = set.hierarchy;
    costs = set.costs;
    for (std::size_t l = 0; l < h->num_levels(); ++l) levels.push_back(l);
  } else {
    const ParsedModel model = parse_model(*model_json, r.path("model"));
    if ((plan_json != nullptr) + (plan_file != nullptr) + (n_json != nullptr) != 1) {
      config_fail("config", "with 'model', give exactly one of 'plan', 'plan_file' or 'n'");
    }
    std::vector<std::int64_t> n_all;
    if (n_json) {
      n_all = as_ints(*n_json, r.path("n"));
    } else {
      AllocationPlan plan;
      if (plan_json) {
        plan = detail::plan_from(*plan_json, r.path("plan"));
      } else {
        const std::filesystem::path p = resolve(base_dir, as_string(*plan_file, r.path("plan_file")));
        plan = detail::plan_from(detail::parse_json(read_text_file(p), p.string()), p.string());
      }
      n_all = plan.n;
      if (!alphas_json) {
        alphas = plan.active_alphas();
        have_alphas = true;
      }
    }
    if (n_all.size() != model.model->num_levels()) {
      config_fail(r.path("n"), "expected one sample count per model level (" +
                                   std::to_string(model.model->num_levels()) + ")");
    }
    std::vector<std::int64_t> n_active;
    for (std::size_t l = 0; l < n_all.size(); ++l) {
      if (n_all[l] < 0) config_fail(r.path("n"), "sample counts must be nonnegative");
      if (n_all[l] > 0) {
        levels.push_back(l);
        n_active.push_back(n_all[l]);
      }
    }
    if (levels.empty() || levels.front() != 0) config_fail(r.path("n"), "level 0 needs at least one sample");
    for (std::size_t k = 1; k < n_active.size(); ++k) {
      if (n_active[k] < n_active[k - 1]) config_fail(r.path("n"), "sample counts of used levels must be nondecreasing");
    }
    RandomStream rng = RandomStream::derive(seed, {kEstimateStream});
    h = sample_hierarchy(*model.model, levels, n_active, rng);
    std::vector<double> used_costs;
    for (std::size_t l : levels) used_costs.push_back(model.model->costs()[l]);
    costs = CostModel(used_costs);
  }
  if (alphas_json) {
    alphas = as_doubles(*alphas_json, r.path("alphas"));
    have_alphas = true;
  }
  if (export_json) write_sample_set(resolve(base_dir, as_string(*export_json, r.path("export_samples"))), *h, *costs);

  json out;
  out["estimator"] = std::string(estimator_name(kind));
  out["mean_mode"] = mean_mode_name(mode);
  std::vector<Index> used_n;
  double cost = 0.0;
  SymmetricMatrix estimate = SymmetricMatrix::zero(h->dim());
  std::optional<SpdMatrix> spd;

  if (kind == EstimatorKind::HfOnly || kind == EstimatorKind::SurrogateOnly) {
    const std::size_t level = kind == EstimatorKind::HfOnly ? 0 : h->num_levels() - 1;
    estimate = sample_covariance(h->level(level), mode);
    used_n.push_back(h->size(level));
    cost = static_cast<double>(h->size(level)) * (*costs)[level];
    out["levels"] = std::vector<std::size_t>{levels[level]};
  } else {
    if (!have_alphas) config_fail("config", "missing 'alphas' (or a plan supplying them)");
    if (alphas.size() + 1 != h->num_levels()) {
      config_fail(r.path("alphas"), "expected " + std::to_string(h->num_levels() - 1) + " weights for the used levels");
    }
    used_n = h->sizes();
    for (std::size_t l = 0; l < h->num_levels(); ++l) cost += static_cast<double>(h->size(l)) * (*costs)[l];
    out["levels"] = levels;
    out["alphas"] = alphas;
    if (kind == EstimatorKind::Emf) {
      estimate = emf_estimate(*h, alphas, mode);
    } else if (kind == EstimatorKind::TruncatedEmf) {
      spd = truncated_emf_estimate(*h, alphas, mode, delta);
      out["delta"] = delta;
    } else {
      spd = lemf_estimate(*h, alphas, mode);
    }
    if (spd) estimate = spd->symmetric();
  }
  const double lambda_min = spd ? spd->min_eigenvalue() : smallest_eigenvalue(estimate);
  out["dim"] = h->dim();
  out["matrix"] = detail::matrix_json(estimate.matrix());
  out["lambda_min"] = lambda_min;
  out["spd"] = lambda_min > 0.0;
  out["n"] = used_n;
  out["realized_cost"] = cost;

  if (options.verify_frechet) {
    const SpdMatrix frechet = lemf_frechet_form(*h, alphas, mode);
    const double diff = (frechet.matrix() - estimate.matrix()).norm() / estimate.matrix().norm();
    out["frechet_check"] = {{"relative_difference", diff}, {"tolerance", 1e-10}, {"passed", diff <= 1e-10}};
    if (!(diff <= 1e-10)) {
      std::ostringstream os;
      os.precision(3);
      os << "Frechet-mean form disagrees with the LEMF estimate (relative difference " << diff << ")";
      throw Error(os.str());
    }
  }
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// bench

BenchConfig parse_bench_config(const std::string& config, const std::filesystem::path& base_dir) {
  const json j = detail::parse_json(config, "config");
  ObjectReader r(j, "config");
  BenchConfig c;
  const ParsedModel model = parse_model(r.required("model"), r.path("model"));
  c.model = model.model;
  c.model_label = model.label;
  c.budgets = as_doubles(r.required("budgets"), r.path("budgets"));
  if (c.budgets.empty()) config_fail(r.path("budgets"), "needs at least one budget");
  for (std::size_t i = 0; i < c.budgets.size(); ++i) {
    as_positive(json(c.budgets[i]), r.path("budgets") + "[" + std::to_string(i) + "]");
  }
  c.trials = static_cast<int>(parse_count(r.required("trials"), r.path("trials"), 1));
  c.estimators.assign(std::begin(kAllEstimators), std::end(kAllEstimators));
  if (const json* e = r.optional("estimators")) c.estimators = parse_estimators(*e, r.path("estimators"));
  c.metrics.assign(std::begin(kAllDistances), std::end(kAllDistances));
  if (const json* m = r.optional("metrics")) c.metrics = parse_distances(*m, r.path("metrics"));
  if (const json* d = r.optional("delta")) c.delta = as_positive(*d, r.path("delta"));
  if (const json* m = r.optional("mean_mode")) c.mean_mode = parse_mean_mode(*m, r.path("mean_mode"));
  const bool has_truth = c.model->true_covariance().has_value();
  c.pilot_moments = !dynamic_cast<const GaussianNoiseHierarchy*>(c.model.get());
  if (const json* m = r.optional("moments")) {
    const std::string s = as_string(*m, r.path("moments"));
    if (s == "pilot") {
      c.pilot_moments = true;
    } else if (s == "closed_form") {
      closed_form_or_throw(*c.model, r.path("moments"));
      c.pilot_moments = false;
    } else {
      config_fail(r.path("moments"), "expected \"closed_form\" or \"pilot\"");
    }
  }
  if (const json* p = r.optional("pilot_size")) c.pilot_size = parse_pilot_size(*p, r.path("pilot_size"));
  if (c.pilot_moments && c.pilot_size == 0) config_fail("config", "pilot moments need 'pilot_size'");
  if (const json* s = r.optional("seed")) c.seed = as_seed(*s, r.path("seed"));
  c.reference.seed = c.seed;
  if (const json* t = r.optional("threads")) c.threads = static_cast<unsigned>(parse_count(*t, r.path("threads"), 0));
  if (const json* t = r.optional("record_timing")) c.record_timing = as_bool(*t, r.path("record_timing"));
  if (const json* ref = r.optional("reference")) {
    ObjectReader rr(*ref, r.path("reference"));
    if (const json* n = rr.optional("samples")) c.reference.samples = parse_count(*n, rr.path("samples"), 2);
    if (const json* n = rr.optional("surrogate_samples")) {
      c.reference.surrogate_samples = parse_count(*n, rr.path("surrogate_samples"), 0);
    }
    if (const json* s = rr.optional("seed")) c.reference.seed = as_seed(*s, rr.path("seed"));
    if (const json* p = rr.optional("cache")) c.reference.cache = resolve(base_dir, as_string(*p, rr.path("cache")));
    rr.finish();
    if (has_truth) config_fail(r.path("reference"), "the model's covariance is known; drop 'reference'");
  }
  if (const json* o = r.optional("output")) c.output = resolve(base_dir, as_string(*o, r.path("output")));
  r.finish();
  return c;
}

const CellSummary& BenchResult::cell(double budget, EstimatorKind kind) const {
  for (const CellSummary& c : cells) {
    if (c.budget == budget && c.estimator == kind) return c;
  }
  throw Error("no benchmark cell for the requested budget and estimator");
}

namespace {

struct Reference {
  SpdMatrix level0;
  double surrogate_bias_floor;
};

/// Streaming mean and scatter of a sample set (chunks merged pairwise).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(Index d) : mean_(Vector::Zero(d)), scatter_(Matrix::Zero(d, d)), raw_(Matrix::Zero(d, d)) {}

  void add(const Matrix& rows) {
    const Index k = rows.rows();
    if (k == 0) return;
    const Vector chunk_mean = rows.colwise().mean().transpose();
    const Matrix centred = rows.rowwise() - chunk_mean.transpose();
    const Vector delta = chunk_mean - mean_;
    const double n = static_cast<double>(n_), total = static_cast<double>(n_ + k);
    scatter_ += centred.transpose() * centred + (n * k / total) * delta * delta.transpose();
    mean_ += (k / total) * delta;
    raw_ += rows.transpose() * rows;
    n_ += k;
  }

  /// Raw second moment (KnownZero) or the 1/(n-1) covariance about the set's own mean.
  SymmetricMatrix covariance(MeanMode mode) const {
    if (mode == MeanMode::KnownZero) return SymmetricMatrix(raw_ / static_cast<double>(n_));
    return SymmetricMatrix(scatter_ / static_cast<double>(n_ - 1));
  }

 private:
  Index n_ = 0;
  Vector mean_;
  Matrix scatter_;
  Matrix raw_;
};

/// Reference covariance for models without a closed form. Draws
/// `surrogate_samples` (at least `samples`) events; level 0 is evaluated on
/// the first `samples`, the last level on all of them. With surrogate events
/// beyond the high-fidelity ones the reference is the log-Euclidean control
/// variate estimate Exp(Log S_0 + alpha (Log S_L - Log S_L')), where S_L' uses
/// the coupled prefix; otherwise it is S_0. Events are streamed in chunks, so
/// memory does not grow with the sample counts.
Reference compute_reference(const BenchConfig& c, const MomentSummary& moments) {
  const Model& model = *c.model;
  const std::size_t last = model.num_levels() - 1;
  if (const auto truth = model.true_covariance()) {
    double floor = 0.0;
    if (const auto* g = dynamic_cast<const GaussianNoiseHierarchy*>(&model)) {
      floor = std::pow(dist_frobenius(g->level_covariance(last), *truth), 2);
    }
    return Reference{*truth, floor};
  }

  const std::int64_t n0 = c.reference.samples;
  const std::int64_t n_all = std::max(n0, c.reference.surrogate_samples);
  const bool control_variate = last > 0 && n_all > n0;
  const double alpha = last > 0 ? moments.rho()[last] * moments.sigma()[0] / moments.sigma()[last] : 0.0;
  const MeanMode mode = c.mean_mode == MeanMode::KnownZero ? MeanMode::KnownZero : MeanMode::PerSetMean;

  json key;
  key["model"] = c.model_label;
  key["samples"] = n0;
  key["surrogate_samples"] = n_all;
  key["seed"] = c.reference.seed;
  key["mean_mode"] = mean_mode_name(mode);
  key["alpha"] = control_variate ? alpha : 0.0;
  if (c.reference.cache && std::filesystem::exists(*c.reference.cache)) {
    const json cached = detail::parse_json(read_text_file(*c.reference.cache), c.reference.cache->string());
    if (cached.is_object() && cached.value("key", json()) == key && cached.contains("reference") &&
        cached.contains("surrogate_bias_floor")) {
      return Reference{SpdMatrix(as_matrix(cached["reference"], "cache.reference")),
                       as_double(cached["surrogate_bias_floor"], "cache.surrogate_bias_floor")};
    }
  }

  const Index d = model.output_dim();
  MomentAccumulator hf(d), surrogate_prefix(d), surrogate_all(d);
  RandomStream rng = RandomStream::derive(c.reference.seed, {kReferenceStream});
  constexpr std::int64_t kChunk = 1 << 15;
  std::vector<Vector> latents;
  for (std::int64_t start = 0; start < n_all; start += kChunk) {
    const std::int64_t count = std::min(kChunk, n_all - start);
    const std::int64_t hf_count = std::clamp<std::int64_t>(n0 - start, 0, count);
    latents.clear();
    for (std::int64_t i = 0; i < count; ++i) latents.push_back(model.draw_latent(rng));
    Matrix y0(hf_count, d), y_last(count, d);
    parallel_for(static_cast<std::size_t>(count), c.threads, [&](std::size_t i) {
      const Index row = static_cast<Index>(i);
      if (last > 0) y_last.row(row) = model.evaluate(latents[i], last).transpose();
      if (row < hf_count) y0.row(row) = model.evaluate(latents[i], 0).transpose();
    });
    hf.add(y0);
    if (last > 0) {
      surrogate_prefix.add(y_last.topRows(hf_count));
      surrogate_all.add(y_last);
    }
  }

  const SymmetricMatrix s0 = hf.covariance(mode);
  SpdMatrix reference(s0);
  double floor = 0.0;
  if (last > 0) {
    const SymmetricMatrix prefix = surrogate_prefix.covariance(mode);
    floor = std::pow(dist_frobenius(prefix, s0), 2);
    if (control_variate) {
      const SymmetricMatrix log_sum = spd_log(SpdMatrix(s0)) +
                                      (spd_log(SpdMatrix(surrogate_all.covariance(mode))) - spd_log(SpdMatrix(prefix))) * alpha;
      reference = sym_exp(log_sum);
    }
  }

  if (c.reference.cache) {
    json out;
    out["key"] = key;
    out["reference"] = detail::matrix_json(reference.matrix());
    out["surrogate_bias_floor"] = floor;
    write_text_file(*c.reference.cache, out.dump(2) + "\n");
  }
  // Rebuilt from its entries, as a cache read does, so fresh and cached
  // references give bit-identical distances.
  return Reference{SpdMatrix(reference.matrix()), floor};
}

}  // namespace

BenchResult run_bench(const BenchConfig& c) {
  if (!c.model) throw ConfigError("config: missing model");
  const Model& model = *c.model;
  const CostModel& costs = model.costs();
  const std::size_t last = model.num_levels() - 1;

  const MomentSummary moments =
      c.pilot_moments ? run_pilot(model, c.pilot_size, c.mean_mode, c.seed).moments : closed_form_or_throw(model, "model");
  const Reference reference = compute_reference(c, moments);

  BenchResult result{moments,  costs, benefit_condition(moments, costs), predicted_speedup(moments, costs),
                     reference.level0, reference.surrogate_bias_floor, {}, {}, {}};

  std::vector<std::string> plan_errors(c.budgets.size());
  for (std::size_t b = 0; b < c.budgets.size(); ++b) {
    try {
      result.plans.push_back(optimal_allocation(moments, costs, c.budgets[b], Rounding::Floor));
    } catch (const Error& e) {
      result.plans.push_back(std::nullopt);
      plan_errors[b] = e.what();
    }
  }

  const std::size_t n_est = c.estimators.size();
  const std::size_t n_trials = static_cast<std::size_t>(c.trials);
  result.rows.resize(c.budgets.size() * n_est * n_trials);

  parallel_for(c.budgets.size() * n_trials, c.threads, [&](std::size_t task) {
    const std::size_t b = task / n_trials;
    const std::size_t t = task % n_trials;
    const double budget = c.budgets[b];
    std::optional<CoupledSampleHierarchy> mf;
    double mf_sampling_ms = 0.0;
    std::string mf_error;

    for (std::size_t e = 0; e < n_est; ++e) {
      const EstimatorKind kind = c.estimators[e];
      TrialResult& row = result.rows[(b * n_est + e) * n_trials + t];
      row.budget = budget;
      row.estimator = kind;
      row.trial = static_cast<int>(t);
      const auto start = std::chrono::steady_clock::now();
      try {
        SymmetricMatrix estimate = SymmetricMatrix::zero(model.output_dim());
        std::optional<SpdMatrix> spd;
        if (kind == EstimatorKind::HfOnly || kind == EstimatorKind::SurrogateOnly) {
          const std::size_t level = kind == EstimatorKind::HfOnly ? 0 : last;
          const std::int64_t n = affordable(budget, costs[level]);
          if (n < 1) throw AllocationError("budget cannot afford one sample at level " + std::to_string(level));
          RandomStream rng = RandomStream::derive(
              c.seed, {kBenchStream, b, t, static_cast<std::uint64_t>(kind == EstimatorKind::HfOnly ? 0 : 1)});
          const std::vector<std::size_t> lv{level};
          const std::vector<std::int64_t> nv{n};
          estimate = sample_covariance(sample_hierarchy(model, lv, nv, rng).level(0), c.mean_mode);
          row.realized_cost = static_cast<double>(n) * costs[level];
        } else {
          if (!result.plans[b]) throw AllocationError(plan_errors[b]);
          const AllocationPlan& plan = *result.plans[b];
          if (!mf && mf_error.empty()) {
            const auto s0 = std::chrono::steady_clock::now();
            try {
              const std::vector<std::size_t> levels = plan.active_levels();
              std::vector<std::int64_t> n;
              for (std::size_t l : levels) n.push_back(plan.n[l]);
              RandomStream rng = RandomStream::derive(c.seed, {kBenchStream, b, t, 2});
              mf = sample_hierarchy(model, levels, n, rng);
            } catch (const Error& err) {
              mf_error = err.what();
            }
            mf_sampling_ms = elapsed_ms(s0);
          }
          if (!mf) throw Error(mf_error);
          const std::vector<double> alphas = plan.active_alphas();
          if (kind == EstimatorKind::Emf) {
            estimate = emf_estimate(*mf, alphas, c.mean_mode);
          } else if (kind == EstimatorKind::TruncatedEmf) {
            spd = truncated_emf_estimate(*mf, alphas, c.mean_mode, c.delta);
          } else {
            spd = lemf_estimate(*mf, alphas, c.mean_mode);
          }
          if (spd) estimate = spd->symmetric();
          row.realized_cost = plan.realized_cost;
        }
        const Distances d = distances_to(estimate, spd ? &*spd : nullptr, result.reference);
        row.d_frob = d.frob;
        row.d_logE = d.log_e;
        row.d_aff = d.aff;
        row.lambda_min = d.lambda_min;
      } catch (const Error& err) {
        row.failed = true;
        row.error = err.what();
        row.d_frob = row.d_logE = row.d_aff = row.lambda_min = kNaN;
      }
      row.wall_ms = c.record_timing ? elapsed_ms(start) + (is_multifidelity(kind) ? mf_sampling_ms : 0.0) : 0.0;
    }
  });

  auto wanted = [&](DistanceKind k) { return std::find(c.metrics.begin(), c.metrics.end(), k) != c.metrics.end(); };
  for (std::size_t b = 0; b < c.budgets.size(); ++b) {
    for (std::size_t e = 0; e < n_est; ++e) {
      CellSummary cell;
      cell.budget = c.budgets[b];
      cell.estimator = c.estimators[e];
      cell.trials = c.trials;
      double sf = 0, sl = 0, sa = 0, cost = 0;
      cell.min_frob = cell.min_logE = cell.min_aff = kInf;
      cell.max_frob = cell.max_logE = cell.max_aff = -kInf;
      int ok = 0;
      for (std::size_t t = 0; t < n_trials; ++t) {
        const TrialResult& row = result.rows[(b * n_est + e) * n_trials + t];
        if (row.failed) {
          ++cell.failed;
          continue;
        }
        ++ok;
        if (row.indefinite()) ++cell.indefinite;
        sf += row.d_frob * row.d_frob;
        sl += row.d_logE * row.d_logE;
        sa += row.d_aff * row.d_aff;
        cost += row.realized_cost;
        cell.min_frob = std::min(cell.min_frob, row.d_frob);
        cell.max_frob = std::max(cell.max_frob, row.d_frob);
        cell.min_logE = std::min(cell.min_logE, row.d_logE);
        cell.max_logE = std::max(cell.max_logE, row.d_logE);
        cell.min_aff = std::min(cell.min_aff, row.d_aff);
        cell.max_aff = std::max(cell.max_aff, row.d_aff);
      }
      if (ok == 0) {
        cell.mse_frob = cell.mse_logE = cell.mse_aff = kNaN;
        cell.min_frob = cell.max_frob = cell.min_logE = cell.max_logE = cell.min_aff = cell.max_aff = kNaN;
        cell.realized_cost = kNaN;
      } else {
        cell.mse_frob = sf / ok;
        cell.mse_logE = sl / ok;
        cell.mse_aff = sa / ok;
        cell.realized_cost = cost / ok;
      }
      if (!wanted(DistanceKind::Frobenius)) cell.mse_frob = cell.min_frob = cell.max_frob = kNaN;
      if (!wanted(DistanceKind::LogEuclidean)) cell.mse_logE = cell.min_logE = cell.max_logE = kNaN;
      if (!wanted(DistanceKind::AffineInvariant)) cell.mse_aff = cell.min_aff = cell.max_aff = kNaN;
      result.cells.push_back(cell);
    }
  }
  // Unrequested metrics are reported as nan in the rows as well.
  for (TrialResult& row : result.rows) {
    if (!wanted(DistanceKind::Frobenius)) row.d_frob = kNaN;
    if (!wanted(DistanceKind::LogEuclidean)) row.d_logE = kNaN;
    if (!wanted(DistanceKind::AffineInvariant)) row.d_aff = kNaN;
  }
  return result;
}

std::string bench_rows_csv(const BenchResult& result) {
  std::string out = "budget,estimator,trial,d_frob,d_logE,d_aff,lambda_min,wall_ms\n";
  for (const TrialResult& r : result.rows) {
    out += format_real(r.budget);
    out += ',';
    out += estimator_name(r.estimator);
    out += ',' + std::to_string(r.trial);
    for (double v : {r.d_frob, r.d_logE, r.d_aff, r.lambda_min, r.wall_ms}) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

std::string bench_summary_csv(const BenchResult& result) {
  std::string out =
      "budget,estimator,trials,failed,indefinite,indefinite_frac,mse_frob,mse_logE,mse_aff,"
      "min_frob,max_frob,min_logE,max_logE,min_aff,max_aff,realized_cost\n";
  for (const CellSummary& c : result.cells) {
    out += format_real(c.budget);
    out += ',';
    out += estimator_name(c.estimator);
    out += ',' + std::to_string(c.trials) + ',' + std::to_string(c.failed) + ',' + std::to_string(c.indefinite);
    const int ok = c.trials - c.failed;
    const double frac = ok > 0 ? static_cast<double>(c.indefinite) / ok : kNaN;
    for (double v : {frac, c.mse_frob, c.mse_logE, c.mse_aff, c.min_frob, c.max_frob, c.min_logE, c.max_logE,
                     c.min_aff, c.max_aff, c.realized_cost}) {
      out += ',' + format_real(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// metric learning

std::vector<GaussianNoiseHierarchy> two_class_preset() {
  constexpr Index d = 9;
  std::vector<GaussianNoiseHierarchy> classes;
  for (int c = 0; c < 2; ++c) {
    // Correlated, anisotropic class covariances: scaled AR(1) structure.
    const double phi = c == 0 ? 0.7 : 0.4;
    Matrix sigma(d, d);
    Vector scale(d);
    for (Index i = 0; i < d; ++i) scale(i) = std::pow(10.0, (c == 0 ? 0.5 : -0.5) * (i / (d - 1.0)) - 0.25 * (i % 3));
    for (Index i = 0; i < d; ++i)
      for (Index k = 0; k < d; ++k) sigma(i, k) = scale(i) * scale(k) * std::pow(phi, std::abs(i - k));
    Vector mean = Vector::Zero(d);
    if (c == 1) mean(0) = 1.5;
    const SymmetricMatrix noise = SymmetricMatrix::identity(d) * 0.08;
    classes.emplace_back(SpdMatrix(sigma), std::vector<SymmetricMatrix>{noise}, CostModel({1.0, 1.0 / 16.0}), mean);
  }
  return classes;
}

MetricConfig parse_metric_config(const std::string& config, const std::filesystem::path& base_dir) {
  const json j = detail::parse_json(config, "config");
  ObjectReader r(j, "config");
  MetricConfig c;
  {
    ObjectReader mr(r.required("model"), r.path("model"));
    const std::string kind = as_string(mr.required("kind"), mr.path("kind"));
    if (kind != "two_class_gaussian") config_fail(mr.path("kind"), "the metric pipeline needs \"two_class_gaussian\"");
    if (const json* p = mr.optional("preset")) {
      const std::string name = as_string(*p, mr.path("preset"));
      if (name != "synthetic") config_fail(mr.path("preset"), "unknown preset \"" + name + "\" (synthetic)");
      c.classes = two_class_preset();
    } else {
      const json& cls = mr.required("classes");
      if (!cls.is_array() || cls.size() != 2) config_fail(mr.path("classes"), "expected exactly two classes");
      for (std::size_t i = 0; i < 2; ++i) {
        ObjectReader cr(cls[i], mr.path("classes") + "[" + std::to_string(i) + "]");
        c.classes.push_back(parse_gaussian_body(cr));
        cr.finish();
        if (c.classes.back().num_levels() != 2) config_fail(cr.path("gammas"), "expected exactly one surrogate");
      }
      if (c.classes[0].output_dim() != c.classes[1].output_dim()) {
        config_fail(mr.path("classes"), "classes must have the same dimension");
      }
    }
    mr.finish();
  }
  if (const json* t = r.optional("trials")) c.trials = static_cast<int>(parse_count(*t, r.path("trials"), 1));
  if (const json* n = r.optional("n_hf")) c.n_hf = parse_count(*n, r.path("n_hf"), 2);
  if (const json* t = r.optional("t")) {
    c.t = as_double(*t, r.path("t"));
    if (!(c.t >= 0.0 && c.t <= 1.0)) config_fail(r.path("t"), "must lie in [0, 1]");
  }
  if (const json* n = r.optional("test_points")) c.test_points = parse_count(*n, r.path("test_points"), 1);
  c.estimators = {EstimatorKind::HfOnly, EstimatorKind::Emf, EstimatorKind::TruncatedEmf, EstimatorKind::Lemf};
  if (const json* e = r.optional("estimators")) c.estimators = parse_estimators(*e, r.path("estimators"));
  c.metrics.assign(std::begin(kAllDistances), std::end(kAllDistances));
  if (const json* m = r.optional("metrics")) c.metrics = parse_distances(*m, r.path("metrics"));
  if (const json* m = r.optional("mean_mode")) c.mean_mode = parse_mean_mode(*m, r.path("mean_mode"));
  if (const json* p = r.optional("pilot_size")) c.pilot_size = parse_pilot_size(*p, r.path("pilot_size"));
  if (const json* d = r.optional("delta")) c.delta = as_positive(*d, r.path("delta"));
  if (const json* s = r.optional("seed")) c.seed = as_seed(*s, r.path("seed"));
  if (const json* t = r.optional("threads")) c.threads = static_cast<unsigned>(parse_count(*t, r.path("threads"), 0));
  if (const json* t = r.optional("record_timing")) c.record_timing = as_bool(*t, r.path("record_timing"));
  if (const json* o = r.optional("output")) c.output = resolve(base_dir, as_string(*o, r.path("output")));
  r.finish();
  return c;
}

const MetricSummary& MetricResult::summary_for(EstimatorKind kind) const {
  for (const MetricSummary& s : summary) {
    if (s.estimator == kind) return s;
  }
  throw Error("no metric summary for the requested estimator");
}

namespace {

/// Per-class planning inputs shared by every trial.
struct ClassPlan {
  double alpha = 0.0;
  std::int64_t n0 = 0, n1 = 0;
  double budget = 0.0;
  Vector pilot_mean;
};

ClassPlan plan_class(const GaussianNoiseHierarchy& model, const MetricConfig& c, std::uint64_t class_index) {
  const std::vector<std::int64_t> n{c.pilot_size, c.pilot_size};
  const std::vector<std::size_t> levels{0, 1};
  RandomStream rng = RandomStream::derive(c.seed, {kMetricPilotStream, class_index});
  const CoupledSampleHierarchy pilot = sample_hierarchy(model, levels, n, rng);
  const MomentSummary m = estimate_moments(pilot, c.mean_mode);
  ClassPlan plan;
  plan.alpha = optimal_coefficients(m)[0];
  // The optimal ratio n_1 / n_0 does not depend on the budget.
  const AllocationPlan ratio = optimal_allocation(m, model.costs(), model.costs()[0], Rounding::None);
  plan.n0 = c.n_hf;
  plan.n1 = std::max(plan.n0, static_cast<std::int64_t>(std::floor(c.n_hf * ratio.n_real[1] / ratio.n_real[0])));
  plan.budget = plan.n0 * model.costs()[0] + plan.n1 * model.costs()[1];
  plan.pilot_mean = pilot.level(0).colwise().mean().transpose();
  return plan;
}

}  // namespace

MetricResult run_metric(const MetricConfig& c) {
  if (c.classes.size() != 2) throw ConfigError("config: the metric pipeline needs two classes");
  const Index d = c.classes[0].output_dim();

  // Reference metric from the exact class moments.
  const Vector true_gap = c.classes[0].mean() - c.classes[1].mean();
  const SpdMatrix s0 = similarity_matrix(c.classes[0].sigma(), c.classes[1].sigma());
  MetricResult result{gmml_metric(s0, dissimilarity_matrix(s0, true_gap), c.t, "reference"), {}, {}, {}, {}};

  std::vector<ClassPlan> plans;
  for (std::uint64_t k = 0; k < 2; ++k) {
    plans.push_back(plan_class(c.classes[k], c, k));
    result.n_mf.push_back(plans.back().n0);
    result.n_mf.push_back(plans.back().n1);
    result.class_budgets.push_back(plans.back().budget);
  }
  const Vector mean_gap = plans[0].pilot_mean - plans[1].pilot_mean;

  // Test points: an equal mixture of the two high-fidelity class distributions.
  std::vector<Vector> test_points;
  {
    RandomStream rng = RandomStream::derive(c.seed, {kTestPointStream});
    for (std::int64_t i = 0; i < c.test_points; ++i) {
      const GaussianNoiseHierarchy& cls = c.classes[static_cast<std::size_t>(i % 2)];
      test_points.push_back(cls.evaluate(cls.draw_latent(rng), 0));
    }
  }

  const std::size_t n_est = c.estimators.size();
  const std::size_t n_trials = static_cast<std::size_t>(c.trials);
  result.rows.resize(n_trials * n_est);

  parallel_for(n_trials, c.threads, [&](std::size_t t) {
    std::vector<std::optional<CoupledSampleHierarchy>> mf(2);
    for (std::size_t e = 0; e < n_est; ++e) {
      const EstimatorKind kind = c.estimators[e];
      MetricTrial& row = result.rows[t * n_est + e];
      row.trial = static_cast<int>(t);
      row.estimator = kind;
      row.mre = row.d_frob = row.d_logE = row.d_aff = row.lambda_min = kNaN;
      const auto start = std::chrono::steady_clock::now();
      try {
        std::vector<SpdMatrix> covs;
        double lambda_min = kInf;
        bool invalid = false;
        for (std::uint64_t k = 0; k < 2; ++k) {
          const GaussianNoiseHierarchy& model = c.classes[k];
          const ClassPlan& plan = plans[k];
          SymmetricMatrix estimate = SymmetricMatrix::zero(d);
          std::optional<SpdMatrix> spd;
          if (kind == EstimatorKind::HfOnly || kind == EstimatorKind::SurrogateOnly) {
            const std::size_t level = kind == EstimatorKind::HfOnly ? 0 : 1;
            const std::vector<std::size_t> lv{level};
            const std::vector<std::int64_t> nv{affordable(plan.budget, model.costs()[level])};
            RandomStream rng = RandomStream::derive(c.seed, {kMetricStream, t, k, level});
            estimate = sample_covariance(sample_hierarchy(model, lv, nv, rng).level(0), c.mean_mode);
          } else {
            if (!mf[k]) {
              const std::vector<std::size_t> lv{0, 1};
              const std::vector<std::int64_t> nv{plan.n0, plan.n1};
              RandomStream rng = RandomStream::derive(c.seed, {kMetricStream, t, k, 2});
              mf[k] = sample_hierarchy(model, lv, nv, rng);
            }
            const std::vector<double> alpha{plan.alpha};
            if (kind == EstimatorKind::Emf) {
              estimate = emf_estimate(*mf[k], alpha, c.mean_mode);
            } else if (kind == EstimatorKind::TruncatedEmf) {
              spd = truncated_emf_estimate(*mf[k], alpha, c.mean_mode, c.delta);
            } else {
              spd = lemf_estimate(*mf[k], alpha, c.mean_mode);
            }
          }
          if (!spd) {
            EigenDecomposition eig = sym_eig(estimate);
            const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
            if (lo > 0.0) {
              spd = SpdMatrix::from_spectrum(std::move(eig));
            } else {
              lambda_min = std::min(lambda_min, lo);
              invalid = true;
              continue;
            }
          }
          lambda_min = std::min(lambda_min, spd->min_eigenvalue());
          covs.push_back(*spd);
        }
        row.lambda_min = lambda_min;
        if (invalid) {
          // An indefinite class covariance cannot define a metric.
          row.status = "invalid_metric";
        } else {
          const SpdMatrix s = similarity_matrix(covs[0], covs[1]);
          const LearnedMetric metric =
              gmml_metric(s, dissimilarity_matrix(s, mean_gap), c.t, std::string(estimator_name(kind)));
          row.mre = mean_relative_error(metric, result.reference, test_points).mre;
          row.d_frob = dist_frobenius(metric.A, result.reference.A);
          row.d_logE = dist_log_euclidean(metric.A, result.reference.A);
          row.d_aff = dist_affine_invariant(metric.A, result.reference.A);
          row.status = "ok";
        }
      } catch (const Error& err) {
        row.status = "error";
        row.error = err.what();
      }
      row.wall_ms = c.record_timing ? elapsed_ms(start) : 0.0;
    }
  });

  auto wanted = [&](DistanceKind k) { return std::find(c.metrics.begin(), c.metrics.end(), k) != c.metrics.end(); };
  for (MetricTrial& row : result.rows) {
    if (!wanted(DistanceKind::Frobenius)) row.d_frob = kNaN;
    if (!wanted(DistanceKind::LogEuclidean)) row.d_logE = kNaN;
    if (!wanted(DistanceKind::AffineInvariant)) row.d_aff = kNaN;
  }
  for (std::size_t e = 0; e < n_est; ++e) {
    MetricSummary s;
    s.estimator = c.estimators[e];
    s.trials = c.trials;
    double mre = 0, sf = 0, sl = 0, sa = 0;
    for (std::size_t t = 0; t < n_trials; ++t) {
      const MetricTrial& row = result.rows[t * n_est + e];
      if (row.status == "invalid_metric") {
        ++s.invalid_metric;
      } else if (row.status == "error") {
        ++s.failed;
      } else {
        ++s.valid;
        mre += row.mre;
        sf += row.d_frob * row.d_frob;
        sl += row.d_logE * row.d_logE;
        sa += row.d_aff * row.d_aff;
      }
    }
    const double v = s.valid > 0 ? s.valid : kNaN;
    s.mean_mre = mre / v;
    s.mse_frob = sf / v;
    s.mse_logE = sl / v;
    s.mse_aff = sa / v;
    result.summary.push_back(s);
  }
  return result;
}

std::string metric_rows_csv(const MetricResult& result) {
  std::string out = "trial,estimator,status,mre,d_frob,d_logE,d_aff,lambda_min,wall_ms\n";
  for (const MetricTrial& r : result.rows) {
    out += std::to_string(r.trial) + ',';
    out += estimator_name(r.estimator);
    out += ',' + r.status;
    for (double v : {r.mre, r.d_frob, r.d_logE, r.d_aff, r.lambda_min, r.wall_ms}) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

std::string metric_summary_csv(const MetricResult& result) {
  std::string out = "estimator,trials,valid,invalid_metric,failed,mean_mre,mse_frob,mse_logE,mse_aff\n";
  for (const MetricSummary& s : result.summary) {
    out += estimator_name(s.estimator);
    out += ',' + std::to_string(s.trials) + ',' + std::to_string(s.valid) + ',' + std::to_string(s.invalid_metric) +
           ',' + std::to_string(s.failed);
    for (double v : {s.mean_mre, s.mse_frob, s.mse_logE, s.mse_aff}) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

namespace {

/// `metric` with explicit class covariances: emits the learned matrix.
std::string metric_from_covariances(const json& j) {
  ObjectReader r(j, "config");
  const json& covs = r.required("class_covariances");
  if (!covs.is_array() || covs.size() != 2) config_fail(r.path("class_covariances"), "expected two matrices");
  std::vector<SpdMatrix> spd;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string p = r.path("class_covariances") + "[" + std::to_string(i) + "]";
    const SymmetricMatrix m(as_matrix(covs[i], p));
    const double lo = smallest_eigenvalue(m);
    if (!(lo > 0.0)) {
      std::ostringstream os;
      os.precision(17);
      os << p << ": class covariance is not positive definite (smallest eigenvalue " << lo
         << "); it cannot define a metric";
      throw DefinitenessError(os.str(), lo);
    }
    spd.emplace_back(m);
  }
  if (spd[0].dim() != spd[1].dim()) config_fail(r.path("class_covariances"), "dimensions differ");
  const Vector gap = as_vector(r.required("mean_gap"), r.path("mean_gap"));
  if (gap.size() != spd[0].dim()) config_fail(r.path("mean_gap"), "dimension differs from the covariances");
  double t = kDefaultGmmlStep;
  if (const json* tj = r.optional("t")) {
    t = as_double(*tj, r.path("t"));
    if (!(t >= 0.0 && t <= 1.0)) config_fail(r.path("t"), "must lie in [0, 1]");
  }
  r.optional("output");
  r.finish();

  const SpdMatrix s = similarity_matrix(spd[0], spd[1]);
  const SpdMatrix dis = dissimilarity_matrix(s, gap);
  const LearnedMetric metric = gmml_metric(s, dis, t, "input");
  json out;
  out["t"] = t;
  out["dim"] = s.dim();
  out["A"] = detail::matrix_json(metric.A.matrix());
  out["lambda_min"] = metric.A.min_eigenvalue();
  out["similarity"] = detail::matrix_json(s.matrix());
  out["dissimilarity"] = detail::matrix_json(dis.matrix());
  return out.dump(2) + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------

int run_command(std::string_view command, const std::filesystem::path& config_path, const RunOptions& options,
                std::ostream& out, std::ostream& err) {
  try {
    const std::string text = read_text_file(config_path);
    const std::filesystem::path base = config_path.parent_path();
    std::optional<std::filesystem::path> config_output;
    {
      const json j = detail::parse_json(text, config_path.string());
      if (j.is_object() && j.contains("output")) {
        config_output = resolve(base, as_string(j["output"], "config.output"));
      }
    }
    const std::optional<std::filesystem::path> target = options.out ? options.out : config_output;

    if (command == "pilot") {
      write_output(cmd_pilot(text, base, options), target, out);
    } else if (command == "plan") {
      write_output(cmd_plan(text, base, options), target, out);
    } else if (command == "estimate") {
      write_output(cmd_estimate(text, base, options), target, out);
    } else if (command == "bench") {
      BenchConfig c = parse_bench_config(text, base);
      if (options.seed) {
        if (c.reference.seed == c.seed) c.reference.seed = *options.seed;
        c.seed = *options.seed;
      }
      const BenchResult result = run_bench(c);
      write_output(bench_rows_csv(result), target, out);
      if (target) write_text_file(summary_path(*target), bench_summary_csv(result));
      int failed = 0;
      for (const TrialResult& row : result.rows) {
        if (!row.failed) continue;
        if (++failed <= 5) {
          err << "mfcov: budget " << format_real(row.budget) << ", " << estimator_name(row.estimator) << ", trial "
              << row.trial << " failed: " << row.error << "\n";
        }
      }
      if (failed > 0) err << "mfcov: " << failed << " trial(s) failed; see nan rows\n";
    } else if (command == "metric") {
      const json j = detail::parse_json(text, config_path.string());
      if (j.is_object() && j.contains("class_covariances")) {
        write_output(metric_from_covariances(j), target, out);
      } else {
        MetricConfig c = parse_metric_config(text, base);
        if (options.seed) c.seed = *options.seed;
        const MetricResult result = run_metric(c);
        write_output(metric_rows_csv(result), target, out);
        if (target) write_text_file(summary_path(*target), metric_summary_csv(result));
      }
    } else {
      err << "mfcov: unknown command '" << command << "' (pilot, plan, estimate, bench, metric)\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "mfcov: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "mfcov: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "mfcov: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "mfcov: error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "mfcov: error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace mfcov

#pragma once

// Experiment harness behind the mfcov command-line tool: configuration
// parsing, budget-sweep benchmarks and the metric-learning pipeline.
//
// Configurations are single JSON documents; unknown keys are rejected. See
// the README for the schema of each command.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfcov/estimators.hpp"
#include "mfcov/metric.hpp"
#include "mfcov/models.hpp"
#include "mfcov/moments.hpp"

namespace mfcov {

enum class EstimatorKind { HfOnly, SurrogateOnly, Emf, TruncatedEmf, Lemf };
enum class DistanceKind { Frobenius, LogEuclidean, AffineInvariant };

std::string_view estimator_name(EstimatorKind kind);
/// Throws ConfigError for unknown names.
EstimatorKind parse_estimator(std::string_view name);

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitIo = 4 };

struct RunOptions {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  bool verify_frechet = false;
};

/// Runs one CLI command ("pilot", "plan", "estimate", "bench", "metric") on a
/// config file. Results go to options.out (or the config's output path, or
/// `out`); errors are reported on `err`. Returns an ExitCode.
int run_command(std::string_view command, const std::filesystem::path& config_path, const RunOptions& options,
                std::ostream& out, std::ostream& err);

// Individual commands on already-loaded config text. `base_dir` resolves
// relative paths inside the config. They throw library errors.
std::string cmd_pilot(const std::string& config, const std::filesystem::path& base_dir,
                      const RunOptions& options = {});
std::string cmd_plan(const std::string& config, const std::filesystem::path& base_dir,
                     const RunOptions& options = {});
std::string cmd_estimate(const std::string& config, const std::filesystem::path& base_dir,
                         const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Budget sweep

/// Reference covariance for models without a closed form: a high-fidelity
/// sample covariance over `samples` events, corrected by a log-Euclidean
/// control variate over `surrogate_samples` surrogate events when that is
/// larger. Covariances are centred by each set's own mean unless the bench
/// uses known_zero.
struct ReferenceSpec {
  std::int64_t samples = 100000;
  std::int64_t surrogate_samples = 0;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> cache;
};

struct BenchConfig {
  std::shared_ptr<const Model> model;
  std::string model_label;
  std::vector<double> budgets;
  int trials = 100;
  std::vector<EstimatorKind> estimators;
  std::vector<DistanceKind> metrics;
  double delta = kDefaultTruncationDelta;
  MeanMode mean_mode = MeanMode::SampleMean;
  bool pilot_moments = false;  ///< closed-form moments when false
  std::int64_t pilot_size = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;  ///< 0 = hardware concurrency
  bool record_timing = true;
  ReferenceSpec reference;
  std::optional<std::filesystem::path> output;
};

BenchConfig parse_bench_config(const std::string& config, const std::filesystem::path& base_dir);

struct TrialResult {
  double budget = 0.0;
  EstimatorKind estimator = EstimatorKind::HfOnly;
  int trial = 0;
  double d_frob = 0.0;
  double d_logE = 0.0;
  double d_aff = 0.0;
  double lambda_min = 0.0;
  double wall_ms = 0.0;
  double realized_cost = 0.0;
  bool failed = false;
  std::string error;

  bool indefinite() const { return !failed && !(lambda_min > 0.0); }
};

struct CellSummary {
  double budget = 0.0;
  EstimatorKind estimator = EstimatorKind::HfOnly;
  int trials = 0;
  int failed = 0;
  int indefinite = 0;
  double mse_frob = 0.0, mse_logE = 0.0, mse_aff = 0.0;
  double min_frob = 0.0, max_frob = 0.0;
  double min_logE = 0.0, max_logE = 0.0;
  double min_aff = 0.0, max_aff = 0.0;
  double realized_cost = 0.0;
};

struct BenchResult {
  MomentSummary moments;
  CostModel costs;
  BenefitCheck benefit;
  double predicted_speedup = 0.0;
  SpdMatrix reference;
  /// ||Cov(y_L) - Cov(y_0)||_F^2, the squared bias of the surrogate-only estimator.
  double surrogate_bias_floor = 0.0;
  /// Per budget; empty optional where the allocation failed.
  std::vector<std::optional<AllocationPlan>> plans;
  std::vector<TrialResult> rows;  ///< ordered by (budget, estimator, trial)
  std::vector<CellSummary> cells;

  const CellSummary& cell(double budget, EstimatorKind kind) const;
};

BenchResult run_bench(const BenchConfig& config);
/// `budget,estimator,trial,d_frob,d_logE,d_aff,lambda_min,wall_ms`
std::string bench_rows_csv(const BenchResult& result);
std::string bench_summary_csv(const BenchResult& result);

// ---------------------------------------------------------------------------
// Metric-learning pipeline

struct MetricConfig {
  /// Two classes; level 0 is high fidelity, level 1 the surrogate.
  std::vector<GaussianNoiseHierarchy> classes;
  int trials = 50;
  std::int64_t n_hf = 15;
  double t = kDefaultGmmlStep;
  std::int64_t test_points = 5000;
  std::vector<EstimatorKind> estimators;
  std::vector<DistanceKind> metrics;
  MeanMode mean_mode = MeanMode::SampleMean;
  std::int64_t pilot_size = 2000;
  double delta = kDefaultTruncationDelta;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool record_timing = true;
  std::optional<std::filesystem::path> output;
};

MetricConfig parse_metric_config(const std::string& config, const std::filesystem::path& base_dir);

/// The synthetic two-class source: classes differ in covariance and in the
/// mean of coordinate 0; surrogates add isotropic noise at 1/16 the cost.
std::vector<GaussianNoiseHierarchy> two_class_preset();

struct MetricTrial {
  int trial = 0;
  EstimatorKind estimator = EstimatorKind::HfOnly;
  std::string status;  ///< "ok", "invalid_metric" or "error"
  double mre = 0.0;
  double d_frob = 0.0, d_logE = 0.0, d_aff = 0.0;
  double lambda_min = 0.0;  ///< smallest eigenvalue over both class covariances
  double wall_ms = 0.0;
  std::string error;
};

struct MetricSummary {
  EstimatorKind estimator = EstimatorKind::HfOnly;
  int trials = 0;
  int valid = 0;
  int invalid_metric = 0;
  int failed = 0;
  double mean_mre = 0.0;
  double mse_frob = 0.0, mse_logE = 0.0, mse_aff = 0.0;
};

struct MetricResult {
  LearnedMetric reference;
  std::vector<std::int64_t> n_mf;  ///< (n_0, n_1) per class, from the planner
  std::vector<double> class_budgets;
  std::vector<MetricTrial> rows;  ///< ordered by (trial, estimator)
  std::vector<MetricSummary> summary;

  const MetricSummary& summary_for(EstimatorKind kind) const;
};

MetricResult run_metric(const MetricConfig& config);
/// `trial,estimator,status,mre,d_frob,d_logE,d_aff,lambda_min,wall_ms`
std::string metric_rows_csv(const MetricResult& result);
std::string metric_summary_csv(const MetricResult& result);

}  // namespace mfcov

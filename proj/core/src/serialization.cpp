#include "mfcov/serialization.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_support.hpp"

namespace mfcov {

using detail::json;
using detail::ObjectReader;

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

std::string moments_to_json(const MomentSummary& m, const std::optional<PilotInfo>& pilot) {
  json j;
  j["sigma"] = m.sigma();
  j["rho"] = m.rho();
  j["monotone_fidelity"] = m.monotone_fidelity();
  if (pilot) {
    j["pilot_size"] = pilot->pilot_size;
    j["pilot_cost"] = pilot->pilot_cost;
  }
  return j.dump(2) + "\n";
}

namespace detail {

MomentSummary moments_from(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const std::vector<double> sigma = as_doubles(r.required("sigma"), r.path("sigma"));
  const std::vector<double> rho = as_doubles(r.required("rho"), r.path("rho"));
  r.optional("monotone_fidelity");
  r.optional("pilot_size");
  r.optional("pilot_cost");
  r.finish();
  if (sigma.empty()) config_fail(r.path("sigma"), "needs at least one level");
  if (rho.size() != sigma.size() + 1) {
    config_fail(r.path("rho"), "expected " + std::to_string(sigma.size() + 1) +
                                   " entries (rho_0 = 1, rho_1..rho_L, rho_{L+1} = 0)");
  }
  if (rho.front() != 1.0 || rho.back() != 0.0) config_fail(r.path("rho"), "must start with 1 and end with 0");
  try {
    return MomentSummary(sigma, std::vector<double>(rho.begin() + 1, rho.end() - 1));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    config_fail(path, e.what());
  }
}

AllocationPlan plan_from(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AllocationPlan plan;
  plan.alphas = as_doubles(r.required("alphas"), r.path("alphas"));
  plan.n_real = as_doubles(r.required("n_real"), r.path("n_real"));
  plan.n = as_ints(r.required("n"), r.path("n"));
  plan.realized_cost = as_double(r.required("realized_cost"), r.path("realized_cost"));
  plan.predicted_mse = as_double(r.required("predicted_mse"), r.path("predicted_mse"));
  // Report fields written by the plan command.
  for (const char* extra : {"budget", "costs", "rounding", "moments", "benefit_condition", "predicted_speedup",
                            "first_order_mse", "active_levels"}) {
    r.optional(extra);
  }
  r.finish();
  if (plan.n.empty() || plan.n.size() != plan.n_real.size() || plan.alphas.size() + 1 != plan.n.size()) {
    config_fail(path, "alphas, n_real and n have inconsistent lengths");
  }
  for (std::int64_t n : plan.n) {
    if (n < 0) config_fail(r.path("n"), "sample counts must be nonnegative");
  }
  if (plan.n[0] < 1) config_fail(r.path("n"), "level 0 needs at least one sample");
  return plan;
}

json plan_json(const AllocationPlan& plan) {
  json j;
  j["alphas"] = plan.alphas;
  j["n_real"] = plan.n_real;
  j["n"] = plan.n;
  j["realized_cost"] = plan.realized_cost;
  j["predicted_mse"] = plan.predicted_mse;
  return j;
}

}  // namespace detail

MomentSummary moments_from_json(const std::string& text) {
  return detail::moments_from(detail::parse_json(text, "moments"), "moments");
}

std::string plan_to_json(const AllocationPlan& plan) { return detail::plan_json(plan).dump(2) + "\n"; }

AllocationPlan plan_from_json(const std::string& text) {
  return detail::plan_from(detail::parse_json(text, "plan"), "plan");
}

std::string covariance_to_json(const SymmetricMatrix& m) {
  json j;
  j["dim"] = m.dim();
  j["matrix"] = detail::matrix_json(m.matrix());
  return j.dump(2) + "\n";
}

SymmetricMatrix covariance_from_json(const std::string& text) {
  const json j = detail::parse_json(text, "covariance");
  if (j.is_array()) return SymmetricMatrix(detail::as_matrix(j, "covariance"));
  ObjectReader r(j, "covariance");
  const Matrix m = detail::as_matrix(r.required("matrix"), r.path("matrix"));
  if (const json* dim = r.optional("dim"); dim && detail::as_int(*dim, r.path("dim")) != m.rows()) {
    detail::config_fail(r.path("dim"), "does not match the matrix size");
  }
  // Extra diagnostics written by the estimate command are allowed.
  for (const char* extra : {"estimator", "lambda_min", "spd", "n", "alphas", "realized_cost", "mean_mode",
                            "frechet_check", "delta", "levels"}) {
    r.optional(extra);
  }
  r.finish();
  return SymmetricMatrix(m);
}

namespace {

std::string samples_csv(const SampleMatrix& s) {
  std::string out;
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index k = 0; k < s.cols(); ++k) {
      if (k) out += ',';
      out += format_real(s(i, k));
    }
    out += '\n';
  }
  return out;
}

SampleMatrix parse_samples_csv(const std::string& text, Index dim, const std::string& origin) {
  std::vector<double> values;
  Index rows = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Index cols = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      while (p < end && *p == ' ') ++p;
      double v = 0.0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || !std::isfinite(v)) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected a finite number");
      }
      values.push_back(v);
      ++cols;
      p = next;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',') throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected ','");
      ++p;
    }
    if (cols != dim) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " columns, found " + std::to_string(cols));
    }
    ++rows;
  }
  SampleMatrix s(rows, dim);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < dim; ++k) s(i, k) = values[static_cast<std::size_t>(i * dim + k)];
  return s;
}

}  // namespace

std::filesystem::path write_sample_set(const std::filesystem::path& directory, const CoupledSampleHierarchy& h,
                                       const CostModel& costs) {
  if (costs.num_levels() != h.num_levels()) throw DimensionError("write_sample_set: need one cost per level");
  json manifest;
  manifest["dim"] = h.dim();
  manifest["levels"] = json::array();
  for (std::size_t l = 0; l < h.num_levels(); ++l) {
    const std::string file = "level_" + std::to_string(l) + ".csv";
    write_text_file(directory / file, samples_csv(h.level(l)));
    json level;
    level["file"] = file;
    level["cost"] = costs[l];
    level["n"] = h.size(l);
    level["coupled_prefix"] = l == 0 ? 0 : h.size(l - 1);
    manifest["levels"].push_back(level);
  }
  const std::filesystem::path path = directory / "manifest.json";
  write_text_file(path, manifest.dump(2) + "\n");
  return path;
}

SampleSet read_sample_set(const std::filesystem::path& manifest_path) {
  const json j = detail::parse_json(read_text_file(manifest_path), manifest_path.string());
  const std::string origin = "manifest";
  ObjectReader r(j, origin);
  const std::int64_t dim = detail::as_int(r.required("dim"), r.path("dim"));
  if (dim < 1) detail::config_fail(r.path("dim"), "must be at least 1");
  const json& levels = r.required("levels");
  r.finish();
  if (!levels.is_array() || levels.empty()) detail::config_fail(r.path("levels"), "expected a nonempty array");

  std::vector<SampleMatrix> samples;
  std::vector<double> costs;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    ObjectReader lr(levels[l], r.path("levels") + "[" + std::to_string(l) + "]");
    const std::string file = detail::as_string(lr.required("file"), lr.path("file"));
    costs.push_back(detail::as_positive(lr.required("cost"), lr.path("cost")));
    const json* n = lr.optional("n");
    const json* prefix = lr.optional("coupled_prefix");
    lr.finish();
    const std::filesystem::path csv = manifest_path.parent_path() / file;
    samples.push_back(parse_samples_csv(read_text_file(csv), dim, csv.string()));
    if (n && detail::as_int(*n, lr.path("n")) != samples.back().rows()) {
      detail::config_fail(lr.path("n"), "does not match the number of rows in " + file);
    }
    if (prefix && l > 0 && detail::as_int(*prefix, lr.path("coupled_prefix")) != samples[l - 1].rows()) {
      detail::config_fail(lr.path("coupled_prefix"), "must equal the previous level's sample count");
    }
  }
  try {
    return SampleSet{CoupledSampleHierarchy(std::move(samples)), CostModel(costs)};
  } catch (const HierarchyError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

}  // namespace mfcov

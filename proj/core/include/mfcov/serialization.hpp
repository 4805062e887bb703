#pragma once

// File formats used to hand results between CLI stages.
//
// MomentSummary JSON:
//   {"sigma": [s_0..s_L], "rho": [1, r_1..r_L, 0], "monotone_fidelity": bool,
//    "pilot_size": n, "pilot_cost": c}            (last two optional)
// AllocationPlan JSON:
//   {"alphas": [..L], "n_real": [..L+1], "n": [..L+1], "realized_cost": c, "predicted_mse": m}
// Covariance JSON:
//   {"dim": d, "matrix": [[..], ..]}
// Sample sets: one CSV per level (one sample per row, d columns, no header)
// plus a manifest
//   {"dim": d, "levels": [{"file": "level_0.csv", "cost": c_0, "n": n_0, "coupled_prefix": 0}, ..]}
// where coupled_prefix is the number of leading rows shared with the previous
// level's events (n_{l-1}; 0 for level 0). File paths are relative to the manifest.

#include <filesystem>
#include <optional>
#include <string>

#include "mfcov/estimators.hpp"
#include "mfcov/moments.hpp"
#include "mfcov/spd.hpp"

namespace mfcov {

/// 17 significant digits; non-finite values as "inf", "-inf", "nan".
std::string format_real(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct PilotInfo {
  std::int64_t pilot_size = 0;
  double pilot_cost = 0.0;
};

std::string moments_to_json(const MomentSummary& m, const std::optional<PilotInfo>& pilot = std::nullopt);
MomentSummary moments_from_json(const std::string& text);

std::string plan_to_json(const AllocationPlan& plan);
AllocationPlan plan_from_json(const std::string& text);

std::string covariance_to_json(const SymmetricMatrix& m);
SymmetricMatrix covariance_from_json(const std::string& text);

struct SampleSet {
  CoupledSampleHierarchy hierarchy;
  CostModel costs;
};

/// Writes level_<l>.csv files and manifest.json into `directory` (created if
/// needed) and returns the manifest path.
std::filesystem::path write_sample_set(const std::filesystem::path& directory, const CoupledSampleHierarchy& h,
                                       const CostModel& costs);
SampleSet read_sample_set(const std::filesystem::path& manifest);

}  // namespace mfcov

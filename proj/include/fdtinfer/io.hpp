#pragma once

#include "fdtinfer/estimate.hpp"
#include "fdtinfer/rational.hpp"
#include "fdtinfer/response.hpp"
#include "fdtinfer/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace fdtinfer {

using json = nlohmann::json;

// Matrices are stored row-major as nested arrays.
json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

json model_to_json(const ModelSpec& model);
ModelSpec model_from_json(const json& j);

/// FNV-1a hash of the canonical JSON text of the model.
std::string model_hash(const ModelSpec& model);

json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const json& j);

json observable_to_json(const Observable& obs);
Observable observable_from_json(const json& j);

/// Writes <base>.bin (float64 row-major states) and <base>.meta.json.
void save_trajectory(const Trajectory& traj, const ModelSpec& model,
                     const std::filesystem::path& base);
Trajectory load_trajectory(const std::filesystem::path& base);

void save_trajectory_csv(const Trajectory& traj, const std::filesystem::path& file);

json curve_to_json(const ResponseCurve& curve);
ResponseCurve curve_from_json(const json& j);
void save_curve_csv(const ResponseCurve& curve, const std::filesystem::path& file);
ResponseCurve load_curve_csv(const std::filesystem::path& file);

json essential_stats_to_json(const EssentialStats& stats);
EssentialStats essential_stats_from_json(const json& j);

json approximant_to_json(const RationalApproximant& g);
RationalApproximant approximant_from_json(const json& j);

json fit_report_to_json(const FitReport& report);

json estimation_report_to_json(const EstimationReport& report);

json load_json_file(const std::filesystem::path& file);
void save_json_file(const json& j, const std::filesystem::path& file);

}  // namespace fdtinfer

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "marginlab/analysis.hpp"
#include "marginlab/dataset.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/optim.hpp"

namespace marginlab {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// The four files of a saved single-neuron trajectory, named after a common stem:
/// <stem>.csv (per-record summary), <stem>.weights.csv (w and running average),
/// <stem>.regions.csv (label change events) and <stem>.meta.json.
struct TrajectoryFiles {
    std::filesystem::path csv;
    std::filesystem::path weights;
    std::filesystem::path regions;
    std::filesystem::path meta;

    static TrajectoryFiles for_stem(const std::filesystem::path& stem);
};

/// Columns t,loss,norm_w,var_sum,region,dir_err_global,dir_err_target,overflow. Direction
/// errors are blank when the corresponding target is absent or the iterate is zero.
std::string trajectory_csv(const Trajectory& traj, const std::optional<Vec>& global_target,
                           const std::optional<Vec>& target);

TrajectoryFiles save_trajectory(const Trajectory& traj, const std::filesystem::path& stem,
                                const std::optional<Vec>& global_target, const std::optional<Vec>& target);
/// Rebuilds a trajectory from its four files; throws ParseError on malformed input.
Trajectory load_trajectory(const std::filesystem::path& stem);

/// Columns t,loss,overflow,patterns with patterns as ';'-joined bit strings (neuron 0 first).
std::string net_trajectory_csv(const NetTrajectory& traj);

Json to_json(const Vec& v);
Json to_json(const MarginResult& r);
Json to_json(const ConditionReport& r);
Json to_json(const LandscapeCase& c);
Json to_json(const RegimeReport& r);
Json to_json(const RateFit& f);
Json to_json(const VarianceCheck& v);
Json to_json(const NormGrowth& g);
Json to_json(const PartitionReport& r);
Json to_json(const Series& s);
/// Per-step arrays of the across-seed means and standard errors.
Json to_json(const Ensemble& e);

}  // namespace marginlab

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ladderbot/deployment.hpp"
#include "ladderbot/kernels.hpp"
#include "ladderbot/scenario.hpp"

namespace ladderbot::harness {

struct SweepCell {
  Vec3 offset = Vec3::Zero();  ///< added to the base ladder position (m)
};

struct SweepSpec {
  Scenario scenario;  ///< everything except the ladder position
  Vec3 base_position{0.87, 0.05, 0.05};
  std::vector<SweepCell> cells;
  int trials = 5;
  Mode mode = Mode::Autonomous;
  std::uint64_t seed_base = 0;

  void validate() const;
  /// The nine rows of the published arm-to-ladder distance table, duplicate last row included.
  static SweepSpec table1(const Scenario& scenario = {});
  /// Reads [sweep] keys on top of the scenario keys in the same file.
  static SweepSpec from_config(const KeyValueConfig& cfg);
  static SweepSpec load(const std::filesystem::path& path);
};

std::uint64_t trial_seed(const SweepSpec& spec, int cell, int trial);

struct CellResult {
  Vec3 offset = Vec3::Zero();
  std::vector<deployment::EpisodeReport> reports;
  double avg_elapsed = 0.0;
  double avg_steps = 0.0;
  double avg_drift = 0.0;
  double avg_hitl = 0.0;
  int success_count = 0;
};

struct SweepReport {
  Vec3 base_position = Vec3::Zero();
  int step_count = 5;
  std::vector<CellResult> cells;
};

/// Aggregates one cell's reports.
CellResult aggregate(const Vec3& offset, std::vector<deployment::EpisodeReport> reports);

/// Runs every (cell, trial) episode; parallel execution merges in cell order.
SweepReport run_sweep(const SweepSpec& spec, kernels::Execution exec = kernels::Execution::Parallel);

/// Table-style axis label: "x = 0.87" for the base row, otherwise "x", "x + 0.05", "y - 0.02".
std::string axis_label(char axis, double base, double offset, bool base_row);
/// "All 5" when every trial deployed every step, "Only k" when all trials stopped at k, else the mean.
std::string steps_label(const CellResult& cell, int step_count);

void write_sweep_csv(std::ostream& out, const SweepReport& report);
nlohmann::json to_json(const SweepReport& report);

// ---- trajectory figures ----

struct PlotSummary {
  /// Max over lifts of the tool-x variance within one LiftZ phase (m^2).
  double lift_x_variance = 0.0;
  double final_drift_x = 0.0;
  int steps = 0;
  std::vector<double> step_x;  ///< tool x at the grasp of each step
};

/// Statistics read off a trajectory log. Throws EmptyLog for an empty log.
PlotSummary summarize(std::span<const deployment::TrajectoryRow> rows);

struct PlotFiles {
  std::filesystem::path full_deployment;  ///< per-axis traces over the whole episode
  std::filesystem::path first_step;       ///< first step with phase bands
  std::filesystem::path comparison;       ///< x during lifts, primary against comparison log
  std::filesystem::path summary;
};

/// Writes SVG figures and a JSON summary into `out_dir`. `compare` (optional,
/// may be empty) is overlaid on the lift comparison figure.
PlotFiles emit_trajectory_plots(std::span<const deployment::TrajectoryRow> rows,
                                std::span<const deployment::TrajectoryRow> compare,
                                const std::filesystem::path& out_dir);

}  // namespace ladderbot::harness

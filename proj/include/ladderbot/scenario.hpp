#pragma once

#include <cstdint>
#include <filesystem>

#include "ladderbot/config.hpp"
#include "ladderbot/kinematics.hpp"
#include "ladderbot/perception.hpp"
#include "ladderbot/planner.hpp"
#include "ladderbot/terrain.hpp"

namespace ladderbot {

enum class Mode { Autonomous, Hitl };
enum class MotionStrategy { Smp, MultiAxis };

const char* to_string(Mode m);
const char* to_string(MotionStrategy s);
Mode parse_mode(const std::string& text);
MotionStrategy parse_strategy(const std::string& text);

/// Ladder placement and step geometry. Offsets are relative to the base frame.
struct LadderGeometry {
  Vec3 base_position{0.87, 0.05, 0.05};
  int step_count = 5;
  double step_mass = 0.8;       ///< kg added to the held assembly per lifted step
  double grasp_setback = 0.25;  ///< handles sit this far in front of the base (toward the arm)
  double stow_height = 0.08;    ///< handle height of step 0 above the base
  double stow_pitch = 0.02;     ///< extra height per subsequent step
  double lift_height = 0.15;
  double tilt_threshold = 0.05;  ///< rad, the latch will not engage at or above this
  double lock_tolerance = 0.005; ///< m, allowed vertical residual at the latch
  Vec3 body_size{0.30, 0.50, 0.90};  ///< collision box centred on the base in x, y, rising from the ground
};

struct PhaseOverheads {
  double detect = 0.4;
  double estimate = 0.1;
  double plan = 0.5;
  double grasp = 1.0;
  double update_payload = 0.1;
  double lock_confirm = 0.5;
  double step_complete = 0.3;
};

struct AnomalyInjection {
  int step = -1;           ///< negative disables injection
  double lift_time = 1.0;  ///< s into LiftZ
  double force = 20.0;     ///< N added on the wrist z axis
};

struct Scenario {
  kinematics::ArmParams arm = kinematics::ArmParams::default_params();
  LadderGeometry ladder;
  terrain::TerrainModel terrain{.coupling_gain = 6.0, .sinkage_gain = 0.05};

  perception::CameraIntrinsics camera;
  Vec3 camera_position{0.0, -0.10, 0.18};
  double marker_size = 0.08;
  double illumination = 0.6;
  double frame_period = 1.0 / 30.0;
  int broad_max_trials = 200;
  int fine_window = 10;
  int max_detect_attempts = 3;

  MotionStrategy strategy = MotionStrategy::Smp;
  planner::AxisOrder smp_order{planner::Axis::Y, planner::Axis::X, planner::Axis::Z};
  bool z_align_first = false;
  double smp_speed = 0.02;
  double multi_axis_speed = 0.05;
  Vec3 home_position{0.40, 0.0, 0.35};
  planner::RRTParams rrt;
  double link_radius = 0.06;

  double gripper_tare = 1.2;
  double grip_force = 40.0;
  double grip_gain = 0.3;
  double anomaly_rate = 150.0;  ///< N/s
  int anomaly_window = 5;
  double load_ramp_time = 0.5;
  AnomalyInjection anomaly;

  double dt = 0.05;
  long max_ticks = 1'000'000;
  int max_retries = 3;
  PhaseOverheads overheads;

  /// Camera frame: x along -y world, y along -z world, optical axis along +x world.
  Pose world_camera() const;
  void validate() const;

  static Scenario from_config(const KeyValueConfig& cfg);
  static Scenario load(const std::filesystem::path& path);
};

/// Rotation taking the marker frame into the step frame (the marker faces the camera).
Mat3 marker_rotation();

/// Deterministic 64-bit mix of an episode seed with stream tags.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ladderbot

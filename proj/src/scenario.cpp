#include "ladderbot/scenario.hpp"

#include "ladderbot/errors.hpp"

namespace ladderbot {
namespace {

Vec3 get_vec3(const KeyValueConfig& cfg, const std::string& key, const Vec3& fallback) {
  if (!cfg.has(key)) {
    return fallback;
  }
  const auto v = cfg.get_doubles(key, {});
  if (v.size() != 3) {
    throw Error(ErrorCode::ConfigInvalid, "'" + key + "' needs exactly 3 entries");
  }
  return {v[0], v[1], v[2]};
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

const char* to_string(Mode m) {
  return m == Mode::Autonomous ? "autonomous" : "hitl";
}

const char* to_string(MotionStrategy s) {
  return s == MotionStrategy::Smp ? "smp" : "multi_axis";
}

Mode parse_mode(const std::string& text) {
  if (text == "autonomous" || text == "auto") {
    return Mode::Autonomous;
  }
  if (text == "hitl" || text == "HITL") {
    return Mode::Hitl;
  }
  throw Error(ErrorCode::ConfigInvalid, "mode must be 'autonomous' or 'hitl', got '" + text + "'");
}

MotionStrategy parse_strategy(const std::string& text) {
  if (text == "smp") {
    return MotionStrategy::Smp;
  }
  if (text == "multi_axis" || text == "multi-axis" || text == "multi") {
    return MotionStrategy::MultiAxis;
  }
  throw Error(ErrorCode::ConfigInvalid, "strategy must be 'smp' or 'multi_axis', got '" + text + "'");
}

Mat3 marker_rotation() {
  Mat3 r;
  r.col(0) = Vec3(0, -1, 0);
  r.col(1) = Vec3(0, 0, -1);
  r.col(2) = Vec3(1, 0, 0);
  return r;
}

Pose Scenario::world_camera() const {
  return {marker_rotation(), camera_position};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

void Scenario::validate() const {
  arm.validate();
  terrain.validate();
  camera.validate();
  rrt.validate();
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
  if (ladder.step_count < 1) fail("ladder.step_count must be >= 1");
  if (!(ladder.step_mass > 0.0)) fail("ladder.step_mass must be positive");
  if (!(ladder.lift_height > 0.0)) fail("ladder.lift_height must be positive");
  if (!(ladder.tilt_threshold > 0.0) || !(ladder.lock_tolerance > 0.0)) fail("ladder lock thresholds must be positive");
  if (!(ladder.body_size.array() > 0.0).all()) fail("ladder.body_size must be positive");
  if (!(marker_size > 0.0)) fail("camera.marker_size must be positive");
  if (!(illumination >= 0.0 && illumination <= 1.0)) fail("camera.illumination must lie in [0, 1]");
  if (!(frame_period > 0.0)) fail("camera.frame_period must be positive");
  if (broad_max_trials < 1 || fine_window < 1 || max_detect_attempts < 1) fail("camera tuning counts must be >= 1");
  if (smp_order[2] != planner::Axis::Z) fail("planner.smp_order must end with Z (the lift)");
  if (!(smp_speed > 0.0) || !(multi_axis_speed > 0.0)) fail("planner speeds must be positive");
  if (!(link_radius >= 0.0)) fail("planner.link_radius must be non-negative");
  if (!(gripper_tare > 0.0)) fail("payload.gripper_tare must be positive");
  if (!(grip_force >= 0.0) || !(grip_gain >= 0.0 && grip_gain <= 1.0)) fail("payload grip settings out of range");
  if (!(anomaly_rate > 0.0) || anomaly_window < 2 || !(load_ramp_time > 0.0)) fail("payload anomaly settings out of range");
  if (!(dt > 0.0)) fail("scenario.dt must be positive");
  if (max_ticks < 1 || max_retries < 0) fail("scenario tick budget and retries must be non-negative");
}

Scenario Scenario::from_config(const KeyValueConfig& cfg) {
  Scenario s;
  s.arm = kinematics::ArmParams::from_config(cfg);

  auto& l = s.ladder;
  l.base_position = get_vec3(cfg, "ladder.base", l.base_position);
  l.step_count = static_cast<int>(cfg.get_int("ladder.step_count", l.step_count));
  l.step_mass = cfg.get_double("ladder.step_mass", l.step_mass);
  l.grasp_setback = cfg.get_double("ladder.grasp_setback", l.grasp_setback);
  l.stow_height = cfg.get_double("ladder.stow_height", l.stow_height);
  l.stow_pitch = cfg.get_double("ladder.stow_pitch", l.stow_pitch);
  l.lift_height = cfg.get_double("ladder.lift_height", l.lift_height);
  l.tilt_threshold = cfg.get_double("ladder.tilt_threshold", l.tilt_threshold);
  l.lock_tolerance = cfg.get_double("ladder.lock_tolerance", l.lock_tolerance);
  l.body_size = get_vec3(cfg, "ladder.body_size", l.body_size);

  auto& t = s.terrain;
  t.coupling_gain = cfg.get_double("terrain.coupling_gain", t.coupling_gain);
  t.sinkage_gain = cfg.get_double("terrain.sinkage_gain", t.sinkage_gain);
  t.noise_sigma = cfg.get_double("terrain.noise_sigma", t.noise_sigma);
  t.load_ref = cfg.get_double("terrain.load_ref", t.load_ref);
  t.tilt_gain = cfg.get_double("terrain.tilt_gain", t.tilt_gain);
  t.workspace_extent = cfg.get_double("terrain.workspace_extent", t.workspace_extent);
  t.rng_seed = static_cast<std::uint64_t>(cfg.get_int("terrain.rng_seed", static_cast<long>(t.rng_seed)));

  auto& c = s.camera;
  c.fx = cfg.get_double("camera.fx", c.fx);
  c.fy = cfg.get_double("camera.fy", c.fy);
  c.cx = cfg.get_double("camera.cx", c.cx);
  c.cy = cfg.get_double("camera.cy", c.cy);
  c.width = static_cast<int>(cfg.get_int("camera.width", c.width));
  c.height = static_cast<int>(cfg.get_int("camera.height", c.height));
  s.camera_position = get_vec3(cfg, "camera.position", s.camera_position);
  s.marker_size = cfg.get_double("camera.marker_size", s.marker_size);
  s.illumination = cfg.get_double("camera.illumination", s.illumination);
  s.frame_period = cfg.get_double("camera.frame_period", s.frame_period);
  s.broad_max_trials = static_cast<int>(cfg.get_int("camera.broad_max_trials", s.broad_max_trials));
  s.fine_window = static_cast<int>(cfg.get_int("camera.fine_window", s.fine_window));
  s.max_detect_attempts = static_cast<int>(cfg.get_int("camera.max_detect_attempts", s.max_detect_attempts));

  s.strategy = parse_strategy(cfg.get_string("planner.strategy", to_string(s.strategy)));
  s.smp_order = planner::parse_axis_order(cfg.get_string("planner.smp_order", planner::to_string(s.smp_order)));
  s.z_align_first = cfg.get_bool("planner.z_align_first", s.z_align_first);
  s.smp_speed = cfg.get_double("planner.smp_speed", s.smp_speed);
  s.multi_axis_speed = cfg.get_double("planner.multi_axis_speed", s.multi_axis_speed);
  s.home_position = get_vec3(cfg, "planner.home", s.home_position);
  s.link_radius = cfg.get_double("planner.link_radius", s.link_radius);
  s.rrt.step_size = cfg.get_double("planner.rrt_step", s.rrt.step_size);
  s.rrt.goal_bias = cfg.get_double("planner.rrt_goal_bias", s.rrt.goal_bias);
  s.rrt.max_iterations = static_cast<int>(cfg.get_int("planner.rrt_max_iterations", s.rrt.max_iterations));
  s.rrt.goal_tolerance = cfg.get_double("planner.rrt_goal_tolerance", s.rrt.goal_tolerance);

  s.gripper_tare = cfg.get_double("payload.gripper_tare", s.gripper_tare);
  s.arm.payload_capacity = cfg.get_double("payload.capacity", s.arm.payload_capacity);
  s.grip_force = cfg.get_double("payload.grip_force", s.grip_force);
  s.grip_gain = cfg.get_double("payload.grip_gain", s.grip_gain);
  s.anomaly_rate = cfg.get_double("payload.anomaly_rate", s.anomaly_rate);
  s.anomaly_window = static_cast<int>(cfg.get_int("payload.anomaly_window", s.anomaly_window));
  s.load_ramp_time = cfg.get_double("payload.load_ramp_time", s.load_ramp_time);
  s.anomaly.step = static_cast<int>(cfg.get_int("payload.inject_anomaly_step", s.anomaly.step));
  s.anomaly.lift_time = cfg.get_double("payload.inject_anomaly_time", s.anomaly.lift_time);
  s.anomaly.force = cfg.get_double("payload.inject_anomaly_force", s.anomaly.force);

  s.dt = cfg.get_double("scenario.dt", s.dt);
  s.max_ticks = cfg.get_int("scenario.max_ticks", s.max_ticks);
  s.max_retries = static_cast<int>(cfg.get_int("scenario.max_retries", s.max_retries));

  auto& o = s.overheads;
  o.detect = cfg.get_double("overheads.detect", o.detect);
  o.estimate = cfg.get_double("overheads.estimate", o.estimate);
  o.plan = cfg.get_double("overheads.plan", o.plan);
  o.grasp = cfg.get_double("overheads.grasp", o.grasp);
  o.update_payload = cfg.get_double("overheads.update_payload", o.update_payload);
  o.lock_confirm = cfg.get_double("overheads.lock_confirm", o.lock_confirm);
  o.step_complete = cfg.get_double("overheads.step_complete", o.step_complete);

  s.validate();
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  return from_config(KeyValueConfig::load(path));
}

}  // namespace ladderbot

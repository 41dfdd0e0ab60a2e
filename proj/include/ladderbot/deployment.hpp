#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ladderbot/errors.hpp"
#include "ladderbot/payload.hpp"
#include "ladderbot/perception.hpp"
#include "ladderbot/scenario.hpp"

namespace ladderbot::deployment {

using kinematics::JointConfig;

enum class Phase {
  Home,
  DetectMarker,
  EstimatePose,
  Plan,
  AlignY,
  ApproachX,
  Grasp,
  UpdatePayload,
  LiftZ,
  AwaitLockConfirm,
  AdjustPose,
  StepComplete,
  Done,
  Fault,
};

const char* to_string(Phase p);
/// Documented edges of the state machine.
bool is_allowed_transition(Phase from, Phase to);

enum class StepLock { Stowed, Lifted, Locked, Failed };
const char* to_string(StepLock s);

struct LadderModel {
  Pose nominal_base;
  LadderGeometry geometry;
  std::vector<StepLock> locks;
  std::vector<double> lifted_height;  ///< world z of the handle when its lift ended

  static LadderModel from_geometry(const LadderGeometry& g);
  int step_count() const { return static_cast<int>(locks.size()); }
  /// nominal base composed with the terrain drift offset
  Pose base(const terrain::DriftState& drift) const;
  /// Stowed handle pose of step k in the world frame.
  Pose step_pose(int k, const terrain::DriftState& drift) const;
  /// Handle height above the base once step k is deployed.
  double required_height(int k) const;
  /// lifted height minus the base height minus the required height (m)
  double residual(int k, const terrain::DriftState& drift) const;
};

/// Simulated latch: engages iff tilt < threshold and |residual| < tolerance.
/// Throws IllegalTransition unless step k is currently Lifted.
bool lock_oracle(const LadderModel& ladder, int step, const terrain::DriftState& drift);

enum class PromptKind { ConfirmLock, ApproveAnomalyOverride, ManualJog };
enum class Verdict { Confirm, Reject };
const char* to_string(PromptKind k);
const char* to_string(Verdict v);
PromptKind parse_prompt_kind(const std::string& s);
Verdict parse_verdict(const std::string& s);

struct HitlPrompt {
  int id = 0;
  PromptKind kind = PromptKind::ConfirmLock;
  int step = 0;
  nlohmann::json context;
};

struct HitlResponse {
  int prompt_id = 0;
  Verdict verdict = Verdict::Confirm;
  std::optional<Vec3> jog;
};

struct InboxItem {
  enum class Kind { Response, Pause, Resume, Jog };
  Kind kind = Kind::Response;
  HitlResponse response;
  Vec3 jog = Vec3::Zero();

  static InboxItem make_response(HitlResponse r) { return {Kind::Response, std::move(r), Vec3::Zero()}; }
  static InboxItem pause() { return {Kind::Pause, {}, Vec3::Zero()}; }
  static InboxItem resume() { return {Kind::Resume, {}, Vec3::Zero()}; }
  static InboxItem make_jog(const Vec3& v) { return {Kind::Jog, {}, v}; }
};

constexpr double kMaxJog = 0.02;  ///< m
/// Throws JogTooLarge above kMaxJog and ProtocolViolation unless single-axis.
void validate_jog(const Vec3& v);
/// Jogs are accepted while paused or in the interactive lock phases.
bool jog_allowed(Phase phase, bool paused);

struct MotionSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  JointConfig q;
};
using Motion = std::shared_ptr<const std::vector<MotionSample>>;

struct StepPlan {
  Mat3 tool_rotation = Mat3::Identity();
  Vec3 pregrasp = Vec3::Zero();
  Vec3 grasp = Vec3::Zero();
  Vec3 deployed = Vec3::Zero();
  Motion transfer;
  Motion first_axis;   ///< AlignY or ApproachX, whichever the axis order puts first
  Motion second_axis;
  Motion lift;
  Phase first_phase = Phase::AlignY;
  Phase second_phase = Phase::ApproachX;
};

struct DeploymentState {
  Phase phase = Phase::Home;
  int active_step = 0;
  int retry_count = 0;
  double clock = 0.0;
  bool paused = false;
  long tick_count = 0;

  Motion motion;  ///< in-progress motion of the current phase
  int motion_index = 0;
  bool motion_loaded = false;
  std::optional<StepPlan> plan;
  std::optional<perception::MarkerObservation> observation;
  std::optional<Pose> perceived_step;
  int detect_attempts = 0;
  int frame_counter = 0;
  int rrt_calls = 0;

  int next_prompt_id = 1;
  std::optional<HitlPrompt> pending_prompt;
  std::optional<HitlResponse> answered;  ///< response to the prompt just resolved
  int hitl_events = 0;
  Vec3 pending_jog = Vec3::Zero();

  bool regrasp = false;        ///< Grasp re-entered after an aborted lift
  bool anomaly_injected = false;
  double lift_elapsed = 0.0;   ///< time spent loaded in the current lift
  bool adjust_started = false;

  std::optional<ErrorCode> fault_code;
  std::string fault_reason;
};

struct World {
  JointConfig q;
  JointConfig q_home;
  Vec3 tool_position = Vec3::Zero();
  Vec3 tool_velocity = Vec3::Zero();
  LadderModel ladder;
  terrain::DriftState drift;
  payload::PayloadState payload;
  perception::ThresholdState threshold;
  std::vector<payload::ForceTorqueReading> ft_window;
  payload::ForceTorqueReading wrist;
  double grip_command = 0.0;
};

struct EpisodeState {
  DeploymentState deploy;
  World world;
  Mode mode = Mode::Autonomous;
  std::uint64_t seed = 0;
  terrain::TerrainModel terrain;  ///< scenario terrain with the episode seed folded in
};

struct Command {
  enum class Kind { JointTarget, GripForce };
  Kind kind = Kind::JointTarget;
  JointConfig q;
  double force = 0.0;
};

struct Event {
  double t = 0.0;
  Phase phase = Phase::Home;
  int step = 0;
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();
};
nlohmann::json to_json(const Event& e);

struct TickResult {
  EpisodeState state;
  std::vector<Command> commands;
  std::vector<Event> events;
};

/// Builds the starting state: arm at home, ladder stowed, nothing tuned.
EpisodeState initial_state(const Scenario& scenario, Mode mode, std::uint64_t seed);

/// Advances one transition or one motion sample. Pure in its inputs.
TickResult tick(const EpisodeState& state, std::span<const InboxItem> inbox, const Scenario& scenario);

/// True once the episode reached Done or Fault.
inline bool finished(const EpisodeState& s) {
  return s.deploy.phase == Phase::Done || s.deploy.phase == Phase::Fault;
}
/// True when a HITL prompt blocks progress.
bool awaiting_operator(const EpisodeState& s);

/// Rendered camera frame of the active step's marker, exactly as the detector sees it.
perception::Frame camera_frame(const EpisodeState& s, const Scenario& scenario, int frame_number);

struct TrajectoryRow {
  double t = 0.0;
  Vec3 tool = Vec3::Zero();
  JointConfig q;
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
  double drift_x = 0.0;
  double sink_depth = 0.0;
  Phase phase = Phase::Home;
  int step = 0;
};
TrajectoryRow trajectory_row(const EpisodeState& s);

enum class Outcome { Success, Partial, Fault };
const char* to_string(Outcome o);

struct EpisodeReport {
  int steps_deployed = 0;
  double elapsed = 0.0;
  double drift_total = 0.0;
  int hitl_events = 0;
  Outcome outcome = Outcome::Fault;
  long ticks = 0;
  std::string fault_reason;
  Phase final_phase = Phase::Fault;
};
EpisodeReport make_report(const EpisodeState& s);
nlohmann::json to_json(const EpisodeReport& r);

/// Answers prompts for run_episode. Receives the prompt and the state that raised it.
using Operator = std::function<HitlResponse(const HitlPrompt&, const EpisodeState&)>;

/// Scripted operator: verdicts consumed in order, Confirm once the script runs out.
/// The returned callable is stateful; use a fresh one per episode.
Operator scripted_operator(std::vector<Verdict> verdicts);

struct EpisodeResult {
  EpisodeReport report;
  std::vector<Event> events;
  std::vector<TrajectoryRow> trajectory;
};

/// Loops tick until Done or Fault. HITL prompts go to `op` (Confirm-all when empty).
EpisodeResult run_episode(const Scenario& scenario, Mode mode, std::uint64_t seed, const Operator& op = {});

void write_event_log(std::ostream& out, std::span<const Event> events);
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows);
std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in);
Phase parse_phase(const std::string& s);

}  // namespace ladderbot::deployment

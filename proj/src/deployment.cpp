#include "ladderbot/deployment.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace ladderbot::deployment {
namespace {

using nlohmann::json;

json vec_json(const Vec3& v) {
  return json::array({v.x(), v.y(), v.z()});
}

Pose marker_in_step() {
  return {marker_rotation(), Vec3::Zero()};
}

const JointConfig& ik_seed() {
  static const JointConfig seed{(kinematics::JointVector() << 0.0, -1.75, 2.3, -0.5, 0.9, -M_PI / 2).finished()};
  return seed;
}

/// Tool z along +x of the step frame: the gripper faces the ladder.
Mat3 grasp_rotation(const Mat3& step_rotation) {
  return step_rotation * rot_y(M_PI / 2);
}

planner::SceneGeometry make_scene(const Scenario& sc, const World& w) {
  planner::SceneGeometry scene;
  scene.link_radius = sc.link_radius;
  const Vec3 base = w.ladder.base(w.drift).translation;
  const Vec3 half = sc.ladder.body_size / 2.0;
  scene.obstacles.push_back({Vec3(base.x() - half.x(), base.y() - half.y(), 0.0),
                             Vec3(base.x() + half.x(), base.y() + half.y(), base.z() + sc.ladder.body_size.z())});
  return scene;
}

struct Ctx {
  const Scenario& sc;
  EpisodeState& s;
  std::vector<Event>& events;
  std::vector<Command>& commands;

  DeploymentState& d() { return s.deploy; }
  World& w() { return s.world; }

  void emit(std::string kind, json payload = json::object()) {
    events.push_back({d().clock, d().phase, d().active_step, std::move(kind), std::move(payload)});
  }

  void go(Phase to) {
    if (!is_allowed_transition(d().phase, to)) {
      throw Error(ErrorCode::IllegalTransition,
                  std::string("no edge ") + to_string(d().phase) + " -> " + to_string(to));
    }
    const Phase from = d().phase;
    d().phase = to;
    emit("phase", {{"from", to_string(from)}, {"to", to_string(to)}});
  }

  void fault(std::optional<ErrorCode> code, const std::string& reason) {
    d().fault_code = code;
    d().fault_reason = reason;
    emit("fault", {{"code", code ? to_string(*code) : "None"}, {"reason", reason}});
    if (d().active_step < w().ladder.step_count() && w().ladder.locks[d().active_step] == StepLock::Lifted) {
      w().ladder.locks[d().active_step] = StepLock::Failed;
    }
    go(Phase::Fault);
  }

  void start_motion(Motion m) {
    d().motion = std::move(m);
    d().motion_index = 1;
  }

  bool motion_done() const {
    const auto& dd = s.deploy;
    return !dd.motion || dd.motion_index >= static_cast<int>(dd.motion->size());
  }

  /// Held weight felt at the wrist (N), ramped in after each (re)grasp.
  double held_load() const {
    const double held = s.world.payload.m_dynamic - s.world.payload.components.front().mass;
    const double ramp = std::min(1.0, s.deploy.lift_elapsed / sc.load_ramp_time);
    return held * payload::kGravity * ramp;
  }

  /// Consumes one motion sample; returns its duration.
  double step_motion(bool loaded) {
    const auto& sample = (*d().motion)[d().motion_index];
    const double dt = sample.t - (*d().motion)[d().motion_index - 1].t;
    ++d().motion_index;
    if (!kinematics::check_limits(sc.arm, sample.q)) {
      throw Error(ErrorCode::IllegalTransition, "motion sample violates joint limits");
    }
    w().q = sample.q;
    w().tool_position = sample.position;
    w().tool_velocity = sample.velocity;
    commands.push_back({Command::Kind::JointTarget, sample.q, 0.0});
    if (dt > 0.0) {
      if (loaded) {
        d().lift_elapsed += dt;
        w().drift = terrain::step_interaction(s.terrain, w().drift, sample.velocity, held_load(), dt);
      }
      d().clock += dt;
    }
    return dt;
  }

  void update_wrist(bool loaded, double extra_fz = 0.0) {
    payload::ForceTorqueReading r;
    r.timestamp = d().clock;
    if (loaded) {
      r.force = Vec3(0.0, 0.0, -held_load() + extra_fz);
      r.torque = (w().payload.com - w().tool_position).cross(r.force);
    }
    w().wrist = r;
  }

  void regulate(double measured) {
    const auto cmd = payload::regulate_grip(sc.grip_force, measured, sc.grip_gain);
    w().grip_command = cmd.target_force;
    commands.push_back({Command::Kind::GripForce, w().q, cmd.target_force});
  }

  HitlPrompt& raise(PromptKind kind) {
    HitlPrompt p;
    p.id = d().next_prompt_id++;
    p.kind = kind;
    p.step = d().active_step;
    const int k = d().active_step;
    p.context = {{"phase", to_string(d().phase)},
                 {"tool", vec_json(w().tool_position)},
                 {"tilt", w().drift.tilt},
                 {"drift_x", w().drift.base_offset.x()},
                 {"sink_depth", w().drift.sink_depth}};
    if (w().ladder.locks[k] == StepLock::Lifted) {
      p.context["residual"] = w().ladder.residual(k, w().drift);
    }
    d().pending_prompt = p;
    emit("prompt", {{"prompt_id", p.id}, {"prompt_kind", to_string(kind)}, {"context", p.context}});
    if (s.mode == Mode::Hitl) {
      ++d().hitl_events;
    }
    return *d().pending_prompt;
  }

  void resolve(const HitlResponse& r, bool automatic) {
    d().pending_prompt.reset();
    d().answered = r;
    json payload{{"prompt_id", r.prompt_id}, {"verdict", to_string(r.verdict)}, {"auto", automatic}};
    if (r.jog) {
      payload["jog"] = vec_json(*r.jog);
    }
    emit("response", payload);
  }
};

Motion cartesian_motion(const planner::SMPPlan& plan, const Mat3& rotation, JointConfig& q, const Scenario& sc,
                        const planner::SceneGeometry& scene) {
  auto out = std::make_shared<std::vector<MotionSample>>();
  for (const auto& ts : planner::time_parameterize(plan, sc.dt)) {
    q = kinematics::inverse_kinematics(sc.arm, Pose{rotation, ts.position}, q);
    if (planner::collision_check(scene, sc.arm, q)) {
      throw Error(ErrorCode::GoalUnreachable, "Cartesian segment passes through an obstacle");
    }
    // Segment boundaries and round-off repeat a time stamp; keep the later point.
    if (!out->empty() && ts.t <= out->back().t + 1e-9) {
      out->back() = {out->back().t, ts.position, out->size() == 1 ? Vec3::Zero() : ts.velocity, q};
      continue;
    }
    out->push_back({ts.t, ts.position, ts.velocity, q});
  }
  return out;
}

/// Linear joint interpolation through waypoints. Cartesian velocity is the
/// backward difference of the forward kinematics.
Motion joint_motion(const std::vector<JointConfig>& waypoints, const Scenario& sc, double cartesian_speed,
                    const planner::SceneGeometry* scene) {
  auto out = std::make_shared<std::vector<MotionSample>>();
  const auto& first = waypoints.front();
  out->push_back({0.0, kinematics::forward_kinematics(sc.arm, first).translation, Vec3::Zero(), first});
  double t = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const auto& a = waypoints[i - 1];
    const auto& b = waypoints[i];
    double duration = (b.angles - a.angles).cwiseAbs().maxCoeff() / sc.arm.max_joint_speed;
    if (cartesian_speed > 0.0) {
      const double len = (kinematics::forward_kinematics(sc.arm, b).translation -
                          kinematics::forward_kinematics(sc.arm, a).translation)
                             .norm();
      duration = std::max(duration, len / cartesian_speed);
    }
    if (duration == 0.0) {
      continue;
    }
    const int n = std::max(1, static_cast<int>(std::ceil(duration / sc.dt - 1e-9)));
    const double h = duration / n;
    for (int k = 1; k <= n; ++k) {
      const JointConfig q{k == n ? b.angles : kinematics::JointVector(a.angles + (double(k) / n) * (b.angles - a.angles))};
      if (scene && planner::collision_check(*scene, sc.arm, q)) {
        throw Error(ErrorCode::GoalUnreachable, "joint interpolation passes through an obstacle");
      }
      const Vec3 p = kinematics::forward_kinematics(sc.arm, q).translation;
      t += h;
      out->push_back({t, p, (p - out->back().position) / h, q});
    }
  }
  return out;
}

StepPlan plan_step(Ctx& c) {
  const Scenario& sc = c.sc;
  auto& d = c.d();
  auto& w = c.w();
  StepPlan plan;
  plan.tool_rotation = grasp_rotation(d.perceived_step->rotation);
  plan.grasp = d.perceived_step->translation + d.pending_jog;
  d.pending_jog = Vec3::Zero();
  plan.deployed = plan.grasp + Vec3(0.0, 0.0, sc.ladder.lift_height);
  const Vec3 home = w.tool_position;
  plan.pregrasp = sc.z_align_first ? home : Vec3(home.x(), home.y(), plan.grasp.z());

  const auto& R = plan.tool_rotation;
  const JointConfig q_pre = kinematics::inverse_kinematics(sc.arm, Pose{R, plan.pregrasp}, w.q);
  const JointConfig q_grasp = kinematics::inverse_kinematics(sc.arm, Pose{R, plan.grasp}, q_pre);
  const JointConfig q_dep = kinematics::inverse_kinematics(sc.arm, Pose{R, plan.deployed}, q_grasp);

  const auto scene = make_scene(sc, w);
  if (!sc.z_align_first) {
    auto rrt = sc.rrt;
    rrt.rng_seed = derive_seed(c.s.seed, 2, static_cast<std::uint64_t>(d.rrt_calls++));
    const auto path = planner::rrt_plan(scene, sc.arm, w.q, q_pre, rrt);
    plan.transfer = joint_motion(path.waypoints, sc, 0.0, nullptr);
  }

  auto phase_of = [](planner::Axis a) { return a == planner::Axis::Y ? Phase::AlignY : Phase::ApproachX; };
  plan.first_phase = phase_of(sc.smp_order[0]);
  plan.second_phase = phase_of(sc.smp_order[1]);

  if (sc.strategy == MotionStrategy::Smp) {
    JointConfig q = q_pre;
    const auto smp = planner::decompose_smp(plan.pregrasp, plan.deployed, sc.smp_order, sc.smp_speed);
    planner::SMPPlan first{{smp.segments[0]}, sc.smp_speed};
    if (sc.z_align_first) {
      const Vec3 aligned(home.x(), home.y(), plan.grasp.z());
      const planner::SmpSegment z_align{planner::Axis::Z, home, aligned};
      const auto rest = planner::decompose_smp(aligned, plan.deployed, sc.smp_order, sc.smp_speed);
      first.segments = {z_align, rest.segments[0]};
      plan.first_axis = cartesian_motion(first, R, q, sc, scene);
      plan.second_axis = cartesian_motion({{rest.segments[1]}, sc.smp_speed}, R, q, sc, scene);
      plan.lift = cartesian_motion({{rest.segments[2]}, sc.smp_speed}, R, q, sc, scene);
    } else {
      plan.first_axis = cartesian_motion(first, R, q, sc, scene);
      plan.second_axis = cartesian_motion({{smp.segments[1]}, sc.smp_speed}, R, q, sc, scene);
      plan.lift = cartesian_motion({{smp.segments[2]}, sc.smp_speed}, R, q, sc, scene);
    }
  } else {
    plan.first_axis = joint_motion({q_pre, q_grasp}, sc, sc.multi_axis_speed, &scene);
    plan.second_axis = nullptr;
    plan.lift = joint_motion({q_grasp, q_dep}, sc, sc.multi_axis_speed, &scene);
  }
  return plan;
}

int motion_size(const Motion& m) {
  return m ? static_cast<int>(m->size()) : 0;
}

// ---- phase handlers ----

void on_home(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  if (!d.motion_loaded) {
    d.motion_loaded = true;
    if (planner::joint_distance(w.q, w.q_home) > 1e-9) {
      auto rrt = c.sc.rrt;
      rrt.rng_seed = derive_seed(c.s.seed, 2, static_cast<std::uint64_t>(d.rrt_calls++));
      const auto path = planner::rrt_plan(make_scene(c.sc, w), c.sc.arm, w.q, w.q_home, rrt);
      c.start_motion(joint_motion(path.waypoints, c.sc, 0.0, nullptr));
      c.emit("home_planned", {{"waypoints", path.waypoints.size()}, {"length", path.total_length}});
      return;
    }
  }
  if (!c.motion_done()) {
    c.step_motion(false);
    return;
  }
  d.motion.reset();
  d.motion_loaded = false;
  c.go(Phase::DetectMarker);
}

void on_detect(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  const Scenario& sc = c.sc;
  double elapsed = sc.overheads.detect;
  const int base_frame = d.frame_counter;
  const EpisodeState snapshot = c.s;
  auto frames_from = [&](int offset) {
    return [&, offset](int i) { return camera_frame(snapshot, sc, base_frame + offset + i); };
  };
  auto retry_or_fault = [&](const std::string& why) {
    ++d.detect_attempts;
    w.threshold = perception::ThresholdState{};
    c.emit("detection_failed", {{"attempt", d.detect_attempts}, {"reason", why}});
    if (d.detect_attempts >= sc.max_detect_attempts) {
      c.fault(ErrorCode::NoDetection, "marker not detected after " + std::to_string(d.detect_attempts) + " attempts");
    }
  };

  int used = 0;
  if (!w.threshold.optimal_c) {
    try {
      auto broad = perception::broad_tune(frames_from(0),
                                          derive_seed(c.s.seed, 3, static_cast<std::uint64_t>(base_frame)),
                                          sc.broad_max_trials);
      used = static_cast<int>(broad.trial_log.size());
      const int broad_c = broad.current_c;
      const auto candidates = perception::fine_candidates(broad.current_c);
      w.threshold = perception::fine_tune(std::move(broad), frames_from(used), candidates, sc.fine_window);
      used += sc.fine_window;
      c.emit("threshold_tuned", {{"broad_trials", used - sc.fine_window},
                                 {"broad_c", broad_c},
                                 {"optimal_c", *w.threshold.optimal_c}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoDetection) {
        throw;
      }
      d.frame_counter += sc.broad_max_trials;
      d.clock += elapsed + sc.broad_max_trials * sc.frame_period;
      retry_or_fault(e.what());
      return;
    }
  }
  const int frame_number = base_frame + used;
  d.frame_counter = frame_number + 1;
  elapsed += (used + 1) * sc.frame_period;
  d.clock += elapsed;
  const auto frame = camera_frame(snapshot, sc, frame_number);
  const auto corners = perception::detect(frame, *w.threshold.optimal_c);
  if (!corners) {
    retry_or_fault("threshold " + std::to_string(*w.threshold.optimal_c) + " failed on frame " +
                   std::to_string(frame_number));
    return;
  }
  perception::MarkerObservation obs;
  obs.marker_id = d.active_step;
  obs.corners = *corners;
  d.observation = obs;
  d.detect_attempts = 0;
  json pts = json::array();
  for (const auto& p : *corners) {
    pts.push_back({p.x(), p.y()});
  }
  c.emit("marker_detected", {{"c", *w.threshold.optimal_c}, {"frame", frame_number}, {"corners", pts}});
  c.go(Phase::EstimatePose);
}

void on_estimate(Ctx& c) {
  auto& d = c.d();
  const Scenario& sc = c.sc;
  d.clock += sc.overheads.estimate;
  const Pose cam_marker = perception::estimate_marker_pose(sc.camera, d.observation->corners, sc.marker_size);
  d.observation->pose_cam_marker = cam_marker;
  const Pose world_marker = perception::compose_world_pose(sc.world_camera(), cam_marker);
  d.perceived_step = world_marker * marker_in_step().inverse();
  const Pose truth = c.w().ladder.step_pose(d.active_step, c.w().drift);
  c.emit("pose_estimated", {{"position", vec_json(d.perceived_step->translation)},
                            {"position_error", (d.perceived_step->translation - truth.translation).norm()}});
  c.go(Phase::Plan);
}

void on_plan(Ctx& c) {
  auto& d = c.d();
  if (!d.plan) {
    d.clock += c.sc.overheads.plan;
    d.plan = plan_step(c);
    c.start_motion(d.plan->transfer);
    c.emit("plan_ready", {{"pregrasp", vec_json(d.plan->pregrasp)},
                          {"grasp", vec_json(d.plan->grasp)},
                          {"deployed", vec_json(d.plan->deployed)},
                          {"strategy", to_string(c.sc.strategy)},
                          {"samples",
                           {motion_size(d.plan->transfer), motion_size(d.plan->first_axis),
                            motion_size(d.plan->second_axis), motion_size(d.plan->lift)}}});
    return;
  }
  if (!c.motion_done()) {
    c.step_motion(false);
    return;
  }
  c.go(d.plan->first_phase);
  c.start_motion(d.plan->first_axis);
}

void on_axis(Ctx& c) {
  auto& d = c.d();
  if (!c.motion_done()) {
    c.step_motion(false);
    return;
  }
  if (d.phase == d.plan->first_phase) {
    c.go(d.plan->second_phase);
    c.start_motion(d.plan->second_axis);
  } else {
    d.motion.reset();
    c.go(Phase::Grasp);
  }
}

void on_grasp(Ctx& c) {
  auto& d = c.d();
  d.clock += c.sc.overheads.grasp;
  c.regulate(c.w().wrist.force.norm());
  c.emit("grip", {{"force", c.w().grip_command}, {"regrasp", d.regrasp}});
  if (d.regrasp) {
    d.regrasp = false;
    d.lift_elapsed = 0.0;
    c.w().ft_window.clear();
    c.go(Phase::LiftZ);
  } else {
    c.go(Phase::UpdatePayload);
  }
}

void on_update_payload(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  d.clock += c.sc.overheads.update_payload;
  w.payload = payload::update_mass(w.payload, c.sc.ladder.step_mass, w.tool_position);
  c.emit("payload_updated",
         {{"m_dynamic", w.payload.m_dynamic}, {"com", vec_json(w.payload.com)}, {"inertia", w.payload.inertia}});
  d.lift_elapsed = 0.0;
  w.ft_window.clear();
  c.go(Phase::LiftZ);
  c.start_motion(d.plan->lift);
}

void abort_lift(Ctx& c, const std::string& why) {
  auto& d = c.d();
  if (d.retry_count >= c.sc.max_retries) {
    c.fault(std::nullopt, "lift aborted " + std::to_string(d.retry_count + 1) + " times: " + why);
    return;
  }
  ++d.retry_count;
  d.regrasp = true;
  c.go(Phase::Grasp);
}

void on_lift(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  const Scenario& sc = c.sc;
  if (d.answered) {
    const auto verdict = d.answered->verdict;
    d.answered.reset();
    w.ft_window.clear();
    if (verdict == Verdict::Reject) {
      abort_lift(c, "operator rejected anomaly override");
      return;
    }
  }
  if (c.motion_done()) {
    const int k = d.active_step;
    w.ladder.locks[k] = StepLock::Lifted;
    w.ladder.lifted_height[k] = w.tool_position.z();
    c.emit("lifted", {{"height", w.tool_position.z()}, {"residual", w.ladder.residual(k, w.drift)}});
    c.go(Phase::AwaitLockConfirm);
    return;
  }
  if (c.step_motion(true) <= 0.0) {
    return;
  }
  double extra = 0.0;
  if (sc.anomaly.step == d.active_step && !d.anomaly_injected && d.lift_elapsed >= sc.anomaly.lift_time) {
    d.anomaly_injected = true;
    extra = sc.anomaly.force;
  }
  c.update_wrist(true, extra);
  c.regulate(w.wrist.force.norm());
  w.ft_window.push_back(w.wrist);
  if (static_cast<int>(w.ft_window.size()) > sc.anomaly_window) {
    w.ft_window.erase(w.ft_window.begin());
  }
  if (w.ft_window.size() >= 2 && payload::detect_anomaly(w.ft_window, sc.anomaly_rate)) {
    const double rate = payload::max_force_rate(w.ft_window);
    c.emit("anomaly", {{"rate", rate}, {"threshold", sc.anomaly_rate}});
    if (c.s.mode == Mode::Hitl) {
      c.raise(PromptKind::ApproveAnomalyOverride).context["rate"] = rate;
      return;
    }
    abort_lift(c, "force rate " + std::to_string(rate) + " N/s");
  }
}

void on_await_lock(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  const int k = d.active_step;
  if (!d.pending_prompt && !d.answered) {
    const auto& p = c.raise(PromptKind::ConfirmLock);
    if (c.s.mode == Mode::Autonomous) {
      const bool ok = lock_oracle(w.ladder, k, w.drift);
      c.resolve({p.id, ok ? Verdict::Confirm : Verdict::Reject, std::nullopt}, true);
    } else {
      return;
    }
  }
  if (!d.answered) {
    return;
  }
  const Verdict verdict = d.answered->verdict;
  d.answered.reset();
  d.clock += c.sc.overheads.lock_confirm;
  if (verdict == Verdict::Confirm) {
    w.ladder.locks[k] = StepLock::Locked;
    c.emit("lock", {{"residual", w.ladder.residual(k, w.drift)}, {"tilt", w.drift.tilt}});
    c.go(Phase::StepComplete);
    return;
  }
  c.emit("lock_rejected", {{"retry", d.retry_count}, {"residual", w.ladder.residual(k, w.drift)}});
  if (d.retry_count >= c.sc.max_retries) {
    c.fault(std::nullopt, "lock not confirmed after " + std::to_string(d.retry_count) + " adjustments");
    return;
  }
  ++d.retry_count;
  d.adjust_started = false;
  c.go(Phase::AdjustPose);
}

void on_adjust(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  const Scenario& sc = c.sc;
  const int k = d.active_step;
  if (!d.adjust_started) {
    bool automatic = true;
    if (c.s.mode == Mode::Hitl) {
      if (!d.answered) {
        if (!d.pending_prompt) {
          c.raise(PromptKind::ManualJog);
        }
        return;
      }
      automatic = d.answered->verdict == Verdict::Confirm;
    }
    d.answered.reset();
    const Vec3 nudge(0.0, 0.0, automatic ? -w.ladder.residual(k, w.drift) : 0.0);
    const Vec3 jog = d.pending_jog;
    d.pending_jog = Vec3::Zero();
    const Vec3 target = w.tool_position + nudge + jog;
    JointConfig q = w.q;
    const auto plan = planner::decompose_smp(w.tool_position, target, sc.smp_order, sc.smp_speed);
    c.start_motion(cartesian_motion(plan, d.plan->tool_rotation, q, sc, make_scene(sc, w)));
    d.adjust_started = true;
    c.emit("adjust", {{"nudge", vec_json(nudge)}, {"jog", vec_json(jog)}, {"target", vec_json(target)}});
    return;
  }
  if (!c.motion_done()) {
    c.step_motion(true);
    c.update_wrist(true);
    return;
  }
  w.ladder.lifted_height[k] = w.tool_position.z();
  d.adjust_started = false;
  c.go(Phase::AwaitLockConfirm);
}

void on_step_complete(Ctx& c) {
  auto& d = c.d();
  auto& w = c.w();
  d.clock += c.sc.overheads.step_complete;
  w.grip_command = 0.0;
  c.commands.push_back({Command::Kind::GripForce, w.q, 0.0});
  c.emit("step_complete", {{"step", d.active_step}, {"drift_x", w.drift.base_offset.x()}});
  d.active_step += 1;
  d.retry_count = 0;
  d.plan.reset();
  d.observation.reset();
  d.perceived_step.reset();
  d.motion.reset();
  d.motion_loaded = false;
  w.tool_velocity = Vec3::Zero();
  w.wrist = {};
  w.wrist.timestamp = d.clock;
  if (d.active_step >= w.ladder.step_count()) {
    c.go(Phase::Done);
    c.emit("done", {{"steps_deployed", d.active_step}});
  } else {
    c.go(Phase::Home);
  }
}

void consume_inbox(Ctx& c, std::span<const InboxItem> inbox) {
  auto& d = c.d();
  for (const auto& item : inbox) {
    switch (item.kind) {
      case InboxItem::Kind::Pause:
        d.paused = true;
        c.emit("paused");
        break;
      case InboxItem::Kind::Resume:
        d.paused = false;
        c.emit("resumed");
        break;
      case InboxItem::Kind::Jog:
        try {
          validate_jog(item.jog);
          if (!jog_allowed(d.phase, d.paused)) {
            throw Error(ErrorCode::NotPaused, "jog only while paused or awaiting lock confirmation");
          }
          d.pending_jog += item.jog;
          c.emit("jog_queued", {{"jog", vec_json(item.jog)}, {"pending", vec_json(d.pending_jog)}});
        } catch (const Error& e) {
          c.emit("error", {{"code", to_string(e.code())}, {"message", e.what()}});
        }
        break;
      case InboxItem::Kind::Response: {
        const auto& r = item.response;
        if (!d.pending_prompt || d.pending_prompt->id != r.prompt_id) {
          c.emit("error", {{"code", to_string(ErrorCode::UnknownPrompt)}, {"prompt_id", r.prompt_id}});
          break;
        }
        if (r.jog) {
          try {
            validate_jog(*r.jog);
            d.pending_jog += *r.jog;
          } catch (const Error& e) {
            c.emit("error", {{"code", to_string(e.code())}, {"message", e.what()}});
          }
        }
        c.resolve(r, false);
        break;
      }
    }
  }
}

}  // namespace

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Home: return "Home";
    case Phase::DetectMarker: return "DetectMarker";
    case Phase::EstimatePose: return "EstimatePose";
    case Phase::Plan: return "Plan";
    case Phase::AlignY: return "AlignY";
    case Phase::ApproachX: return "ApproachX";
    case Phase::Grasp: return "Grasp";
    case Phase::UpdatePayload: return "UpdatePayload";
    case Phase::LiftZ: return "LiftZ";
    case Phase::AwaitLockConfirm: return "AwaitLockConfirm";
    case Phase::AdjustPose: return "AdjustPose";
    case Phase::StepComplete: return "StepComplete";
    case Phase::Done: return "Done";
    case Phase::Fault: return "Fault";
  }
  return "?";
}

Phase parse_phase(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Phase::Fault); ++i) {
    if (s == to_string(static_cast<Phase>(i))) {
      return static_cast<Phase>(i);
    }
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown phase '" + s + "'");
}

bool is_allowed_transition(Phase from, Phase to) {
  if (to == Phase::Fault) {
    return from != Phase::Done && from != Phase::Fault;
  }
  switch (from) {
    case Phase::Home: return to == Phase::DetectMarker;
    case Phase::DetectMarker: return to == Phase::EstimatePose;
    case Phase::EstimatePose: return to == Phase::Plan;
    case Phase::Plan: return to == Phase::AlignY || to == Phase::ApproachX;
    case Phase::AlignY: return to == Phase::ApproachX || to == Phase::Grasp;
    case Phase::ApproachX: return to == Phase::AlignY || to == Phase::Grasp;
    case Phase::Grasp: return to == Phase::UpdatePayload || to == Phase::LiftZ;
    case Phase::UpdatePayload: return to == Phase::LiftZ;
    case Phase::LiftZ: return to == Phase::AwaitLockConfirm || to == Phase::Grasp;
    case Phase::AwaitLockConfirm: return to == Phase::StepComplete || to == Phase::AdjustPose;
    case Phase::AdjustPose: return to == Phase::AwaitLockConfirm;
    case Phase::StepComplete: return to == Phase::Home || to == Phase::Done;
    case Phase::Done:
    case Phase::Fault: return false;
  }
  return false;
}

const char* to_string(StepLock s) {
  switch (s) {
    case StepLock::Stowed: return "Stowed";
    case StepLock::Lifted: return "Lifted";
    case StepLock::Locked: return "Locked";
    case StepLock::Failed: return "Failed";
  }
  return "?";
}

LadderModel LadderModel::from_geometry(const LadderGeometry& g) {
  LadderModel m;
  m.nominal_base = Pose::from_translation(g.base_position);
  m.geometry = g;
  m.locks.assign(g.step_count, StepLock::Stowed);
  m.lifted_height.assign(g.step_count, 0.0);
  return m;
}

Pose LadderModel::base(const terrain::DriftState& drift) const {
  return nominal_base * terrain::drift_offset(drift);
}

Pose LadderModel::step_pose(int k, const terrain::DriftState& drift) const {
  const Vec3 handle(-geometry.grasp_setback, 0.0, geometry.stow_height + k * geometry.stow_pitch);
  return base(drift) * Pose::from_translation(handle);
}

double LadderModel::required_height(int k) const {
  return geometry.stow_height + k * geometry.stow_pitch + geometry.lift_height;
}

double LadderModel::residual(int k, const terrain::DriftState& drift) const {
  return lifted_height[k] - base(drift).translation.z() - required_height(k);
}

bool lock_oracle(const LadderModel& ladder, int step, const terrain::DriftState& drift) {
  if (step < 0 || step >= ladder.step_count() || ladder.locks[step] != StepLock::Lifted) {
    throw Error(ErrorCode::IllegalTransition, "lock check on a step that is not lifted");
  }
  return drift.tilt < ladder.geometry.tilt_threshold &&
         std::abs(ladder.residual(step, drift)) < ladder.geometry.lock_tolerance;
}

const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::ConfirmLock: return "ConfirmLock";
    case PromptKind::ApproveAnomalyOverride: return "ApproveAnomalyOverride";
    case PromptKind::ManualJog: return "ManualJog";
  }
  return "?";
}

const char* to_string(Verdict v) {
  return v == Verdict::Confirm ? "Confirm" : "Reject";
}

PromptKind parse_prompt_kind(const std::string& s) {
  for (auto k : {PromptKind::ConfirmLock, PromptKind::ApproveAnomalyOverride, PromptKind::ManualJog}) {
    if (s == to_string(k)) {
      return k;
    }
  }
  throw Error(ErrorCode::ProtocolViolation, "unknown prompt kind '" + s + "'");
}

Verdict parse_verdict(const std::string& s) {
  if (s == "Confirm") return Verdict::Confirm;
  if (s == "Reject") return Verdict::Reject;
  throw Error(ErrorCode::ProtocolViolation, "verdict must be Confirm or Reject, got '" + s + "'");
}

void validate_jog(const Vec3& v) {
  if (!v.allFinite()) {
    throw Error(ErrorCode::ProtocolViolation, "jog vector must be finite");
  }
  if (v.norm() > kMaxJog) {
    throw Error(ErrorCode::JogTooLarge, "jog of " + std::to_string(v.norm()) + " m exceeds 0.02 m");
  }
  if ((v.array() != 0.0).count() > 1) {
    throw Error(ErrorCode::ProtocolViolation, "jog must move along a single axis");
  }
}

bool jog_allowed(Phase phase, bool paused) {
  return paused || phase == Phase::AwaitLockConfirm || phase == Phase::AdjustPose;
}

json to_json(const Event& e) {
  return {{"t", e.t}, {"phase", to_string(e.phase)}, {"step", e.step}, {"kind", e.kind}, {"payload", e.payload}};
}

EpisodeState initial_state(const Scenario& scenario, Mode mode, std::uint64_t seed) {
  scenario.validate();
  EpisodeState s;
  s.mode = mode;
  s.seed = seed;
  s.terrain = scenario.terrain;
  s.terrain.rng_seed = derive_seed(scenario.terrain.rng_seed ^ seed, 4);
  auto& w = s.world;
  try {
    w.q_home = kinematics::inverse_kinematics(scenario.arm, Pose{rot_y(M_PI / 2), scenario.home_position}, ik_seed());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("home position is not reachable: ") + e.what());
  }
  w.q = w.q_home;
  w.tool_position = kinematics::forward_kinematics(scenario.arm, w.q).translation;
  w.ladder = LadderModel::from_geometry(scenario.ladder);
  w.payload = payload::make_payload(scenario.gripper_tare, w.tool_position, scenario.arm.payload_capacity);
  w.threshold.window = scenario.fine_window;
  return s;
}

bool awaiting_operator(const EpisodeState& s) {
  return s.deploy.pending_prompt.has_value() && !finished(s);
}

TickResult tick(const EpisodeState& state, std::span<const InboxItem> inbox, const Scenario& scenario) {
  TickResult out{state, {}, {}};
  Ctx c{scenario, out.state, out.events, out.commands};
  auto& d = out.state.deploy;
  ++d.tick_count;
  consume_inbox(c, inbox);
  if (d.paused || finished(out.state)) {
    return out;
  }
  if (d.pending_prompt) {
    return out;  // the clock waits for the operator
  }
  try {
    switch (d.phase) {
      case Phase::Home: on_home(c); break;
      case Phase::DetectMarker: on_detect(c); break;
      case Phase::EstimatePose: on_estimate(c); break;
      case Phase::Plan: on_plan(c); break;
      case Phase::AlignY:
      case Phase::ApproachX: on_axis(c); break;
      case Phase::Grasp: on_grasp(c); break;
      case Phase::UpdatePayload: on_update_payload(c); break;
      case Phase::LiftZ: on_lift(c); break;
      case Phase::AwaitLockConfirm: on_await_lock(c); break;
      case Phase::AdjustPose: on_adjust(c); break;
      case Phase::StepComplete: on_step_complete(c); break;
      case Phase::Done:
      case Phase::Fault: break;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IllegalTransition) {
      throw;
    }
    c.fault(e.code(), e.what());
  }
  return out;
}

perception::Frame camera_frame(const EpisodeState& s, const Scenario& scenario, int frame_number) {
  const Pose step = s.world.ladder.step_pose(s.deploy.active_step, s.world.drift);
  const Pose cam_marker = scenario.world_camera().inverse() * step * marker_in_step();
  return perception::render_frame(scenario.camera, cam_marker, scenario.marker_size, scenario.illumination,
                                  derive_seed(s.seed, 1, static_cast<std::uint64_t>(frame_number)), frame_number);
}

TrajectoryRow trajectory_row(const EpisodeState& s) {
  return {s.deploy.clock,
          s.world.tool_position,
          s.world.q,
          s.world.wrist.force,
          s.world.wrist.torque,
          s.world.drift.base_offset.x(),
          s.world.drift.sink_depth,
          s.deploy.phase,
          s.deploy.active_step};
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "Success";
    case Outcome::Partial: return "Partial";
    case Outcome::Fault: return "Fault";
  }
  return "?";
}

EpisodeReport make_report(const EpisodeState& s) {
  EpisodeReport r;
  const auto& locks = s.world.ladder.locks;
  r.steps_deployed = static_cast<int>(std::count(locks.begin(), locks.end(), StepLock::Locked));
  r.elapsed = s.deploy.clock;
  r.drift_total = s.world.drift.base_offset.norm();
  r.hitl_events = s.deploy.hitl_events;
  r.ticks = s.deploy.tick_count;
  r.fault_reason = s.deploy.fault_reason;
  r.final_phase = s.deploy.phase;
  if (r.steps_deployed == static_cast<int>(locks.size())) {
    r.outcome = Outcome::Success;
  } else if (r.steps_deployed > 0) {
    r.outcome = Outcome::Partial;
  } else {
    r.outcome = Outcome::Fault;
  }
  return r;
}

json to_json(const EpisodeReport& r) {
  return {{"steps_deployed", r.steps_deployed}, {"elapsed", r.elapsed},         {"drift_total", r.drift_total},
          {"hitl_events", r.hitl_events},       {"outcome", to_string(r.outcome)}, {"ticks", r.ticks},
          {"fault_reason", r.fault_reason},     {"final_phase", to_string(r.final_phase)}};
}

Operator scripted_operator(std::vector<Verdict> verdicts) {
  auto script = std::make_shared<std::vector<Verdict>>(std::move(verdicts));
  auto next = std::make_shared<std::size_t>(0);
  return [script, next](const HitlPrompt& p, const EpisodeState&) {
    const Verdict v = *next < script->size() ? (*script)[*next] : Verdict::Confirm;
    ++*next;
    return HitlResponse{p.id, v, std::nullopt};
  };
}

EpisodeResult run_episode(const Scenario& scenario, Mode mode, std::uint64_t seed, const Operator& op) {
  EpisodeResult result;
  EpisodeState state = initial_state(scenario, mode, seed);
  result.trajectory.push_back(trajectory_row(state));
  while (!finished(state) && state.deploy.tick_count < scenario.max_ticks) {
    std::vector<InboxItem> inbox;
    if (awaiting_operator(state)) {
      const auto& prompt = *state.deploy.pending_prompt;
      inbox.push_back(InboxItem::make_response(op ? op(prompt, state) : HitlResponse{prompt.id, Verdict::Confirm, {}}));
    }
    const double before = state.deploy.clock;
    auto r = tick(state, inbox, scenario);
    state = std::move(r.state);
    result.events.insert(result.events.end(), std::make_move_iterator(r.events.begin()),
                         std::make_move_iterator(r.events.end()));
    if (state.deploy.clock > before) {
      result.trajectory.push_back(trajectory_row(state));
    }
  }
  if (!finished(state)) {
    state.deploy.fault_reason = "tick budget of " + std::to_string(scenario.max_ticks) + " exhausted";
    result.events.push_back({state.deploy.clock, state.deploy.phase, state.deploy.active_step, "fault",
                             {{"code", "None"}, {"reason", state.deploy.fault_reason}}});
    state.deploy.phase = Phase::Fault;
  }
  result.report = make_report(state);
  return result;
}

void write_event_log(std::ostream& out, std::span<const Event> events) {
  for (const auto& e : events) {
    out << to_json(e).dump() << '\n';
  }
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows) {
  out << "t,x,y,z,q1,q2,q3,q4,q5,q6,fx,fy,fz,tx,ty,tz,drift_x,sink_depth,phase,step\n";
  const auto old = out.precision(12);
  for (const auto& r : rows) {
    out << r.t << ',' << r.tool.x() << ',' << r.tool.y() << ',' << r.tool.z();
    for (int i = 0; i < kinematics::kJointCount; ++i) {
      out << ',' << r.q[i];
    }
    out << ',' << r.force.x() << ',' << r.force.y() << ',' << r.force.z() << ',' << r.torque.x() << ','
        << r.torque.y() << ',' << r.torque.z() << ',' << r.drift_x << ',' << r.sink_depth << ','
        << to_string(r.phase) << ',' << r.step << '\n';
  }
  out.precision(old);
}

std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in) {
  std::vector<TrajectoryRow> rows;
  std::string line;
  if (!std::getline(in, line)) {
    return rows;
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() != 20) {
      throw Error(ErrorCode::ConfigInvalid, "trajectory line " + std::to_string(lineno) + " has " +
                                                std::to_string(cells.size()) + " columns, expected 20");
    }
    try {
      std::vector<double> v;
      for (int i = 0; i < 18; ++i) {
        v.push_back(std::stod(cells[i]));
      }
      TrajectoryRow r;
      r.t = v[0];
      r.tool = {v[1], v[2], v[3]};
      for (int i = 0; i < 6; ++i) {
        r.q[i] = v[4 + i];
      }
      r.force = {v[10], v[11], v[12]};
      r.torque = {v[13], v[14], v[15]};
      r.drift_x = v[16];
      r.sink_depth = v[17];
      r.phase = parse_phase(cells[18]);
      r.step = std::stoi(cells[19]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ConfigInvalid, "trajectory line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return rows;
}

}  // namespace ladderbot::deployment

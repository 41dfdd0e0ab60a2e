#include "ladderbot/planner.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "ladderbot/errors.hpp"

namespace ladderbot::planner {
namespace {

bool boxes_overlap(const Vec3& amin, const Vec3& amax, const Box& b) {
  return (amin.array() <= b.max.array()).all() && (b.min.array() <= amax.array()).all();
}

std::array<Vec3, kinematics::kJointCount + 1> link_points(const ArmParams& params, const JointConfig& q) {
  const auto frames = kinematics::joint_frames(params, q);
  std::array<Vec3, kinematics::kJointCount + 1> pts;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    pts[i] = frames[i].translation;
  }
  return pts;
}

}  // namespace

void SceneGeometry::validate() const {
  for (const auto& b : obstacles) {
    if (!(b.min.array() <= b.max.array()).all()) {
      throw Error(ErrorCode::ConfigInvalid, "obstacle box has min > max");
    }
  }
  if (!(link_radius >= 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "link radius must be non-negative");
  }
}

void RRTParams::validate() const {
  if (!(step_size > 0.0) || !(goal_bias >= 0.0 && goal_bias <= 1.0) || max_iterations < 1 ||
      !(goal_tolerance >= 0.0) || !(edge_resolution > 0.0) || !(edge_margin >= 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "invalid RRT parameters");
  }
}

double point_box_distance(const Vec3& p, const Box& box) {
  const Vec3 clamped = p.cwiseMax(box.min).cwiseMin(box.max);
  return (p - clamped).norm();
}

double segment_box_distance(const Vec3& a, const Vec3& b, const Box& box) {
  // Distance to a convex set is convex along the segment, so golden-section
  // search converges to the global minimum.
  constexpr double kInvPhi = 0.6180339887498949;
  auto f = [&](double t) { return point_box_distance(a + t * (b - a), box); };
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < 60 && hi - lo > 1e-12; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(0.0), f(1.0)});
}

bool collision_check(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q) {
  return collision_check(scene, params, q, 0.0);
}

bool collision_check(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q, double margin) {
  const auto pts = link_points(params, q);
  if (pts.back().z() < scene.ground_z) {
    return true;
  }
  const double r = scene.link_radius + margin;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec3& a = pts[i];
    const Vec3& b = pts[i + 1];
    const Vec3 lo = a.cwiseMin(b).array() - r;
    const Vec3 hi = a.cwiseMax(b).array() + r;
    for (const auto& box : scene.obstacles) {
      if (!boxes_overlap(lo, hi, box)) {
        continue;
      }
      if (segment_box_distance(a, b, box) <= r) {
        return true;
      }
    }
  }
  return false;
}

double joint_distance(const JointConfig& a, const JointConfig& b) {
  return (a.angles - b.angles).norm();
}

bool edge_free(const SceneGeometry& scene, const ArmParams& params, const JointConfig& a, const JointConfig& b,
               const RRTParams& rrt) {
  const double l1 = (b.angles - a.angles).cwiseAbs().sum();
  const int n = std::max(1, static_cast<int>(std::ceil(l1 / rrt.edge_resolution)));
  for (int k = 0; k <= n; ++k) {
    const double s = static_cast<double>(k) / n;
    const JointConfig q{a.angles + s * (b.angles - a.angles)};
    if (collision_check(scene, params, q, rrt.edge_margin)) {
      return false;
    }
  }
  return true;
}

Path rrt_plan(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q_init,
              const JointConfig& q_goal, const RRTParams& rrt) {
  rrt.validate();
  for (const auto* q : {&q_init, &q_goal}) {
    if (!kinematics::check_limits(params, *q) || collision_check(scene, params, *q)) {
      throw Error(ErrorCode::InvalidEndpoint, q == &q_init ? "start configuration is in collision or out of limits"
                                                           : "goal configuration is in collision or out of limits");
    }
  }
  if (joint_distance(q_init, q_goal) <= rrt.goal_tolerance) {
    return {{q_init}, 0.0};
  }

  std::vector<kinematics::JointVector> nodes{q_init.angles};
  std::vector<int> parent{-1};
  std::mt19937_64 rng(rrt.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto finish = [&](int last) {
    Path path;
    for (int i = last; i >= 0; i = parent[i]) {
      path.waypoints.push_back(JointConfig{nodes[i]});
    }
    std::reverse(path.waypoints.begin(), path.waypoints.end());
    for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
      path.total_length += joint_distance(path.waypoints[i - 1], path.waypoints[i]);
    }
    return path;
  };

  for (int iter = 0; iter < rrt.max_iterations; ++iter) {
    kinematics::JointVector sample;
    if (unit(rng) < rrt.goal_bias) {
      sample = q_goal.angles;
    } else {
      for (int j = 0; j < kinematics::kJointCount; ++j) {
        const auto& dh = params.joints[j];
        sample[j] = dh.lower + unit(rng) * (dh.upper - dh.lower);
      }
    }
    int nearest = 0;
    double best = (nodes[0] - sample).squaredNorm();
    for (int i = 1; i < static_cast<int>(nodes.size()); ++i) {
      const double d = (nodes[i] - sample).squaredNorm();
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    const double d = std::sqrt(best);
    if (d == 0.0) {
      continue;
    }
    const kinematics::JointVector step =
        d <= rrt.step_size ? sample : kinematics::JointVector(nodes[nearest] + (rrt.step_size / d) * (sample - nodes[nearest]));
    const JointConfig q_new{step};
    if (!kinematics::check_limits(params, q_new) || !edge_free(scene, params, JointConfig{nodes[nearest]}, q_new, rrt)) {
      continue;
    }
    nodes.push_back(step);
    parent.push_back(nearest);
    const int added = static_cast<int>(nodes.size()) - 1;
    const double to_goal = (step - q_goal.angles).norm();
    if (to_goal == 0.0) {
      return finish(added);
    }
    if (to_goal <= rrt.step_size && edge_free(scene, params, q_new, q_goal, rrt)) {
      nodes.push_back(q_goal.angles);
      parent.push_back(added);
      return finish(added + 1);
    }
  }
  throw Error(ErrorCode::GoalUnreachable,
              "RRT exhausted " + std::to_string(rrt.max_iterations) + " iterations without reaching the goal");
}

char axis_name(Axis a) {
  return "XYZ"[static_cast<int>(a)];
}

AxisOrder parse_axis_order(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '-' || c == '>') {
      continue;
    }
    s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (s.size() != 3) {
    throw Error(ErrorCode::ConfigInvalid, "axis order must name three axes: " + std::string(text));
  }
  AxisOrder order{};
  std::array<bool, 3> seen{};
  for (int i = 0; i < 3; ++i) {
    const auto pos = std::string_view("XYZ").find(s[i]);
    if (pos == std::string_view::npos || seen[pos]) {
      throw Error(ErrorCode::ConfigInvalid, "axis order must be a permutation of X, Y, Z: " + std::string(text));
    }
    seen[pos] = true;
    order[i] = static_cast<Axis>(pos);
  }
  return order;
}

std::string to_string(const AxisOrder& order) {
  return {axis_name(order[0]), axis_name(order[1]), axis_name(order[2])};
}

SMPPlan decompose_smp(const Vec3& current, const Vec3& target, const AxisOrder& order, double speed) {
  if (!(speed > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "SMP speed must be positive");
  }
  SMPPlan plan;
  plan.speed = speed;
  Vec3 at = current;
  for (Axis a : order) {
    Vec3 next = at;
    next[static_cast<int>(a)] = target[static_cast<int>(a)];
    plan.segments.push_back({a, at, next});
    at = next;
  }
  return plan;
}

std::vector<TrajectorySample> time_parameterize(const SMPPlan& plan, double dt) {
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "time step must be positive");
  }
  if (!(plan.speed > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "SMP speed must be positive");
  }
  std::vector<TrajectorySample> out;
  double t0 = 0.0;
  for (int s = 0; s < static_cast<int>(plan.segments.size()); ++s) {
    const auto& seg = plan.segments[s];
    const int axis = static_cast<int>(seg.axis);
    const double signed_len = seg.end[axis] - seg.start[axis];
    const double len = std::abs(signed_len);
    if (len == 0.0) {
      out.push_back({t0, seg.start, Vec3::Zero(), s});
      continue;
    }
    const double duration = len / plan.speed;
    const int n = static_cast<int>(std::ceil(len / (plan.speed * dt)));
    Vec3 velocity = Vec3::Zero();
    velocity[axis] = std::copysign(plan.speed, signed_len);
    for (int k = 0; k <= n; ++k) {
      const double t = std::min(k * dt, duration);
      Vec3 p = seg.start;
      p[axis] = k == n ? seg.end[axis] : seg.start[axis] + velocity[axis] * t;
      out.push_back({t0 + t, p, velocity, s});
    }
    t0 += duration;
  }
  return out;
}

nlohmann::json to_json(const Path& path) {
  nlohmann::json waypoints = nlohmann::json::array();
  for (const auto& q : path.waypoints) {
    waypoints.push_back(std::vector<double>(q.angles.data(), q.angles.data() + kinematics::kJointCount));
  }
  return {{"waypoints", waypoints}, {"total_length", path.total_length}};
}

nlohmann::json to_json(const SMPPlan& plan) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : plan.segments) {
    segments.push_back({{"axis", std::string(1, axis_name(s.axis))},
                        {"start", {s.start.x(), s.start.y(), s.start.z()}},
                        {"end", {s.end.x(), s.end.y(), s.end.z()}}});
  }
  return {{"speed", plan.speed}, {"segments", segments}};
}

Path path_from_json(const nlohmann::json& j) {
  try {
    Path p;
    for (const auto& w : j.at("waypoints")) {
      const auto v = w.get<std::vector<double>>();
      if (v.size() != kinematics::kJointCount) {
        throw Error(ErrorCode::ConfigInvalid, "waypoint needs 6 joint angles");
      }
      JointConfig q;
      for (int i = 0; i < kinematics::kJointCount; ++i) {
        q.angles[i] = v[i];
      }
      p.waypoints.push_back(q);
    }
    p.total_length = j.at("total_length").get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("bad path document: ") + e.what());
  }
}

SMPPlan smp_plan_from_json(const nlohmann::json& j) {
  try {
    SMPPlan plan;
    plan.speed = j.at("speed").get<double>();
    for (const auto& s : j.at("segments")) {
      const auto name = s.at("axis").get<std::string>();
      const auto pos = name.size() == 1 ? std::string_view("XYZ").find(name[0]) : std::string_view::npos;
      if (pos == std::string_view::npos) {
        throw Error(ErrorCode::ConfigInvalid, "segment axis must be X, Y or Z");
      }
      auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        if (v.size() != 3) {
          throw Error(ErrorCode::ConfigInvalid, "segment point needs 3 coordinates");
        }
        return Vec3(v[0], v[1], v[2]);
      };
      plan.segments.push_back({static_cast<Axis>(pos), vec(s.at("start")), vec(s.at("end"))});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("bad SMP plan document: ") + e.what());
  }
}

}  // namespace ladderbot::planner

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ladderbot/kinematics.hpp"

namespace ladderbot::planner {

using kinematics::ArmParams;
using kinematics::JointConfig;

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct SceneGeometry {
  std::vector<Box> obstacles;
  double ground_z = -0.02;     ///< the tool may not dip below this plane (m)
  double link_radius = 0.06;   ///< capsule radius per link (m)

  void validate() const;
};

double point_box_distance(const Vec3& p, const Box& box);
/// Minimum distance between segment [a, b] and a box; 0 when they touch.
double segment_box_distance(const Vec3& a, const Vec3& b, const Box& box);

/// Link capsules are the segments between consecutive joint frame origins.
bool collision_check(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q);
/// Same test with the capsule radius widened by `margin`.
bool collision_check(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q, double margin);

struct RRTParams {
  double step_size = 0.1;        ///< rad
  double goal_bias = 0.1;
  int max_iterations = 20000;
  std::uint64_t rng_seed = 0;
  double goal_tolerance = 0.02;  ///< rad
  /// Edge checks are spaced at most this far apart in summed joint motion (rad).
  double edge_resolution = 0.004;
  /// Extra capsule radius while checking edges, covering motion between checks (m).
  double edge_margin = 0.005;

  void validate() const;
};

struct Path {
  std::vector<JointConfig> waypoints;
  double total_length = 0.0;  ///< sum of Euclidean joint-space distances (rad)
};

double joint_distance(const JointConfig& a, const JointConfig& b);

/// True iff the straight joint-space edge stays clear at the configured resolution and margin.
bool edge_free(const SceneGeometry& scene, const ArmParams& params, const JointConfig& a, const JointConfig& b,
               const RRTParams& rrt);

/// Basic RRT in joint space. The goal is appended exactly once a tree node
/// lies within one step of it with a clear connecting edge.
Path rrt_plan(const SceneGeometry& scene, const ArmParams& params, const JointConfig& q_init,
              const JointConfig& q_goal, const RRTParams& rrt);

enum class Axis { X = 0, Y = 1, Z = 2 };
using AxisOrder = std::array<Axis, 3>;

char axis_name(Axis a);
/// Parses strings like "YXZ". Throws ConfigInvalid unless a permutation of X, Y, Z.
AxisOrder parse_axis_order(std::string_view text);
std::string to_string(const AxisOrder& order);

struct SmpSegment {
  Axis axis = Axis::X;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
};

struct SMPPlan {
  std::vector<SmpSegment> segments;
  double speed = 0.02;  ///< m/s
};

/// Always three single-axis segments, zero-length ones included.
SMPPlan decompose_smp(const Vec3& current, const Vec3& target, const AxisOrder& order, double speed = 0.02);

struct TrajectorySample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  int segment = 0;
};

/// Constant-speed sampling. Each non-degenerate segment gets
/// ceil(L / (speed dt)) + 1 samples, the last landing exactly on its end point.
std::vector<TrajectorySample> time_parameterize(const SMPPlan& plan, double dt);

nlohmann::json to_json(const Path& path);
nlohmann::json to_json(const SMPPlan& plan);
Path path_from_json(const nlohmann::json& j);
SMPPlan smp_plan_from_json(const nlohmann::json& j);

}  // namespace ladderbot::planner

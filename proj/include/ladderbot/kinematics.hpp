#pragma once

#include <array>
#include <filesystem>

#include "ladderbot/config.hpp"
#include "ladderbot/pose.hpp"

namespace ladderbot::kinematics {

constexpr int kJointCount = 6;

using JointVector = Eigen::Matrix<double, kJointCount, 1>;
using Jacobian = Eigen::Matrix<double, 6, kJointCount>;

/// Six joint angles in radians.
struct JointConfig {
  JointVector angles = JointVector::Zero();

  JointConfig() = default;
  explicit JointConfig(const JointVector& a) : angles(a) {}

  double operator[](int i) const { return angles[i]; }
  double& operator[](int i) { return angles[i]; }
  bool operator==(const JointConfig& other) const { return angles == other.angles; }
};

/// Standard DH parameters of one revolute joint: Rz(theta) Tz(d) Tx(a) Rx(alpha).
struct DhJoint {
  double a = 0.0;             ///< link length (m)
  double alpha = 0.0;         ///< link twist (rad)
  double d = 0.0;             ///< link offset (m)
  double theta_offset = 0.0;  ///< added to the joint angle (rad)
  double lower = -M_PI;       ///< closed limit interval after normalization (rad)
  double upper = M_PI;
};

struct ArmParams {
  std::array<DhJoint, kJointCount> joints{};
  double max_joint_speed = 1.0;   ///< rad/s
  double reach = 0.9;             ///< m
  double payload_capacity = 16.0; ///< kg

  /// 0.9 m reach, 16 kg industrial arm (UR16e published DH table).
  static ArmParams default_params();

  /// Reads `arm.a`, `arm.alpha`, `arm.d`, `arm.theta_offset`, `arm.lower`,
  /// `arm.upper` (6-element lists) plus scalar `arm.reach`,
  /// `arm.payload_capacity`, `arm.max_joint_speed`. Missing keys keep defaults.
  static ArmParams from_config(const KeyValueConfig& cfg);
  static ArmParams load(const std::filesystem::path& path);

  void validate() const;
};

/// Wraps into (-pi, pi].
double normalize_angle(double angle);
JointConfig normalized(const JointConfig& q);

/// Transform of joint frame i relative to frame i-1.
Pose joint_transform(const DhJoint& joint, double angle);

/// Frames 0..6 in the base frame; frames[0] is the base, frames[6] the tool.
std::array<Pose, kJointCount + 1> joint_frames(const ArmParams& params, const JointConfig& q);

Pose forward_kinematics(const ArmParams& params, const JointConfig& q);

/// Geometric Jacobian: rows 0..2 linear velocity (m/rad), rows 3..5 angular (rad/rad).
Jacobian jacobian(const ArmParams& params, const JointConfig& q);

double min_singular_value(const Jacobian& j);

bool check_limits(const ArmParams& params, const JointConfig& q);

struct IkOptions {
  double damping = 1e-3;
  int max_iterations = 200;
  double position_tolerance = 1e-4;     ///< m
  double orientation_tolerance = 1e-3;  ///< rad
  double singularity_floor = 1e-4;
  double max_step = 0.5;                ///< rad per iteration, per joint
};

/**
 * @brief Damped least-squares IK seeded at `seed`.
 *
 * Throws Unreachable when |target.translation| > reach, NoConvergence when the
 * iteration cap is hit outside tolerance, NearSingular when the Jacobian at
 * the solution has a singular value below the floor.
 */
JointConfig inverse_kinematics(const ArmParams& params, const Pose& target, const JointConfig& seed,
                               const IkOptions& options = {});

/// Position and orientation error between two poses (m, rad).
struct PoseError {
  double position = 0.0;
  double orientation = 0.0;
};
PoseError pose_error(const Pose& a, const Pose& b);

}  // namespace ladderbot::kinematics

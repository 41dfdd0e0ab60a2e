#include "ladderbot/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ladderbot/errors.hpp"

namespace ladderbot::kinematics {

ArmParams ArmParams::default_params() {
  ArmParams p;
  const std::array<double, kJointCount> a{0.0, -0.4784, -0.36, 0.0, 0.0, 0.0};
  const std::array<double, kJointCount> alpha{M_PI / 2, 0.0, 0.0, M_PI / 2, -M_PI / 2, 0.0};
  const std::array<double, kJointCount> d{0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655};
  for (int i = 0; i < kJointCount; ++i) {
    p.joints[i].a = a[i];
    p.joints[i].alpha = alpha[i];
    p.joints[i].d = d[i];
  }
  // Base zero faces +x (toward the work area).
  p.joints[0].theta_offset = M_PI;
  // Elbow travel stops short of folding the forearm onto the upper arm.
  p.joints[2].lower = -2.9;
  p.joints[2].upper = 2.9;
  p.max_joint_speed = 1.0;
  p.reach = 0.9;
  p.payload_capacity = 16.0;
  return p;
}

ArmParams ArmParams::from_config(const KeyValueConfig& cfg) {
  ArmParams p = default_params();
  auto read_list = [&](const std::string& key, auto setter) {
    if (!cfg.has(key)) {
      return;
    }
    const auto values = cfg.get_doubles(key, {});
    if (values.size() != kJointCount) {
      throw Error(ErrorCode::ConfigInvalid, "'" + key + "' needs exactly 6 entries");
    }
    for (int i = 0; i < kJointCount; ++i) {
      setter(p.joints[i], values[i]);
    }
  };
  read_list("arm.a", [](DhJoint& j, double v) { j.a = v; });
  read_list("arm.alpha", [](DhJoint& j, double v) { j.alpha = v; });
  read_list("arm.d", [](DhJoint& j, double v) { j.d = v; });
  read_list("arm.theta_offset", [](DhJoint& j, double v) { j.theta_offset = v; });
  read_list("arm.lower", [](DhJoint& j, double v) { j.lower = v; });
  read_list("arm.upper", [](DhJoint& j, double v) { j.upper = v; });
  p.reach = cfg.get_double("arm.reach", p.reach);
  p.payload_capacity = cfg.get_double("arm.payload_capacity", p.payload_capacity);
  p.max_joint_speed = cfg.get_double("arm.max_joint_speed", p.max_joint_speed);
  p.validate();
  return p;
}

ArmParams ArmParams::load(const std::filesystem::path& path) {
  return from_config(KeyValueConfig::load(path));
}

void ArmParams::validate() const {
  if (!(reach > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "arm reach must be positive");
  }
  if (!(payload_capacity > 0.0) || !(max_joint_speed > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "arm payload capacity and joint speed must be positive");
  }
  for (int i = 0; i < kJointCount; ++i) {
    if (!(joints[i].lower <= joints[i].upper)) {
      throw Error(ErrorCode::ConfigInvalid, "joint " + std::to_string(i + 1) + " has lower > upper");
    }
  }
}

double normalize_angle(double angle) {
  double wrapped = std::remainder(angle, 2.0 * M_PI);  // [-pi, pi]
  if (wrapped <= -M_PI) {
    wrapped += 2.0 * M_PI;
  }
  return wrapped;
}

JointConfig normalized(const JointConfig& q) {
  JointConfig out;
  for (int i = 0; i < kJointCount; ++i) {
    out[i] = normalize_angle(q[i]);
  }
  return out;
}

Pose joint_transform(const DhJoint& joint, double angle) {
  const double theta = angle + joint.theta_offset;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double ca = std::cos(joint.alpha);
  const double sa = std::sin(joint.alpha);
  Pose t;
  t.rotation << ct, -st * ca, st * sa,
                st, ct * ca, -ct * sa,
                0.0, sa, ca;
  t.translation << joint.a * ct, joint.a * st, joint.d;
  return t;
}

std::array<Pose, kJointCount + 1> joint_frames(const ArmParams& params, const JointConfig& q) {
  std::array<Pose, kJointCount + 1> frames;
  frames[0] = Pose::identity();
  for (int i = 0; i < kJointCount; ++i) {
    frames[i + 1] = frames[i] * joint_transform(params.joints[i], q[i]);
  }
  return frames;
}

Pose forward_kinematics(const ArmParams& params, const JointConfig& q) {
  return joint_frames(params, q)[kJointCount];
}

Jacobian jacobian(const ArmParams& params, const JointConfig& q) {
  const auto frames = joint_frames(params, q);
  const Vec3 tip = frames[kJointCount].translation;
  Jacobian j;
  for (int i = 0; i < kJointCount; ++i) {
    const Vec3 axis = frames[i].rotation.col(2);
    j.block<3, 1>(0, i) = axis.cross(tip - frames[i].translation);
    j.block<3, 1>(3, i) = axis;
  }
  return j;
}

double min_singular_value(const Jacobian& j) {
  Eigen::JacobiSVD<Jacobian> svd(j);
  return svd.singularValues().minCoeff();
}

bool check_limits(const ArmParams& params, const JointConfig& q) {
  for (int i = 0; i < kJointCount; ++i) {
    const double a = normalize_angle(q[i]);
    if (a < params.joints[i].lower || a > params.joints[i].upper) {
      return false;
    }
  }
  return true;
}

PoseError pose_error(const Pose& a, const Pose& b) {
  return {(a.translation - b.translation).norm(), rotation_distance(a.rotation, b.rotation)};
}

namespace {

JointConfig clamp_to_limits(const ArmParams& params, const JointConfig& q) {
  JointConfig out = normalized(q);
  for (int i = 0; i < kJointCount; ++i) {
    out[i] = std::clamp(out[i], params.joints[i].lower, params.joints[i].upper);
  }
  return out;
}

Eigen::Matrix<double, 6, 1> twist_error(const Pose& target, const Pose& current) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = target.translation - current.translation;
  e.tail<3>() = rotation_log(target.rotation * current.rotation.transpose());
  return e;
}

}  // namespace

JointConfig inverse_kinematics(const ArmParams& params, const Pose& target, const JointConfig& seed,
                               const IkOptions& options) {
  if (target.translation.norm() > params.reach) {
    throw Error(ErrorCode::Unreachable, "target at " + std::to_string(target.translation.norm()) +
                                            " m exceeds reach " + std::to_string(params.reach) + " m");
  }
  const double lambda2 = options.damping * options.damping;
  JointConfig q = clamp_to_limits(params, seed);
  PoseError err = pose_error(forward_kinematics(params, q), target);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (err.position < 1e-9 && err.orientation < 1e-9) {
      break;
    }
    const Pose current = forward_kinematics(params, q);
    const Jacobian j = jacobian(params, q);
    const auto e = twist_error(target, current);
    const Eigen::Matrix<double, 6, 6> jjt = j * j.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
    JointVector dq = j.transpose() * jjt.ldlt().solve(e);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > options.max_step) {
      dq *= options.max_step / biggest;
    }
    q = clamp_to_limits(params, JointConfig(q.angles + dq));
    err = pose_error(forward_kinematics(params, q), target);
  }

  if (err.position > options.position_tolerance || err.orientation > options.orientation_tolerance) {
    throw Error(ErrorCode::NoConvergence, "residual " + std::to_string(err.position) + " m / " +
                                              std::to_string(err.orientation) + " rad after " +
                                              std::to_string(options.max_iterations) + " iterations");
  }
  const double sigma = min_singular_value(jacobian(params, q));
  if (sigma < options.singularity_floor) {
    throw Error(ErrorCode::NearSingular, "minimum singular value " + std::to_string(sigma));
  }
  return q;
}

}  // namespace ladderbot::kinematics

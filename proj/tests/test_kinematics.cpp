#include <doctest.h>

#include <cmath>
#include <random>

#include "ladderbot/errors.hpp"
#include "ladderbot/kinematics.hpp"

using namespace ladderbot;
using namespace ladderbot::kinematics;

namespace {

// Textbook DH link transform written out element by element.
Mat4 dh_oracle(double a, double alpha, double d, double theta) {
  const double ct = std::cos(theta), st = std::sin(theta), ca = std::cos(alpha), sa = std::sin(alpha);
  Mat4 m;
  m << ct, -st * ca, st * sa, a * ct,
       st, ct * ca, -ct * sa, a * st,
       0, sa, ca, d,
       0, 0, 0, 1;
  return m;
}

Mat4 fk_oracle(const ArmParams& p, const JointConfig& q) {
  Mat4 t = Mat4::Identity();
  for (int i = 0; i < kJointCount; ++i) {
    const auto& j = p.joints[i];
    t = t * dh_oracle(j.a, j.alpha, j.d, q[i] + j.theta_offset);
  }
  return t;
}

JointConfig random_config(const ArmParams& p, std::mt19937_64& rng) {
  JointConfig q;
  for (int i = 0; i < kJointCount; ++i) {
    q[i] = std::uniform_real_distribution<double>(p.joints[i].lower, p.joints[i].upper)(rng);
  }
  return q;
}

}  // namespace

TEST_CASE("forward kinematics equals the per-link DH product") {
  const auto p = ArmParams::default_params();
  std::mt19937_64 rng(1);
  for (int n = 0; n < 200; ++n) {
    const auto q = random_config(p, rng);
    const Mat4 expected = fk_oracle(p, q);
    const Mat4 got = forward_kinematics(p, q).matrix();
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero configuration places the flange at the hand-computed point") {
  // Base turned by pi: x = -(a2 + a3), y = d4 + d6, z = d1 - d5.
  const auto p = ArmParams::default_params();
  const Vec3 t = forward_kinematics(p, JointConfig{}).translation;
  CHECK(t.x() == doctest::Approx(0.4784 + 0.36).epsilon(1e-12));
  CHECK(t.y() == doctest::Approx(0.17415 + 0.11655).epsilon(1e-12));
  CHECK(t.z() == doctest::Approx(0.1807 - 0.11985).epsilon(1e-12));
}

TEST_CASE("joint frames end at the tool pose") {
  const auto p = ArmParams::default_params();
  std::mt19937_64 rng(2);
  const auto q = random_config(p, rng);
  const auto frames = joint_frames(p, q);
  CHECK(frames[0].matrix().isIdentity());
  CHECK((frames[6].matrix() - forward_kinematics(p, q).matrix()).norm() < 1e-14);
}

TEST_CASE("Jacobian matches central finite differences") {
  const auto p = ArmParams::default_params();
  std::mt19937_64 rng(3);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const auto q = random_config(p, rng);
    const Jacobian j = jacobian(p, q);
    Jacobian fd;
    for (int i = 0; i < kJointCount; ++i) {
      JointConfig plus = q, minus = q;
      plus[i] += h;
      minus[i] -= h;
      const Pose a = forward_kinematics(p, plus), b = forward_kinematics(p, minus);
      fd.block<3, 1>(0, i) = (a.translation - b.translation) / (2 * h);
      fd.block<3, 1>(3, i) = rotation_log(a.rotation * b.rotation.transpose()) / (2 * h);
    }
    CHECK((j - fd).norm() / j.norm() < 1e-6);
  }
}

TEST_CASE("IK recovers poses produced by FK") {
  const auto p = ArmParams::default_params();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> jitter(0.0, 0.1);
  int solved = 0;
  while (solved < 100) {
    const auto q = random_config(p, rng);
    const Pose target = forward_kinematics(p, q);
    if (target.translation.norm() > p.reach || min_singular_value(jacobian(p, q)) < 0.02) {
      continue;
    }
    JointConfig seed = q;
    for (int i = 0; i < kJointCount; ++i) {
      seed[i] += jitter(rng);
    }
    const auto s = inverse_kinematics(p, target, seed);
    const auto e = pose_error(forward_kinematics(p, s), target);
    CHECK(e.position <= 1e-4);
    CHECK(e.orientation <= 1e-3);
    CHECK(check_limits(p, s));
    ++solved;
  }
}

TEST_CASE("two-joint planar IK agrees with a grid search") {
  // Freeze joints 1 and 4..6; shoulder and elbow then move the wrist in a
  // vertical plane. A dense grid over (q2, q3) is the oracle for reachability.
  const auto p = ArmParams::default_params();
  JointConfig base;
  base[3] = -M_PI / 2;
  base[4] = M_PI / 2;
  const JointConfig truth = [&] {
    JointConfig q = base;
    q[1] = -1.6;
    q[2] = 2.3;
    return q;
  }();
  const Pose target = forward_kinematics(p, truth);

  double best = 1e9;
  for (int a = 0; a <= 400; ++a) {
    for (int b = 0; b <= 400; ++b) {
      JointConfig q = base;
      q[1] = -M_PI + a * (M_PI / 2) / 400;
      q[2] = b * 2.9 / 400;
      best = std::min(best, pose_error(forward_kinematics(p, q), target).position);
    }
  }
  CHECK(best < 3e-3);  // grid resolution bound

  JointConfig seed = base;
  seed[1] = -1.4;
  seed[2] = 2.1;
  const auto s = inverse_kinematics(p, target, seed);
  CHECK(pose_error(forward_kinematics(p, s), target).position < 1e-4);
  CHECK(pose_error(forward_kinematics(p, s), target).position <= best + 1e-12);
}

TEST_CASE("IK error cases") {
  const auto p = ArmParams::default_params();
  SUBCASE("targets outside the reach sphere are Unreachable") {
    try {
      inverse_kinematics(p, Pose::from_translation({1.0, 0.0, 0.2}), JointConfig{});
      FAIL("expected Unreachable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Unreachable);
    }
  }
  SUBCASE("an iteration cap of one cannot converge from far away") {
    JointConfig q;
    q[1] = -1.2;
    q[2] = 1.5;
    const Pose target = forward_kinematics(p, q);
    IkOptions o;
    o.max_iterations = 1;
    try {
      inverse_kinematics(p, target, JointConfig{}, o);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
    }
  }
  SUBCASE("a straight arm is reported as near singular") {
    JointConfig q;  // shoulder and elbow aligned: wrist on the boundary of the workspace
    q[4] = 0.0;     // wrist joints 4 and 6 aligned as well
    REQUIRE(min_singular_value(jacobian(p, q)) < 1e-4);
    const Pose target = forward_kinematics(p, q);
    if (target.translation.norm() <= p.reach) {
      try {
        inverse_kinematics(p, target, q);
        FAIL("expected NearSingular");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NearSingular);
      }
    }
  }
}

TEST_CASE("angle normalization and limits") {
  CHECK(normalize_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(normalize_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(normalize_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
  std::mt19937_64 rng(5);
  for (int n = 0; n < 1000; ++n) {
    const double a = std::uniform_real_distribution<double>(-50, 50)(rng);
    const double w = normalize_angle(a);
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
    CHECK(std::remainder(a - w, 2 * M_PI) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  }
  const auto p = ArmParams::default_params();
  JointConfig q;
  q[2] = 3.0;
  CHECK_FALSE(check_limits(p, q));
  q[2] = 2.8;
  CHECK(check_limits(p, q));
}

TEST_CASE("arm parameters from config override only present keys") {
  auto cfg = KeyValueConfig::parse("[arm]\nreach = 0.8\nd = [0.2, 0, 0, 0.17, 0.12, 0.12]\n");
  const auto p = ArmParams::from_config(cfg);
  CHECK(p.reach == 0.8);
  CHECK(p.joints[0].d == 0.2);
  CHECK(p.joints[1].a == ArmParams::default_params().joints[1].a);
  CHECK_THROWS_AS(ArmParams::from_config(KeyValueConfig::parse("[arm]\na = [1, 2]\n")), Error);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "ladderbot/errors.hpp"
#include "ladderbot/planner.hpp"

using namespace ladderbot;
using namespace ladderbot::planner;
using kinematics::ArmParams;
using kinematics::JointConfig;

namespace {

// Distance from a point to an axis-aligned box by per-axis clamping.
double box_distance_oracle(const Vec3& p, const Box& b) {
  const Vec3 c = p.cwiseMax(b.min).cwiseMin(b.max);
  return (p - c).norm();
}

double segment_distance_oracle(const Vec3& a, const Vec3& b, const Box& box, double resolution) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / resolution)));
  double best = 1e18;
  for (int k = 0; k <= n; ++k) {
    best = std::min(best, box_distance_oracle(a + (b - a) * (static_cast<double>(k) / n), box));
  }
  return best;
}

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-0.5, 0.5), h(0.01, 0.2);
  const Vec3 center(c(rng), c(rng), c(rng));
  const Vec3 half(h(rng), h(rng), h(rng));
  return {center - half, center + half};
}

struct DetourScene {
  ArmParams params = ArmParams::default_params();
  JointConfig a, b;
  SceneGeometry scene;

  DetourScene() {
    a.angles << 0.6, -1.75, 2.3, -0.5, 0.9, -M_PI / 2;
    b = a;
    b[0] = -0.6;
    const JointConfig mid(0.5 * (a.angles + b.angles));
    const Vec3 c = kinematics::joint_frames(params, mid)[6].translation - Vec3(0, 0, 0.05);
    scene.obstacles.push_back({c - Vec3::Constant(0.02), c + Vec3::Constant(0.02)});
  }
};

}  // namespace

TEST_CASE("point-box distance equals the clamping oracle") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 2000; ++n) {
    const Box b = random_box(rng);
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK(point_box_distance(p, b) == doctest::Approx(box_distance_oracle(p, b)).epsilon(1e-12));
  }
}

TEST_CASE("segment-box distance agrees with 1 mm dense sampling") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int n = 0; n < 300; ++n) {
    const Box box = random_box(rng);
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    const double got = segment_box_distance(a, b, box);
    const double dense = segment_distance_oracle(a, b, box, 1e-3);
    CHECK(got <= dense + 1e-9);         // never worse than the samples
    CHECK(got >= dense - 0.5e-3 - 1e-9);  // samples are at most half a spacing from the optimum
  }
}

TEST_CASE("collision check agrees with densely sampled capsules") {
  const auto p = ArmParams::default_params();
  std::mt19937_64 rng(3);
  SceneGeometry scene;
  scene.ground_z = -1e9;  // links only
  int hits = 0, checked = 0;
  for (int n = 0; n < 300; ++n) {
    scene.obstacles = {random_box(rng)};
    JointConfig q;
    for (int i = 0; i < 6; ++i) {
      q[i] = std::uniform_real_distribution<double>(p.joints[i].lower, p.joints[i].upper)(rng);
    }
    const auto frames = kinematics::joint_frames(p, q);
    double nearest = 1e18;
    for (int i = 0; i < 6; ++i) {
      nearest = std::min(nearest, segment_distance_oracle(frames[i].translation, frames[i + 1].translation,
                                                          scene.obstacles[0], 1e-3));
    }
    if (std::abs(nearest - scene.link_radius) < 1e-3) {
      continue;  // too close to call at the sampling resolution
    }
    ++checked;
    const bool expected = nearest <= scene.link_radius;
    hits += expected ? 1 : 0;
    CHECK(collision_check(scene, p, q) == expected);
  }
  CHECK(checked > 250);
  CHECK(hits > 10);
}

TEST_CASE("the tool may not go below the ground plane") {
  const auto p = ArmParams::default_params();
  SceneGeometry scene;
  JointConfig q;
  q[1] = -0.3;  // shoulder dipped: the arm points down past horizontal
  const double tool_z = kinematics::forward_kinematics(p, q).translation.z();
  CHECK(collision_check(scene, p, q) == (tool_z < scene.ground_z));
}

TEST_CASE("RRT detours around an obstacle that blocks the straight edge") {
  DetourScene s;
  RRTParams rrt;
  rrt.rng_seed = 5;
  REQUIRE_FALSE(edge_free(s.scene, s.params, s.a, s.b, rrt));
  const Path path = rrt_plan(s.scene, s.params, s.a, s.b, rrt);
  REQUIRE(path.waypoints.size() >= 2);
  CHECK(path.waypoints.front() == s.a);
  CHECK(path.waypoints.back() == s.b);

  double length = 0;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    const auto& u = path.waypoints[i - 1];
    const auto& v = path.waypoints[i];
    length += joint_distance(u, v);
    // Re-check at 1 mrad of summed joint motion; every arm point then moves under 1 mm.
    const int n = static_cast<int>(std::ceil((v.angles - u.angles).cwiseAbs().sum() / 1e-3));
    for (int k = 0; k <= n; ++k) {
      const JointConfig q(u.angles + (v.angles - u.angles) * (static_cast<double>(k) / n));
      CHECK_FALSE(collision_check(s.scene, s.params, q));
      CHECK(kinematics::check_limits(s.params, q));
    }
  }
  CHECK(path.total_length == doctest::Approx(length).epsilon(1e-12));

  const Path again = rrt_plan(s.scene, s.params, s.a, s.b, rrt);
  CHECK(again.waypoints == path.waypoints);
}

TEST_CASE("RRT error cases") {
  DetourScene s;
  RRTParams rrt;
  SUBCASE("start inside an obstacle") {
    SceneGeometry blocked = s.scene;
    const Vec3 tool = kinematics::forward_kinematics(s.params, s.a).translation;
    blocked.obstacles.push_back({tool - Vec3::Constant(0.05), tool + Vec3::Constant(0.05)});
    try {
      rrt_plan(blocked, s.params, s.a, s.b, rrt);
      FAIL("expected InvalidEndpoint");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidEndpoint);
    }
  }
  SUBCASE("iteration budget exhausted") {
    rrt.max_iterations = 50;
    try {
      rrt_plan(s.scene, s.params, s.a, s.b, rrt);
      FAIL("expected GoalUnreachable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GoalUnreachable);
    }
  }
  SUBCASE("start within tolerance of the goal") {
    JointConfig near = s.a;
    near[5] += 0.01;
    const Path p = rrt_plan(s.scene, s.params, s.a, near, rrt);
    CHECK(p.waypoints.size() == 1);
    CHECK(p.total_length == 0.0);
  }
  SUBCASE("invalid parameters") {
    rrt.step_size = 0.0;
    CHECK_THROWS_AS(rrt_plan(s.scene, s.params, s.a, s.b, rrt), Error);
  }
}

TEST_CASE("axis order parsing") {
  const AxisOrder yxz{Axis::Y, Axis::X, Axis::Z};
  CHECK(parse_axis_order("YXZ") == yxz);
  CHECK(parse_axis_order("Y,X,Z") == yxz);
  CHECK(parse_axis_order("Y->X->Z") == yxz);
  CHECK(parse_axis_order("yxz") == yxz);
  CHECK(to_string(yxz) == "YXZ");
  CHECK_THROWS_AS(parse_axis_order("YYZ"), Error);
  CHECK_THROWS_AS(parse_axis_order("XY"), Error);
}

TEST_CASE("SMP decomposition telescopes through single-axis segments") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::array<AxisOrder, 3> orders{AxisOrder{Axis::Y, Axis::X, Axis::Z}, AxisOrder{Axis::X, Axis::Y, Axis::Z},
                                        AxisOrder{Axis::Z, Axis::Y, Axis::X}};
  for (int n = 0; n < 300; ++n) {
    const Vec3 from(u(rng), u(rng), u(rng)), to(u(rng), u(rng), u(rng));
    const auto& order = orders[static_cast<std::size_t>(n) % orders.size()];
    const auto plan = decompose_smp(from, to, order);
    REQUIRE(plan.segments.size() == 3);
    CHECK(plan.segments.front().start == from);
    CHECK(plan.segments.back().end == to);
    for (int k = 0; k < 3; ++k) {
      const auto& seg = plan.segments[static_cast<std::size_t>(k)];
      CHECK(seg.axis == order[static_cast<std::size_t>(k)]);
      if (k > 0) {
        CHECK(seg.start == plan.segments[static_cast<std::size_t>(k - 1)].end);
      }
      const Vec3 delta = seg.end - seg.start;
      for (int axis = 0; axis < 3; ++axis) {
        if (axis != static_cast<int>(seg.axis)) {
          CHECK(delta[axis] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("time parameterization sample counts and end points") {
  const auto plan = decompose_smp({0.4, 0.0, 0.3}, {0.55, 0.07, 0.3}, parse_axis_order("YXZ"), 0.02);
  const double dt = 0.05;
  const auto samples = time_parameterize(plan, dt);
  // Per non-degenerate segment: ceil(L / (v dt)) + 1 samples; zero-length segments give one.
  std::size_t expected = 0;
  for (const auto& seg : plan.segments) {
    const double len = (seg.end - seg.start).norm();
    expected += len == 0.0 ? 1 : static_cast<std::size_t>(std::ceil(len / (plan.speed * dt))) + 1;
  }
  CHECK(samples.size() == expected);
  CHECK(samples.back().position == plan.segments.back().end);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].segment == samples[i - 1].segment) {
      CHECK(samples[i].t >= samples[i - 1].t);
      CHECK((samples[i].position - samples[i - 1].position).norm() <= plan.speed * dt + 1e-12);
    }
    CHECK(samples[i].velocity.norm() <= plan.speed + 1e-12);
  }
  CHECK_THROWS_AS(time_parameterize(plan, 0.0), Error);
}

TEST_CASE("plans survive a JSON round trip") {
  DetourScene s;
  Path path{{s.a, s.b}, joint_distance(s.a, s.b)};
  const Path back = path_from_json(to_json(path));
  CHECK(back.waypoints == path.waypoints);
  CHECK(back.total_length == path.total_length);

  const auto plan = decompose_smp({0.1, 0.2, 0.3}, {0.4, -0.1, 0.35}, parse_axis_order("XYZ"), 0.03);
  const auto plan_back = smp_plan_from_json(to_json(plan));
  REQUIRE(plan_back.segments.size() == 3);
  CHECK(plan_back.speed == plan.speed);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(plan_back.segments[k].axis == plan.segments[k].axis);
    CHECK(plan_back.segments[k].start == plan.segments[k].start);
    CHECK(plan_back.segments[k].end == plan.segments[k].end);
  }
}

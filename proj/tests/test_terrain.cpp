#include <doctest.h>

#include <cmath>
#include <random>

#include "ladderbot/errors.hpp"
#include "ladderbot/terrain.hpp"

using namespace ladderbot;
using namespace ladderbot::terrain;

TEST_CASE("single-axis motion has zero coupling") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const double s = u(rng);
    CHECK(coupling({s, 0, 0}) == 0.0);
    CHECK(coupling({0, s, 0}) == 0.0);
    CHECK(coupling({0, 0, s}) == 0.0);
  }
}

TEST_CASE("coupling is the sum of pairwise speed products") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const Vec3 v(u(rng), u(rng), u(rng));
    const double expected = std::abs(v.x() * v.y()) + std::abs(v.y() * v.z()) + std::abs(v.x() * v.z());
    CHECK(coupling(v) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(coupling(v) == coupling(-v));
  }
}

TEST_CASE("one interaction step follows the drift and sinkage laws") {
  TerrainModel m;
  m.coupling_gain = 6.0;
  m.sinkage_gain = 0.05;
  const Vec3 v(0.03, 0.0, 0.04);
  const double load = 20.0, dt = 0.05;
  const double g = 0.03 * 0.04;
  const auto s = step_interaction(m, DriftState{}, v, load, dt);
  CHECK(s.base_offset.x() == doctest::Approx(6.0 * g * (load / 10.0) * dt));
  CHECK(s.sink_depth == doctest::Approx(0.05 * g * load * dt));
  CHECK(s.base_offset.z() == doctest::Approx(-s.sink_depth));
  CHECK(s.tilt == doctest::Approx(5.0 * s.sink_depth));
  CHECK(s.noise_draws == 0);
}

TEST_CASE("drift stays zero under any single-axis load history") {
  TerrainModel m;
  m.coupling_gain = 40.0;
  m.sinkage_gain = 1.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> speed(-0.05, 0.05), load(0.0, 100.0);
  DriftState s;
  for (int n = 0; n < 5000; ++n) {
    Vec3 v = Vec3::Zero();
    v[static_cast<int>(rng() % 3)] = speed(rng);
    s = step_interaction(m, s, v, load(rng), 0.05);
  }
  CHECK(s == DriftState{});
}

TEST_CASE("noise is drawn only under load and is a pure function of the draw index") {
  TerrainModel m;
  m.noise_sigma = 1e-4;
  m.rng_seed = 9;
  const auto unloaded = step_interaction(m, DriftState{}, {0.02, 0, 0}, 0.0, 0.05);
  CHECK(unloaded == DriftState{});
  const auto a = step_interaction(m, DriftState{}, {0.02, 0, 0}, 5.0, 0.05);
  const auto b = step_interaction(m, DriftState{}, {0.02, 0, 0}, 5.0, 0.05);
  CHECK(a == b);
  CHECK(a.noise_draws == 1);
  CHECK(a.base_offset.x() != 0.0);
  const auto c = step_interaction(m, a, {0.02, 0, 0}, 5.0, 0.05);
  CHECK(c.noise_draws == 2);
  CHECK(c.base_offset.x() != 2 * a.base_offset.x());
}

TEST_CASE("drift is bounded by the workspace extent") {
  TerrainModel m;
  m.coupling_gain = 1e4;
  m.sinkage_gain = 1e3;
  DriftState s;
  for (int n = 0; n < 100; ++n) {
    s = step_interaction(m, s, {0.1, 0.1, 0.1}, 50.0, 0.05);
  }
  CHECK(s.base_offset.x() == doctest::Approx(m.workspace_extent));
  CHECK(s.sink_depth == doctest::Approx(m.workspace_extent));
}

TEST_CASE("invalid inputs") {
  TerrainModel m;
  CHECK_THROWS_AS(step_interaction(m, DriftState{}, Vec3::Zero(), 1.0, 0.0), Error);
  m.noise_sigma = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("drift offset composes tilt and translation") {
  DriftState s;
  s.base_offset = {0.01, 0.0, -0.002};
  s.sink_depth = 0.002;
  s.tilt = 0.01;
  const Pose p = drift_offset(s);
  CHECK((p.translation - s.base_offset).norm() == 0.0);
  CHECK(rotation_distance(p.rotation, rot_y(0.01)) < 1e-15);
}

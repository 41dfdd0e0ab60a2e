#include <doctest.h>

#include <filesystem>

#include "ladderbot/config.hpp"
#include "ladderbot/errors.hpp"
#include "ladderbot/scenario.hpp"

using namespace ladderbot;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigInvalid;
}

}  // namespace

TEST_CASE("key/value parsing") {
  const auto cfg = KeyValueConfig::parse(R"(
# top-level comment
top = 1
[terrain]
coupling_gain = 12.5   # trailing comment
name = "a # not a comment"
[planner]
order = "YXZ"
offsets = [0.0, 0.05, -0.05]
flag = on
)");
  CHECK(cfg.get_double("top", 0) == 1.0);
  CHECK(cfg.get_double("terrain.coupling_gain", 0) == 12.5);
  CHECK(cfg.get_string("terrain.name", "") == "a # not a comment");
  CHECK(cfg.get_string("planner.order", "") == "YXZ");
  CHECK(cfg.get_doubles("planner.offsets", {}) == std::vector<double>{0.0, 0.05, -0.05});
  CHECK(cfg.get_bool("planner.flag", false));
  CHECK(cfg.get_double("missing", 7.0) == 7.0);
}

TEST_CASE("malformed input names the key or line") {
  CHECK(code_of([] { KeyValueConfig::parse("[broken\n"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { KeyValueConfig::parse("novalue\n"); }) == ErrorCode::ConfigInvalid);
  const auto cfg = KeyValueConfig::parse("[a]\nx = abc\n");
  try {
    cfg.get_double("a.x", 0);
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("a.x") != std::string::npos);
  }
  CHECK(code_of([] { KeyValueConfig::load("/nonexistent/file.toml"); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("merge lets the second config win") {
  auto a = KeyValueConfig::parse("x = 1\ny = 2\n");
  a.merge(KeyValueConfig::parse("y = 3\nz = 4\n"));
  CHECK(a.get_int("x", 0) == 1);
  CHECK(a.get_int("y", 0) == 3);
  CHECK(a.get_int("z", 0) == 4);
}

TEST_CASE("scenario reads its sections") {
  const auto cfg = KeyValueConfig::parse(R"(
[ladder]
base = [0.9, 0.0, 0.05]
step_count = 3
[terrain]
coupling_gain = 2.0
noise_sigma = 0.001
[planner]
strategy = "multi_axis"
smp_order = "XYZ"
[scenario]
dt = 0.02
)");
  const auto s = Scenario::from_config(cfg);
  CHECK(s.ladder.base_position == Vec3(0.9, 0.0, 0.05));
  CHECK(s.ladder.step_count == 3);
  CHECK(s.terrain.coupling_gain == 2.0);
  CHECK(s.terrain.noise_sigma == 0.001);
  CHECK(s.strategy == MotionStrategy::MultiAxis);
  CHECK(s.smp_order == planner::parse_axis_order("XYZ"));
  CHECK(s.dt == 0.02);
}

TEST_CASE("scenario validation") {
  Scenario s;
  CHECK_NOTHROW(s.validate());
  s.smp_order = planner::parse_axis_order("ZXY");
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::ConfigInvalid);
  s = Scenario{};
  s.dt = 0.0;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::ConfigInvalid);
  s = Scenario{};
  s.illumination = 1.5;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { Scenario::from_config(KeyValueConfig::parse("[planner]\nstrategy = \"zigzag\"\n")); }) ==
        ErrorCode::ConfigInvalid);
}

TEST_CASE("shipped configs load and validate") {
  const std::filesystem::path dir = std::filesystem::path(LADDERBOT_SOURCE_DIR) / "config";
  int loaded = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".toml") {
      CHECK_NOTHROW(Scenario::load(entry.path()).validate());
      ++loaded;
    }
  }
  CHECK(loaded >= 4);
  CHECK(Scenario::load(dir / "multi_axis.toml").strategy == MotionStrategy::MultiAxis);
  CHECK(Scenario::load(dir / "lab.toml").terrain.coupling_gain == 0.0);
}

TEST_CASE("mode and strategy names") {
  CHECK(parse_mode("hitl") == Mode::Hitl);
  CHECK(parse_mode(to_string(Mode::Autonomous)) == Mode::Autonomous);
  CHECK(parse_strategy("smp") == MotionStrategy::Smp);
  CHECK(parse_strategy(to_string(MotionStrategy::MultiAxis)) == MotionStrategy::MultiAxis);
}

TEST_CASE("derived seeds are stable and separate streams") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
}

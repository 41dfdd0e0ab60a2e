#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ladderbot/errors.hpp"
#include "ladderbot/harness.hpp"

using namespace ladderbot;
using namespace ladderbot::harness;
using deployment::Phase;
using deployment::TrajectoryRow;

namespace {

deployment::EpisodeReport report(int steps, double elapsed, double drift, bool success) {
  deployment::EpisodeReport r;
  r.steps_deployed = steps;
  r.elapsed = elapsed;
  r.drift_total = drift;
  r.outcome = success ? deployment::Outcome::Success : deployment::Outcome::Partial;
  return r;
}

TrajectoryRow row(double t, double x, Phase phase, int step, double drift = 0.0) {
  TrajectoryRow r;
  r.t = t;
  r.tool = {x, 0.0, 0.2};
  r.phase = phase;
  r.step = step;
  r.drift_x = drift;
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    out.push_back(l);
  }
  return out;
}

}  // namespace

TEST_CASE("Table 1 preset has the published row structure") {
  const auto spec = SweepSpec::table1();
  REQUIRE(spec.cells.size() == 9);
  CHECK(spec.trials == 5);
  CHECK(spec.base_position == Vec3(0.87, 0.05, 0.05));
  const std::vector<Vec3> expected{{0, 0, 0},         {0.05, 0, 0},      {-0.05, 0, 0},
                                   {0.05, 0.02, 0},   {0.05, -0.02, 0},  {-0.05, 0.02, 0},
                                   {-0.05, -0.02, 0}, {0, 0.02, 0},      {0, 0.02, 0}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(spec.cells[i].offset == expected[i]);
  }
}

TEST_CASE("sweep spec from config") {
  const auto spec = SweepSpec::from_config(KeyValueConfig::parse(R"(
[sweep]
base = [0.8, 0.0, 0.05]
offsets = [0, 0, 0, 0.01, 0, 0]
trials = 2
seed_base = 77
mode = "hitl"
)"));
  CHECK(spec.base_position == Vec3(0.8, 0.0, 0.05));
  REQUIRE(spec.cells.size() == 2);
  CHECK(spec.cells[1].offset == Vec3(0.01, 0, 0));
  CHECK(spec.trials == 2);
  CHECK(spec.seed_base == 77);
  CHECK(spec.mode == Mode::Hitl);
  CHECK(trial_seed(spec, 1, 1) == 77 + 1000 + 1);

  CHECK_THROWS_AS(SweepSpec::from_config(KeyValueConfig::parse("[sweep]\noffsets = [0, 0]\n")), Error);
  CHECK_THROWS_AS(SweepSpec::from_config(KeyValueConfig::parse("[sweep]\npreset = \"nope\"\n")), Error);
  auto bad = SweepSpec::table1();
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("aggregation averages each column") {
  const auto c = aggregate({0.05, 0, 0}, {report(5, 100, 0.0, true), report(3, 80, 0.02, false),
                                          report(5, 120, 0.01, true)});
  CHECK(c.avg_elapsed == doctest::Approx(100.0));
  CHECK(c.avg_steps == doctest::Approx(13.0 / 3.0));
  CHECK(c.avg_drift == doctest::Approx(0.01));
  CHECK(c.success_count == 2);
}

TEST_CASE("table labels") {
  CHECK(axis_label('x', 0.87, 0.0, true) == "x = 0.87");
  CHECK(axis_label('x', 0.87, 0.0, false) == "x");
  CHECK(axis_label('x', 0.87, 0.05, false) == "x + 0.05");
  CHECK(axis_label('y', 0.05, -0.02, false) == "y - 0.02");
  CHECK(steps_label(aggregate({}, {report(5, 1, 0, true), report(5, 1, 0, true)}), 5) == "All 5");
  CHECK(steps_label(aggregate({}, {report(2, 1, 0, false), report(2, 1, 0, false)}), 5) == "Only 2");
  CHECK(steps_label(aggregate({}, {report(5, 1, 0, true), report(2, 1, 0, false)}), 5) == "3.5");
}

TEST_CASE("serial and parallel sweeps produce identical reports") {
  SweepSpec spec;
  spec.scenario.ladder.step_count = 1;
  spec.cells = {{{0, 0, 0}}, {{0.03, 0, 0}}, {{0, -0.02, 0}}};
  spec.trials = 2;
  spec.seed_base = 11;
  const auto serial = run_sweep(spec, kernels::Execution::Serial);
  const auto parallel = run_sweep(spec, kernels::Execution::Parallel);
  CHECK(to_json(serial).dump() == to_json(parallel).dump());
  REQUIRE(serial.cells.size() == 3);
  for (const auto& c : serial.cells) {
    CHECK(c.reports.size() == 2);
  }

  std::ostringstream csv;
  write_sweep_csv(csv, serial);
  const auto rows = lines(csv.str());
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] ==
        "x_m,y_m,z_m,avg_time_elapsed_s,avg_steps_deployed,ladder_x,ladder_y,ladder_z,trials,success_trials,"
        "mean_steps,avg_drift_m,avg_hitl_events");
  CHECK(rows[1].rfind("x = 0.87,y = 0.05,z = 0.05,", 0) == 0);
  CHECK(rows[2].rfind("x + 0.03,y,z,", 0) == 0);
  CHECK(rows[3].rfind("x,y - 0.02,z,", 0) == 0);
}

TEST_CASE("plot summary statistics") {
  // Two lifts: x constant in the first, alternating +-0.001 around 0.5 in the second.
  std::vector<TrajectoryRow> rows{
      row(0, 0.4, Phase::Home, 0),          row(1, 0.6, Phase::Grasp, 0),
      row(2, 0.6, Phase::LiftZ, 0),         row(3, 0.6, Phase::LiftZ, 0),
      row(4, 0.5, Phase::Grasp, 1),         row(5, 0.499, Phase::LiftZ, 1),
      row(6, 0.501, Phase::LiftZ, 1, 0.002)};
  const auto s = summarize(rows);
  CHECK(s.steps == 2);
  CHECK(s.lift_x_variance == doctest::Approx(1e-6));
  CHECK(s.final_drift_x == 0.002);
  CHECK(s.step_x == std::vector<double>{0.6, 0.5});
  std::vector<TrajectoryRow> none;
  try {
    summarize(none);
    FAIL("expected EmptyLog");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyLog);
  }
}

TEST_CASE("trajectory figures are written") {
  Scenario sc;
  sc.ladder.step_count = 2;
  const auto smp = deployment::run_episode(sc, Mode::Autonomous, 1).trajectory;
  sc.strategy = MotionStrategy::MultiAxis;
  const auto multi = deployment::run_episode(sc, Mode::Autonomous, 1).trajectory;
  const auto dir = std::filesystem::temp_directory_path() / "ladderbot_plot_test";
  std::filesystem::remove_all(dir);
  const auto files = emit_trajectory_plots(smp, multi, dir);
  for (const auto& p : {files.full_deployment, files.first_step, files.comparison}) {
    REQUIRE(std::filesystem::exists(p));
    std::ifstream in(p);
    std::string head;
    std::getline(in, head);
    const std::string all = head + std::string(std::istreambuf_iterator<char>(in), {});
    CHECK(all.find("<svg") != std::string::npos);
    CHECK(all.find("</svg>") != std::string::npos);
  }
  std::ifstream in(files.summary);
  const auto j = nlohmann::json::parse(in);
  CHECK(j["primary"]["lift_x_variance"].get<double>() < 1e-8);
  CHECK(j["compare"]["lift_x_variance"].get<double>() > j["primary"]["lift_x_variance"].get<double>());
  std::filesystem::remove_all(dir);

  std::vector<TrajectoryRow> none;
  CHECK_THROWS_AS(emit_trajectory_plots(none, none, dir), Error);
}

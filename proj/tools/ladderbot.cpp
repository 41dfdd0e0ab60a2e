// ladderbot: single episodes, batch sweeps and trajectory figures.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ladderbot/deployment.hpp"
#include "ladderbot/gateway.hpp"
#include "ladderbot/harness.hpp"

namespace {

using namespace ladderbot;

// Exit codes: 0 success, 1 episode did not fully succeed, 2 bad configuration, 3 other failure.
constexpr int kExitOutcome = 1;
constexpr int kExitConfig = 2;
constexpr int kExitError = 3;

struct RunArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string mode = "autonomous";
  std::string strategy;
  bool serve = false;
  std::string ui_root;
  std::string events;
  std::string trajectory;
  std::string report;
};

struct SweepArgs {
  std::string spec;
  std::string out = "sweep_out";
  bool serial = false;
  int trials = 0;
};

struct PlotArgs {
  std::string log;
  std::string compare;
  std::string out = "plots";
};

template <class F>
void write_file(const std::string& path, F&& body) {
  if (path.empty()) {
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::ConfigInvalid, "cannot write " + path);
  }
  body(out);
}

std::vector<deployment::TrajectoryRow> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::ConfigInvalid, "cannot read " + path);
  }
  return deployment::read_trajectory_csv(in);
}

deployment::EpisodeResult serve_episode(const Scenario& scenario, Mode mode, std::uint64_t seed,
                                        const std::string& ui_root) {
  auto options = gateway::GatewayOptions::from_env();
  if (!ui_root.empty()) {
    options.ui_root = ui_root;
  }
  gateway::EpisodeHost::Options host_options;
  host_options.telemetry_rate_hz = options.telemetry_rate_hz;
  host_options.realtime_factor = options.realtime_factor;
  host_options.start_on_first_client = true;
  gateway::EpisodeHost host(scenario, mode, seed, host_options);
  gateway::GatewayServer server(host, options);
  const auto port = server.start();
  std::cerr << "serving ws://" << options.bind_address << ':' << port << "/ws"
            << (options.token.empty() ? " (no token)" : "") << "; episode starts when a client connects\n";
  host.start();
  host.wait();
  server.stop();
  return host.result();
}

int cmd_run(const RunArgs& a) {
  Scenario scenario = a.config.empty() ? Scenario{} : Scenario::load(a.config);
  if (!a.strategy.empty()) {
    scenario.strategy = parse_strategy(a.strategy);
  }
  scenario.validate();
  const Mode mode = parse_mode(a.mode);

  const auto result = a.serve ? serve_episode(scenario, mode, a.seed, a.ui_root)
                              : deployment::run_episode(scenario, mode, a.seed);

  write_file(a.events, [&](std::ostream& o) { deployment::write_event_log(o, result.events); });
  write_file(a.trajectory, [&](std::ostream& o) { deployment::write_trajectory_csv(o, result.trajectory); });
  const auto report = deployment::to_json(result.report);
  write_file(a.report, [&](std::ostream& o) { o << report.dump(2) << '\n'; });
  std::cout << report.dump() << '\n';
  return result.report.outcome == deployment::Outcome::Success ? 0 : kExitOutcome;
}

int cmd_sweep(const SweepArgs& a) {
  auto spec = a.spec.empty() ? harness::SweepSpec::table1() : harness::SweepSpec::load(a.spec);
  if (a.trials > 0) {
    spec.trials = a.trials;
  }
  spec.validate();
  const auto report =
      harness::run_sweep(spec, a.serial ? kernels::Execution::Serial : kernels::Execution::Parallel);

  std::filesystem::create_directories(a.out);
  write_file((std::filesystem::path(a.out) / "sweep.csv").string(),
             [&](std::ostream& o) { harness::write_sweep_csv(o, report); });
  write_file((std::filesystem::path(a.out) / "sweep.json").string(),
             [&](std::ostream& o) { o << harness::to_json(report).dump(2) << '\n'; });

  std::printf("%-12s %-12s %-12s %10s  %s\n", "x (m)", "y (m)", "z (m)", "time (s)", "steps");
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    const auto& c = report.cells[i];
    const bool base_row = i == 0 && c.offset.isZero();
    std::printf("%-12s %-12s %-12s %10.2f  %s\n",
                harness::axis_label('x', spec.base_position.x(), c.offset.x(), base_row).c_str(),
                harness::axis_label('y', spec.base_position.y(), c.offset.y(), base_row).c_str(),
                harness::axis_label('z', spec.base_position.z(), c.offset.z(), base_row).c_str(), c.avg_elapsed,
                harness::steps_label(c, report.step_count).c_str());
  }
  std::cout << "wrote " << a.out << "/sweep.csv and sweep.json\n";
  return 0;
}

int cmd_plot(const PlotArgs& a) {
  const auto rows = read_log(a.log);
  std::vector<deployment::TrajectoryRow> compare;
  if (!a.compare.empty()) {
    compare = read_log(a.compare);
  }
  const auto files = harness::emit_trajectory_plots(rows, compare, a.out);
  for (const auto& p : {files.full_deployment, files.first_step, files.comparison, files.summary}) {
    if (!p.empty()) {
      std::cout << p.string() << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ladder deployment digital twin"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one deployment episode");
  run_cmd->add_option("--config", run.config, "Scenario key = value file")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Episode seed");
  run_cmd->add_option("--mode", run.mode, "autonomous or hitl")->check(CLI::IsMember({"autonomous", "hitl"}));
  run_cmd->add_option("--strategy", run.strategy, "smp or multi_axis (overrides the config)")
      ->check(CLI::IsMember({"smp", "multi_axis"}));
  run_cmd->add_flag("--serve", run.serve, "Drive the episode through the WebSocket gateway");
  run_cmd->add_option("--ui-root", run.ui_root, "Directory served as static files with --serve");
  run_cmd->add_option("--events", run.events, "Write the event log (JSON lines)");
  run_cmd->add_option("--trajectory", run.trajectory, "Write the trajectory log (CSV)");
  run_cmd->add_option("--report", run.report, "Write the episode report (JSON)");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a ladder-offset sweep (defaults to the Table 1 grid)");
  sweep_cmd->add_option("--spec", sweep.spec, "Sweep spec file")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep.out, "Output directory");
  sweep_cmd->add_option("--trials", sweep.trials, "Override trials per cell");
  sweep_cmd->add_flag("--serial", sweep.serial, "Run episodes on one thread");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render trajectory figures from a trajectory log");
  plot_cmd->add_option("--log", plot.log, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--compare", plot.compare, "Second trajectory CSV for the lift comparison")
      ->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*plot_cmd) return cmd_plot(plot);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigInvalid ? kExitConfig : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

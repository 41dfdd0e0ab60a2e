#include "ladderbot/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "ladderbot/errors.hpp"

namespace ladderbot::harness {

using deployment::Phase;
using deployment::TrajectoryRow;

void SweepSpec::validate() const {
  scenario.validate();
  if (trials < 1) {
    throw Error(ErrorCode::ConfigInvalid, "sweep trials must be >= 1");
  }
  if (cells.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "sweep needs at least one cell");
  }
  if (!base_position.allFinite()) {
    throw Error(ErrorCode::ConfigInvalid, "sweep base position must be finite");
  }
  for (const auto& c : cells) {
    if (!c.offset.allFinite()) {
      throw Error(ErrorCode::ConfigInvalid, "sweep offsets must be finite");
    }
  }
}

SweepSpec SweepSpec::table1(const Scenario& scenario) {
  SweepSpec spec;
  spec.scenario = scenario;
  spec.base_position = {0.87, 0.05, 0.05};
  // Rows as printed; the last two are identical in the source table.
  const double dx = 0.05;
  const double dy = 0.02;
  spec.cells = {{{0, 0, 0}},   {{dx, 0, 0}},  {{-dx, 0, 0}}, {{dx, dy, 0}}, {{dx, -dy, 0}},
                {{-dx, dy, 0}}, {{-dx, -dy, 0}}, {{0, dy, 0}},  {{0, dy, 0}}};
  spec.trials = 5;
  return spec;
}

SweepSpec SweepSpec::from_config(const KeyValueConfig& cfg) {
  SweepSpec spec;
  const Scenario scenario = Scenario::from_config(cfg);
  const std::string preset = cfg.get_string("sweep.preset", "");
  if (preset == "table1") {
    spec = table1(scenario);
  } else if (!preset.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "unknown sweep preset '" + preset + "'");
  } else {
    spec.scenario = scenario;
  }
  if (cfg.has("sweep.base")) {
    const auto b = cfg.get_doubles("sweep.base", {});
    if (b.size() != 3) {
      throw Error(ErrorCode::ConfigInvalid, "'sweep.base' needs exactly 3 entries");
    }
    spec.base_position = {b[0], b[1], b[2]};
  } else if (preset.empty()) {
    spec.base_position = scenario.ladder.base_position;
  }
  if (cfg.has("sweep.offsets")) {
    const auto o = cfg.get_doubles("sweep.offsets", {});
    if (o.empty() || o.size() % 3 != 0) {
      throw Error(ErrorCode::ConfigInvalid, "'sweep.offsets' needs a multiple of 3 entries (dx, dy, dz per cell)");
    }
    spec.cells.clear();
    for (std::size_t i = 0; i < o.size(); i += 3) {
      spec.cells.push_back({{o[i], o[i + 1], o[i + 2]}});
    }
  }
  if (spec.cells.empty()) {
    spec.cells.push_back({Vec3::Zero()});
  }
  spec.trials = static_cast<int>(cfg.get_int("sweep.trials", spec.trials));
  spec.seed_base = static_cast<std::uint64_t>(cfg.get_int("sweep.seed_base", static_cast<long>(spec.seed_base)));
  spec.mode = parse_mode(cfg.get_string("sweep.mode", to_string(spec.mode)));
  spec.validate();
  return spec;
}

SweepSpec SweepSpec::load(const std::filesystem::path& path) {
  return from_config(KeyValueConfig::load(path));
}

std::uint64_t trial_seed(const SweepSpec& spec, int cell, int trial) {
  return spec.seed_base + static_cast<std::uint64_t>(cell) * 1000 + static_cast<std::uint64_t>(trial);
}

CellResult aggregate(const Vec3& offset, std::vector<deployment::EpisodeReport> reports) {
  CellResult c;
  c.offset = offset;
  c.reports = std::move(reports);
  const double n = static_cast<double>(c.reports.size());
  for (const auto& r : c.reports) {
    c.avg_elapsed += r.elapsed;
    c.avg_steps += r.steps_deployed;
    c.avg_drift += r.drift_total;
    c.avg_hitl += r.hitl_events;
    c.success_count += r.outcome == deployment::Outcome::Success ? 1 : 0;
  }
  if (n > 0) {
    c.avg_elapsed /= n;
    c.avg_steps /= n;
    c.avg_drift /= n;
    c.avg_hitl /= n;
  }
  return c;
}

SweepReport run_sweep(const SweepSpec& spec, kernels::Execution exec) {
  spec.validate();
  const int cells = static_cast<int>(spec.cells.size());
  const int total = cells * spec.trials;
  std::vector<deployment::EpisodeReport> reports(total);
  auto run_one = [&](int idx) {
    const int cell = idx / spec.trials;
    const int trial = idx % spec.trials;
    Scenario sc = spec.scenario;
    sc.ladder.base_position = spec.base_position + spec.cells[cell].offset;
    reports[idx] = deployment::run_episode(sc, spec.mode, trial_seed(spec, cell, trial)).report;
  };
  if (exec == kernels::Execution::Parallel) {
    // Exceptions cannot cross the OpenMP region boundary; collect and rethrow.
    std::vector<std::string> errors(total);
#pragma omp parallel for schedule(dynamic, 1)
    for (int idx = 0; idx < total; ++idx) {
      try {
        run_one(idx);
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "sweep episode failed: " + e);
      }
    }
  } else {
    for (int idx = 0; idx < total; ++idx) {
      run_one(idx);
    }
  }
  SweepReport report;
  report.base_position = spec.base_position;
  report.step_count = spec.scenario.ladder.step_count;
  for (int cell = 0; cell < cells; ++cell) {
    std::vector<deployment::EpisodeReport> rs(reports.begin() + cell * spec.trials,
                                              reports.begin() + (cell + 1) * spec.trials);
    report.cells.push_back(aggregate(spec.cells[cell].offset, std::move(rs)));
  }
  return report;
}

namespace {

std::string fmt(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

std::string axis_label(char axis, double base, double offset, bool base_row) {
  const std::string name(1, axis);
  if (base_row) {
    return name + " = " + fmt(base, 2);
  }
  if (offset == 0.0) {
    return name;
  }
  return name + (offset > 0 ? " + " : " - ") + fmt(std::abs(offset), 2);
}

std::string steps_label(const CellResult& cell, int step_count) {
  if (cell.reports.empty()) {
    return "-";
  }
  const int first = cell.reports.front().steps_deployed;
  const bool uniform = std::all_of(cell.reports.begin(), cell.reports.end(),
                                   [&](const auto& r) { return r.steps_deployed == first; });
  if (uniform) {
    return first == step_count ? "All " + std::to_string(step_count) : "Only " + std::to_string(first);
  }
  return fmt(cell.avg_steps, 1);
}

void write_sweep_csv(std::ostream& out, const SweepReport& report) {
  out << "x_m,y_m,z_m,avg_time_elapsed_s,avg_steps_deployed,ladder_x,ladder_y,ladder_z,trials,success_trials,"
         "mean_steps,avg_drift_m,avg_hitl_events\n";
  const Vec3& b = report.base_position;
  for (const auto& c : report.cells) {
    const bool base_row = c.offset.isZero(0.0);
    const Vec3 p = b + c.offset;
    out << axis_label('x', b.x(), c.offset.x(), base_row) << ',' << axis_label('y', b.y(), c.offset.y(), base_row)
        << ',' << axis_label('z', b.z(), c.offset.z(), base_row) << ',' << fmt(c.avg_elapsed, 2) << ','
        << steps_label(c, report.step_count) << ',' << fmt(p.x(), 3) << ',' << fmt(p.y(), 3) << ','
        << fmt(p.z(), 3) << ',' << c.reports.size() << ',' << c.success_count << ',' << fmt(c.avg_steps, 2)
        << ',' << fmt(c.avg_drift, 6) << ',' << fmt(c.avg_hitl, 2) << '\n';
  }
}

nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& r : c.reports) {
      trials.push_back(deployment::to_json(r));
    }
    cells.push_back({{"offset", {c.offset.x(), c.offset.y(), c.offset.z()}},
                     {"avg_elapsed", c.avg_elapsed},
                     {"avg_steps", c.avg_steps},
                     {"avg_drift", c.avg_drift},
                     {"avg_hitl", c.avg_hitl},
                     {"success_count", c.success_count},
                     {"steps_label", steps_label(c, report.step_count)},
                     {"trials", trials}});
  }
  const Vec3& b = report.base_position;
  return {{"base", {b.x(), b.y(), b.z()}}, {"step_count", report.step_count}, {"cells", cells}};
}

// ---- plots ----

namespace {

struct Series {
  std::vector<double> t;
  std::vector<double> v;
  std::string color;
  std::string label;
  bool dashed = false;
};

struct Band {
  double t0;
  double t1;
  std::string color;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Series> series;
  std::vector<Band> bands;
};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Panel>& panels,
               const std::string& x_label) {
  constexpr double kWidth = 900;
  constexpr double kPanelHeight = 200;
  constexpr double kLeft = 80;
  constexpr double kRight = 170;
  constexpr double kTop = 40;
  constexpr double kGap = 40;
  const double height = kTop + panels.size() * (kPanelHeight + kGap) + 20;
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::ConfigInvalid, "cannot write " + path.string());
  }
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(title)
      << "</text>\n";
  const double plot_w = kWidth - kLeft - kRight;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double y0 = kTop + p * (kPanelHeight + kGap) + 15;
    double tmin = 1e300, tmax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const auto& s : panel.series) {
      for (std::size_t i = 0; i < s.t.size(); ++i) {
        tmin = std::min(tmin, s.t[i]);
        tmax = std::max(tmax, s.t[i]);
        vmin = std::min(vmin, s.v[i]);
        vmax = std::max(vmax, s.v[i]);
      }
    }
    if (tmin > tmax) {
      tmin = 0;
      tmax = 1;
      vmin = 0;
      vmax = 1;
    }
    if (tmax - tmin < 1e-12) tmax = tmin + 1;
    const double pad = std::max((vmax - vmin) * 0.08, 1e-4);
    vmin -= pad;
    vmax += pad;
    auto X = [&](double t) { return kLeft + (t - tmin) / (tmax - tmin) * plot_w; };
    auto Y = [&](double v) { return y0 + kPanelHeight - (v - vmin) / (vmax - vmin) * kPanelHeight; };
    for (const auto& b : panel.bands) {
      out << "<rect x=\"" << X(b.t0) << "\" y=\"" << y0 << "\" width=\"" << std::max(0.0, X(b.t1) - X(b.t0))
          << "\" height=\"" << kPanelHeight << "\" fill=\"" << b.color << "\" fill-opacity=\"0.18\"/>\n";
    }
    out << "<rect x=\"" << kLeft << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << kPanelHeight
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kLeft << "\" y=\"" << y0 - 5 << "\">" << esc(panel.title) << "</text>\n";
    out << "<text x=\"15\" y=\"" << y0 + kPanelHeight / 2 << "\" transform=\"rotate(-90 15 "
        << y0 + kPanelHeight / 2 << ")\" text-anchor=\"middle\">" << esc(panel.y_label) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = vmin + (vmax - vmin) * k / 4.0;
      out << "<text x=\"" << kLeft - 4 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << std::setprecision(4)
          << v << "</text>\n";
      const double t = tmin + (tmax - tmin) * k / 4.0;
      out << "<text x=\"" << X(t) << "\" y=\"" << y0 + kPanelHeight + 14 << "\" text-anchor=\"middle\">" << t
          << "</text>\n";
    }
    out << std::setprecision(6);
    int legend = 0;
    for (const auto& s : panel.series) {
      if (s.t.empty()) continue;
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.3\""
          << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      // Decimate to keep files small; the polyline stays faithful at plot resolution.
      const std::size_t stride = std::max<std::size_t>(1, s.t.size() / 2000);
      for (std::size_t i = 0; i < s.t.size(); i += stride) {
        out << X(s.t[i]) << ',' << Y(s.v[i]) << ' ';
      }
      out << X(s.t.back()) << ',' << Y(s.v.back()) << "\"/>\n";
      if (!s.label.empty()) {
        const double ly = y0 + 12 + 14 * legend++;
        out << "<line x1=\"" << kLeft + plot_w + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + plot_w + 30
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << kLeft + plot_w + 34 << "\" y=\"" << ly << "\">" << esc(s.label) << "</text>\n";
      }
    }
    if (p + 1 == panels.size()) {
      out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << y0 + kPanelHeight + 30
          << "\" text-anchor=\"middle\">" << esc(x_label) << "</text>\n";
    }
  }
  out << "</svg>\n";
}

const char* band_color(Phase p) {
  switch (p) {
    case Phase::Home:
    case Phase::DetectMarker:
    case Phase::EstimatePose:
    case Phase::Plan: return "red";
    case Phase::AlignY:
    case Phase::ApproachX:
    case Phase::Grasp:
    case Phase::UpdatePayload: return "cyan";
    default: return "green";
  }
}

std::vector<Band> phase_bands(std::span<const TrajectoryRow> rows) {
  std::vector<Band> bands;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string color = band_color(rows[i].phase);
    const double t0 = i == 0 ? rows[i].t : rows[i - 1].t;
    if (!bands.empty() && bands.back().color == color) {
      bands.back().t1 = rows[i].t;
    } else {
      bands.push_back({t0, rows[i].t, color});
    }
  }
  return bands;
}

Series axis_series(std::span<const TrajectoryRow> rows, int axis, const std::string& color, const std::string& label) {
  Series s{{}, {}, color, label, false};
  for (const auto& r : rows) {
    s.t.push_back(r.t);
    s.v.push_back(r.tool[axis]);
  }
  return s;
}

/// Tool x deviation from the lift start, one polyline per lift, against time into the lift.
std::vector<Series> lift_series(std::span<const TrajectoryRow> rows, const std::string& color,
                                const std::string& label) {
  std::vector<Series> out;
  std::size_t first = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].phase != Phase::LiftZ) continue;
    if (i == 0 || rows[i - 1].phase != Phase::LiftZ || rows[i - 1].step != rows[i].step) {
      out.push_back({{}, {}, color, out.empty() ? label : "", false});
      first = i;
    }
    out.back().t.push_back(rows[i].t - rows[first].t);
    out.back().v.push_back(rows[i].tool.x() - rows[first].tool.x());
  }
  return out;
}

nlohmann::json to_json(const PlotSummary& s) {
  return {{"lift_x_variance", s.lift_x_variance}, {"final_drift_x", s.final_drift_x}, {"steps", s.steps},
          {"step_x", s.step_x}};
}

}  // namespace

PlotSummary summarize(std::span<const TrajectoryRow> rows) {
  if (rows.empty()) {
    throw Error(ErrorCode::EmptyLog, "trajectory log has no rows");
  }
  PlotSummary s;
  std::map<int, std::vector<double>> lift_x;
  std::map<int, double> grasp_x;
  for (const auto& r : rows) {
    if (r.phase == Phase::LiftZ) {
      lift_x[r.step].push_back(r.tool.x());
    }
    if (r.phase == Phase::Grasp || r.phase == Phase::UpdatePayload) {
      grasp_x.emplace(r.step, r.tool.x());
    }
  }
  for (const auto& [step, xs] : lift_x) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size();
    s.lift_x_variance = std::max(s.lift_x_variance, var);
  }
  for (const auto& [step, x] : grasp_x) {
    s.step_x.push_back(x);
  }
  s.final_drift_x = rows.back().drift_x;
  s.steps = static_cast<int>(lift_x.size());
  return s;
}

PlotFiles emit_trajectory_plots(std::span<const TrajectoryRow> rows, std::span<const TrajectoryRow> compare,
                                const std::filesystem::path& out_dir) {
  const PlotSummary primary = summarize(rows);
  std::filesystem::create_directories(out_dir);
  PlotFiles files{out_dir / "trajectory_full.svg", out_dir / "trajectory_first_step.svg",
                  out_dir / "trajectory_lift_comparison.svg", out_dir / "trajectory_summary.json"};

  {
    Series drift{{}, {}, "black", "base drift x", true};
    for (const auto& r : rows) {
      drift.t.push_back(r.t);
      drift.v.push_back(r.drift_x);
    }
    std::vector<Panel> panels{{"end effector x", "x (m)", {axis_series(rows, 0, "#1f77b4", "tool x")}, {}},
                              {"end effector y", "y (m)", {axis_series(rows, 1, "#2ca02c", "tool y")}, {}},
                              {"end effector z", "z (m)", {axis_series(rows, 2, "#d62728", "tool z")}, {}},
                              {"ladder base drift", "x (m)", {drift}, {}}};
    write_svg(files.full_deployment, "End effector trajectory, full deployment", panels, "time (s)");
  }
  {
    std::vector<TrajectoryRow> first;
    for (const auto& r : rows) {
      if (r.step == 0) first.push_back(r);
    }
    const auto bands = phase_bands(first);
    std::vector<Panel> panels{{"x  (red: home positioning, cyan: alignment and grasping, green: deployment)", "x (m)",
                               {axis_series(first, 0, "#1f77b4", "tool x")}, bands},
                              {"y", "y (m)", {axis_series(first, 1, "#2ca02c", "tool y")}, bands},
                              {"z", "z (m)", {axis_series(first, 2, "#d62728", "tool z")}, bands}};
    write_svg(files.first_step, "End effector trajectory, first step", panels, "time (s)");
  }
  nlohmann::json summary{{"primary", to_json(primary)}};
  {
    std::vector<Panel> panels;
    Panel p{"tool x during each lift, relative to the lift start", "dx (m)", lift_series(rows, "#1f77b4", "primary log"), {}};
    if (!compare.empty()) {
      const PlotSummary other = summarize(compare);
      summary["compare"] = to_json(other);
      for (auto& s : lift_series(compare, "#ff7f0e", "comparison log")) {
        p.series.push_back(std::move(s));
      }
    }
    panels.push_back(std::move(p));
    write_svg(files.comparison, "Lift phase x deviation", panels, "time into lift (s)");
  }
  std::ofstream(files.summary) << summary.dump(2) << '\n';
  return files;
}

}  // namespace ladderbot::harness

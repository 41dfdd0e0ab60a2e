#include "ladderbot/payload.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "ladderbot/errors.hpp"

namespace ladderbot::payload {
namespace {

double total_mass(std::span<const MassComponent> components) {
  double sum = 0.0;
  for (const auto& c : components) {
    sum += c.mass;
  }
  return sum;
}

void refresh(PayloadState& s) {
  s.m_dynamic = total_mass(s.components);
  s.com = compute_com(s.components);
  s.inertia = point_mass_inertia(s.components, s.com);
}

}  // namespace

PayloadState make_payload(double tare_mass, const Vec3& tare_position, double capacity) {
  if (!(tare_mass > 0.0) || tare_mass > capacity) {
    throw Error(ErrorCode::ConfigInvalid, "gripper tare must be positive and within capacity");
  }
  PayloadState s;
  s.capacity = capacity;
  s.components.push_back({tare_mass, tare_position});
  refresh(s);
  return s;
}

Vec3 compute_com(std::span<const MassComponent> components) {
  double m = 0.0;
  Vec3 moment = Vec3::Zero();
  for (const auto& c : components) {
    m += c.mass;
    moment += c.mass * c.position;
  }
  if (!(m > 0.0)) {
    throw Error(ErrorCode::ZeroTotalMass, "center of mass needs positive total mass");
  }
  return moment / m;
}

double point_mass_inertia(std::span<const MassComponent> components, const Vec3& com) {
  double inertia = 0.0;
  for (const auto& c : components) {
    inertia += c.mass * (c.position - com).squaredNorm();
  }
  return inertia;
}

PayloadState update_mass(const PayloadState& state, double delta_m, const Vec3& position) {
  PayloadState next = state;
  next.audit.push_back({delta_m, position, state.m_dynamic + delta_m});
  if (delta_m == 0.0) {
    return next;
  }
  if (state.m_dynamic + delta_m > state.capacity) {
    throw Error(ErrorCode::CapacityExceeded, "payload " + std::to_string(state.m_dynamic + delta_m) +
                                                 " kg exceeds capacity " + std::to_string(state.capacity) + " kg");
  }
  if (delta_m > 0.0) {
    next.components.push_back({delta_m, position});
  } else {
    auto it = std::find_if(next.components.rbegin(), std::prev(next.components.rend()),
                           [&](const MassComponent& c) { return c.position == position; });
    if (it == std::prev(next.components.rend()) || it->mass + delta_m < -1e-12) {
      throw Error(ErrorCode::ConfigInvalid, "no lifted component at that position to remove");
    }
    it->mass += delta_m;
    if (std::abs(it->mass) <= 1e-12) {
      next.components.erase(std::next(it).base());
    }
  }
  refresh(next);
  return next;
}

GripCommand regulate_grip(double desired, double measured, double k_f, double max_force) {
  if (!(k_f >= 0.0 && k_f <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "grip gain k_f must lie in [0, 1]");
  }
  const double f = desired + k_f * (measured - desired);
  return {std::clamp(f, 0.0, max_force)};
}

double max_force_rate(std::span<const ForceTorqueReading> window) {
  if (window.size() < 2) {
    throw Error(ErrorCode::InsufficientSamples, "anomaly detection needs at least 2 readings");
  }
  double worst = 0.0;
  for (std::size_t i = 1; i < window.size(); ++i) {
    const double dt = window[i].timestamp - window[i - 1].timestamp;
    if (!(dt > 0.0)) {
      throw Error(ErrorCode::ProtocolViolation, "force readings must have increasing timestamps");
    }
    const Vec3 rate = (window[i].force - window[i - 1].force).cwiseAbs() / dt;
    worst = std::max(worst, rate.maxCoeff());
  }
  return worst;
}

bool detect_anomaly(std::span<const ForceTorqueReading> window, double rate_threshold) {
  return max_force_rate(window) > rate_threshold;
}

void write_force_csv(std::ostream& out, std::span<const ForceTorqueReading> readings) {
  out << "t,fx,fy,fz,tx,ty,tz\n";
  for (const auto& r : readings) {
    out << r.timestamp << ',' << r.force.x() << ',' << r.force.y() << ',' << r.force.z() << ',' << r.torque.x()
        << ',' << r.torque.y() << ',' << r.torque.z() << '\n';
  }
}

}  // namespace ladderbot::payload

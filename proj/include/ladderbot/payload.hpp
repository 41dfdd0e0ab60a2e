#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "ladderbot/pose.hpp"

namespace ladderbot::payload {

constexpr double kGravity = 9.81;
/// 3-finger gripper rated for a 10 kg grip payload.
constexpr double kGripperMaxForce = 10.0 * kGravity;
constexpr double kDefaultCapacity = 16.0;

struct MassComponent {
  double mass = 0.0;  ///< kg
  Vec3 position = Vec3::Zero();  ///< arm base frame (m)
};

struct MassUpdate {
  double delta_m = 0.0;
  Vec3 position = Vec3::Zero();
  double m_after = 0.0;
};

struct PayloadState {
  double m_dynamic = 0.0;
  Vec3 com = Vec3::Zero();
  double inertia = 0.0;  ///< point-mass sum of m_i |x_i - COM|^2 (kg m^2)
  std::vector<MassComponent> components;  ///< components[0] is the gripper tare
  double capacity = kDefaultCapacity;
  std::vector<MassUpdate> audit;
};

PayloadState make_payload(double tare_mass, const Vec3& tare_position, double capacity = kDefaultCapacity);

/// Mass-weighted mean position. Throws ZeroTotalMass when the masses sum to <= 0.
Vec3 compute_com(std::span<const MassComponent> components);

double point_mass_inertia(std::span<const MassComponent> components, const Vec3& com);

/**
 * m' = m + delta_m. Positive deltas append a component; negative deltas
 * remove mass from the most recent component at the same position.
 * Throws CapacityExceeded above the arm capacity.
 */
PayloadState update_mass(const PayloadState& state, double delta_m, const Vec3& position);

struct ForceTorqueReading {
  Vec3 force = Vec3::Zero();   ///< N
  Vec3 torque = Vec3::Zero();  ///< N m
  double timestamp = 0.0;      ///< s
};

struct GripCommand {
  double target_force = 0.0;  ///< N
};

/// F_g = F_desired + k_f (F_measured - F_desired), clamped to [0, max_force].
GripCommand regulate_grip(double desired, double measured, double k_f, double max_force = kGripperMaxForce);

/// Largest per-axis |dF/dt| over consecutive readings.
double max_force_rate(std::span<const ForceTorqueReading> window);

/// True iff max_force_rate exceeds the threshold. Needs >= 2 readings.
bool detect_anomaly(std::span<const ForceTorqueReading> window, double rate_threshold);

void write_force_csv(std::ostream& out, std::span<const ForceTorqueReading> readings);

}  // namespace ladderbot::payload

#pragma once

#include <cstdint>

#include "ladderbot/pose.hpp"

namespace ladderbot::terrain {

/**
 * @brief Phenomenological sand interaction under the ladder base.
 *
 * Cross-axis tool motion under load pushes the base along x and sinks it:
 *   g        = |vx vy| + |vy vz| + |vx vz|
 *   dx       = coupling_gain * g * (load / load_ref) * dt + noise
 *   dsink    = sinkage_gain * g * load * dt
 *   tilt     = tilt_gain * sink_depth
 * Single-axis motion makes g vanish identically.
 */
struct TerrainModel {
  double coupling_gain = 0.0;  ///< s/m
  double sinkage_gain = 0.0;   ///< m per (N s) of coupling
  double noise_sigma = 0.0;    ///< m per loaded interaction step
  double load_ref = 10.0;      ///< N
  double tilt_gain = 5.0;      ///< rad per m of sinkage
  double workspace_extent = 0.1;  ///< |base offset| bound per axis (m)
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct DriftState {
  Vec3 base_offset = Vec3::Zero();  ///< x drift and -sink_depth on z
  double sink_depth = 0.0;
  double tilt = 0.0;
  std::uint64_t noise_draws = 0;    ///< position in the noise stream

  bool operator==(const DriftState&) const = default;
};

/// Cross-axis velocity product g (m^2/s^2).
double coupling(const Vec3& v);

/// Advances the drift by one interaction step. Noise is drawn only while the
/// base carries load; the draw index makes the result a pure function of inputs.
DriftState step_interaction(const TerrainModel& model, const DriftState& state, const Vec3& tool_velocity,
                            double load, double dt);

/// Pose of the drifted base relative to its nominal pose.
Pose drift_offset(const DriftState& state);

}  // namespace ladderbot::terrain

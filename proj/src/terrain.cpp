#include "ladderbot/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ladderbot/errors.hpp"

namespace ladderbot::terrain {

void TerrainModel::validate() const {
  if (coupling_gain < 0.0 || sinkage_gain < 0.0 || noise_sigma < 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "terrain gains and noise must be non-negative");
  }
  if (!(load_ref > 0.0) || !(workspace_extent > 0.0) || tilt_gain < 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "terrain load_ref and workspace extent must be positive");
  }
}

double coupling(const Vec3& v) {
  return std::abs(v.x() * v.y()) + std::abs(v.y() * v.z()) + std::abs(v.x() * v.z());
}

DriftState step_interaction(const TerrainModel& model, const DriftState& state, const Vec3& tool_velocity,
                            double load, double dt) {
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "interaction step needs dt > 0");
  }
  DriftState next = state;
  const double g = coupling(tool_velocity);
  double dx = model.coupling_gain * g * (load / model.load_ref) * dt;
  if (model.noise_sigma > 0.0 && load > 0.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(model.rng_seed), static_cast<std::uint32_t>(model.rng_seed >> 32),
                      static_cast<std::uint32_t>(state.noise_draws),
                      static_cast<std::uint32_t>(state.noise_draws >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, model.noise_sigma);
    dx += noise(rng);
    ++next.noise_draws;
  }
  const double extent = model.workspace_extent;
  next.sink_depth = std::min(extent, state.sink_depth + model.sinkage_gain * g * load * dt);
  next.base_offset.x() = std::clamp(state.base_offset.x() + dx, -extent, extent);
  next.base_offset.z() = -next.sink_depth;
  next.tilt = model.tilt_gain * next.sink_depth;
  return next;
}

Pose drift_offset(const DriftState& state) {
  return {rot_y(state.tilt), state.base_offset};
}

}  // namespace ladderbot::terrain

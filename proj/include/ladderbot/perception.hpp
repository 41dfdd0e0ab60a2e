#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ladderbot/pose.hpp"

namespace ladderbot::perception {

using Pixel = Eigen::Vector2d;
/// Image corners in marker order: TL, TR, BR, BL (clockwise on screen).
using Corners = std::array<Pixel, 4>;

/// Pinhole camera. Pixel (i, j) covers [i, i+1) x [j, j+1).
struct CameraIntrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  Mat3 matrix() const;
  Pixel project(const Vec3& p_cam) const;
  void validate() const;
};

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  double illumination = 0.0;  ///< ground truth only; the detector never reads it
  int frame_index = 0;

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct MarkerObservation {
  int marker_id = 0;
  Corners corners{};
  Pose pose_cam_marker;
};

struct RenderModel {
  double marker_intensity = 40.0;
  double background_intensity = 220.0;
  double noise_sigma = 8.0;
};

/// Marker-frame corner coordinates (z = 0 plane, y pointing down the marker face).
std::array<Vec3, 4> marker_object_corners(double marker_size);
Corners project_marker(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size);

/**
 * @brief Render a square marker over a lit background.
 *
 * Pixel = illumination * (base + n), n ~ N(0, sigma), clamped to [0, 255],
 * where base is the area-weighted mix of marker and background intensity.
 */
Frame render_frame(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size,
                   double illumination, std::uint64_t noise_seed, int frame_index = 0,
                   const RenderModel& model = {});

/// Binarize at c (dark iff value < c) and return the corners of the largest
/// dark component when it is a convex quad covering 0.1%..60% of the frame.
std::optional<Corners> detect(const Frame& frame, int c);

inline bool detection_indicator(const Frame& frame, int c) { return detect(frame, c).has_value(); }

/// Homography initialization followed by reprojection-error refinement.
Pose estimate_marker_pose(const CameraIntrinsics& intrinsics, const Corners& corners, double marker_size);

double max_reprojection_error(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size,
                              const Corners& corners);

inline Pose compose_world_pose(const Pose& world_cam, const Pose& cam_marker) { return world_cam * cam_marker; }

// ---- coarse-to-fine threshold search ----

enum class TuneStage { Broad, Fine };

struct ThresholdTrial {
  int c = 0;
  int frame_index = 0;
  bool success = false;
};

struct ThresholdState {
  TuneStage stage = TuneStage::Broad;
  int current_c = 128;
  std::vector<ThresholdTrial> trial_log;
  int window = 10;
  std::optional<int> optimal_c;
};

/// Produces the i-th frame of a stream; must be deterministic in i.
using FrameSource = std::function<Frame(int)>;

/// Samples c uniformly in [0, 255] on successive frames until detection succeeds.
ThresholdState broad_tune(const FrameSource& frames, std::uint64_t rng_seed, int max_trials);

/// current_c plus each offset, clamped to [0, 255], duplicates dropped.
std::vector<int> fine_candidates(int current_c, std::span<const int> offsets);
std::vector<int> fine_candidates(int current_c);

/// optimal_c = argmax_c sum_i D_i(c) over frames 0..N-1 of the stream.
ThresholdState fine_tune(ThresholdState state, const FrameSource& frames, std::span<const int> candidates,
                         int window);

/// Tie rule: highest count, then closest to current_c, then smaller c.
int select_threshold(std::span<const int> candidates, std::span<const int> counts, int current_c);

void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);
void write_trial_log_csv(std::ostream& out, const ThresholdState& state);

}  // namespace ladderbot::perception

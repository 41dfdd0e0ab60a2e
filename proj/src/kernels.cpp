#include "ladderbot/kernels.hpp"

namespace ladderbot::kernels {

namespace serial {

std::vector<std::uint8_t> detection_matrix(std::span<const perception::Frame> frames, std::span<const int> candidates) {
  std::vector<std::uint8_t> out(candidates.size() * frames.size(), 0);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      out[k * frames.size() + i] = perception::detection_indicator(frames[i], candidates[k]) ? 1 : 0;
    }
  }
  return out;
}

std::array<bool, 256> threshold_window(const perception::Frame& frame) {
  std::array<bool, 256> out{};
  for (int c = 0; c < 256; ++c) {
    out[c] = perception::detection_indicator(frame, c);
  }
  return out;
}

}  // namespace serial

namespace parallel {

std::vector<std::uint8_t> detection_matrix(std::span<const perception::Frame> frames, std::span<const int> candidates) {
  const auto n_frames = static_cast<long>(frames.size());
  const auto n_cand = static_cast<long>(candidates.size());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n_cand * n_frames), 0);
#pragma omp parallel for collapse(2) schedule(dynamic)
  for (long k = 0; k < n_cand; ++k) {
    for (long i = 0; i < n_frames; ++i) {
      out[k * n_frames + i] = perception::detection_indicator(frames[i], candidates[k]) ? 1 : 0;
    }
  }
  return out;
}

std::array<bool, 256> threshold_window(const perception::Frame& frame) {
  std::array<bool, 256> out{};
#pragma omp parallel for schedule(dynamic, 8)
  for (int c = 0; c < 256; ++c) {
    out[c] = perception::detection_indicator(frame, c);
  }
  return out;
}

}  // namespace parallel

}  // namespace ladderbot::kernels

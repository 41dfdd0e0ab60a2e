#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference; tests require the two to agree exactly.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ladderbot/perception.hpp"

namespace ladderbot::kernels {

enum class Execution { Serial, Parallel };

namespace serial {

/// Row-major [candidate][frame] detection indicators.
std::vector<std::uint8_t> detection_matrix(std::span<const perception::Frame> frames, std::span<const int> candidates);

/// Indicator of detection success for every threshold 0..255.
std::array<bool, 256> threshold_window(const perception::Frame& frame);

}  // namespace serial

namespace parallel {

std::vector<std::uint8_t> detection_matrix(std::span<const perception::Frame> frames, std::span<const int> candidates);
std::array<bool, 256> threshold_window(const perception::Frame& frame);

}  // namespace parallel

inline std::vector<std::uint8_t> detection_matrix(std::span<const perception::Frame> frames,
                                                  std::span<const int> candidates, Execution exec) {
  return exec == Execution::Parallel ? parallel::detection_matrix(frames, candidates)
                                     : serial::detection_matrix(frames, candidates);
}

}  // namespace ladderbot::kernels

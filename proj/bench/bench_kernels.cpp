// Serial reference against OpenMP for each parallel kernel. Set OMP_NUM_THREADS to vary the team.

#include <benchmark/benchmark.h>

#include <vector>

#include "ladderbot/harness.hpp"
#include "ladderbot/kernels.hpp"
#include "ladderbot/perception.hpp"

using namespace ladderbot;

namespace {

std::vector<perception::Frame> make_frames(int n) {
  const perception::CameraIntrinsics k;
  const Pose pose{rot_x(0.2) * rot_y(-0.15), Vec3(0.02, -0.01, 0.45)};
  std::vector<perception::Frame> frames;
  for (int i = 0; i < n; ++i) {
    frames.push_back(perception::render_frame(k, pose, 0.08, 0.6, 100 + i, i));
  }
  return frames;
}

template <kernels::Execution Exec>
void BM_DetectionMatrix(benchmark::State& state) {
  const auto frames = make_frames(static_cast<int>(state.range(0)));
  const auto candidates = perception::fine_candidates(90);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::detection_matrix(frames, candidates, Exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(frames.size() * candidates.size()));
}

template <kernels::Execution Exec>
void BM_ThresholdWindow(benchmark::State& state) {
  const auto frame = make_frames(1).front();
  for (auto _ : state) {
    if constexpr (Exec == kernels::Execution::Parallel) {
      benchmark::DoNotOptimize(kernels::parallel::threshold_window(frame));
    } else {
      benchmark::DoNotOptimize(kernels::serial::threshold_window(frame));
    }
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

template <kernels::Execution Exec>
void BM_Sweep(benchmark::State& state) {
  Scenario sc;
  sc.ladder.step_count = 2;
  auto spec = harness::SweepSpec::table1(sc);
  spec.cells.resize(3);
  spec.trials = 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(harness::run_sweep(spec, Exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(spec.cells.size()) * spec.trials);
}

}  // namespace

BENCHMARK(BM_DetectionMatrix<kernels::Execution::Serial>)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectionMatrix<kernels::Execution::Parallel>)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ThresholdWindow<kernels::Execution::Serial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ThresholdWindow<kernels::Execution::Parallel>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Sweep<kernels::Execution::Serial>)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_Sweep<kernels::Execution::Parallel>)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();

// Serial reference vs OpenMP kernels on a loop-tiny frame.
#include "objslam/background.hpp"
#include "objslam/fusion_kernels.hpp"
#include "objslam/raycast.hpp"
#include "objslam/synthworld.hpp"
#include "objslam/tracking.hpp"

#include <benchmark/benchmark.h>

using namespace objslam;

namespace {

struct Scene {
  SequenceSpec seq = loop_sequence("loop-tiny");
  SynthFrame frame0 = render_sequence_frame(seq, 0);
  SynthFrame frame1 = render_sequence_frame(seq, 1);
  Pose pose0 = seq.trajectory.frame_pose(0);
  Pose pose1 = seq.trajectory.frame_pose(1);
  CoarseVolume background = [this] {
    CoarseVolume bg = init_background(pose0);
    for (int f = 0; f < 4; ++f)
      integrate_background(bg, render_sequence_frame(seq, f).depth, seq.trajectory.frame_pose(f),
                           seq.camera, Execution::Parallel);
    return bg;
  }();
};

const Scene& scene() {
  static const Scene s;
  return s;
}

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::Parallel : Execution::Serial;
}

void BM_Integrate(benchmark::State& state) {
  const Scene& s = scene();
  CoarseVolume bg = init_background(s.pose0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_depth(bg.volume, s.frame0.depth, s.pose0, s.seq.camera, mode(state)));
  }
}

void BM_FuseForeground(benchmark::State& state) {
  const Scene& s = scene();
  TsdfVolume vol = s.background.volume;
  Mask mask(s.seq.camera.width, s.seq.camera.height, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = s.frame0.index[i] > 1 ? 1 : 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        fuse_foreground_counts(vol, mask, s.frame0.depth, s.pose0, s.seq.camera, mode(state)));
  }
}

void BM_Raycast(benchmark::State& state) {
  const Scene& s = scene();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        raycast_layered({}, &s.background.volume, s.pose1, s.seq.camera, RaycastParams{}, mode(state)));
  }
}

void BM_Bilateral(benchmark::State& state) {
  const Scene& s = scene();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bilateral_filter(s.frame1.depth, BilateralParams{}, mode(state)));
  }
}

void BM_IcpReduce(benchmark::State& state) {
  const Scene& s = scene();
  const RenderedMaps maps =
      raycast_layered({}, &s.background.volume, s.pose0, s.seq.camera, RaycastParams{}, Execution::Parallel);
  const auto ref = build_reference_pyramid(maps, 1);
  const FramePyramid live = preprocess_frame(s.frame1.depth, s.seq.camera, BilateralParams{}, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        icp_reduce(ref[0], s.pose0, live.levels[0], s.pose0, TrackingParams{}, mode(state)));
  }
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_Integrate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FuseForeground)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Raycast)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bilateral)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IcpReduce)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

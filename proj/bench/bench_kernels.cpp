// Serial reference kernels against their OpenMP counterparts on one large
// synthetic frame.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "cellvis/camera.hpp"
#include "cellvis/kernels.hpp"

namespace {

using namespace cellvis;

const std::vector<Vec3>& points() {
  static const std::vector<Vec3> pts = [] {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> p(1 << 20);
    for (auto& v : p) v = {u(rng), u(rng) + 0.9, u(rng)};
    return p;
  }();
  return pts;
}

Pose6DoF pose() {
  Pose6DoF p;
  p.position = {0.0, 0.9, -3.0};
  return p;
}

kernels::GridIndexer grid() { return {{-1.0, -0.1, -1.0}, {0.4, 2.0 / 6, 0.25}, {5, 6, 8}}; }

template <auto Fn>
void frustum(benchmark::State& state) {
  std::vector<std::uint8_t> out(points().size());
  const CameraIntrinsics intr;
  for (auto _ : state) {
    Fn(points(), pose(), intr, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * points().size());
}

template <auto Fn>
void cells(benchmark::State& state) {
  std::vector<std::uint32_t> out(points().size());
  for (auto _ : state) benchmark::DoNotOptimize(Fn(points(), grid(), out));
  state.SetItemsProcessed(state.iterations() * points().size());
}

template <auto Fn>
void voxels(benchmark::State& state) {
  std::vector<kernels::VoxelKey> out(points().size());
  for (auto _ : state) {
    Fn(points(), 0.014, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * points().size());
}

template <auto Fn>
void flip(benchmark::State& state) {
  std::vector<Vec3> out(points().size());
  for (auto _ : state) {
    Fn(points(), pose().position, 50.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * points().size());
}

template <auto Fn>
void viewport(benchmark::State& state) {
  std::vector<std::uint32_t> out(240);
  const CameraIntrinsics intr;
  for (auto _ : state) {
    Fn(grid(), 4, pose(), intr, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(frustum<kernels::serial::frustumMask>)->Name("frustum_mask/serial");
BENCHMARK(frustum<kernels::parallel::frustumMask>)->Name("frustum_mask/parallel");
BENCHMARK(cells<kernels::serial::assignCells>)->Name("assign_cells/serial");
BENCHMARK(cells<kernels::parallel::assignCells>)->Name("assign_cells/parallel");
BENCHMARK(voxels<kernels::serial::voxelKeys>)->Name("voxel_keys/serial");
BENCHMARK(voxels<kernels::parallel::voxelKeys>)->Name("voxel_keys/parallel");
BENCHMARK(flip<kernels::serial::sphericalFlip>)->Name("spherical_flip/serial");
BENCHMARK(flip<kernels::parallel::sphericalFlip>)->Name("spherical_flip/parallel");
BENCHMARK(viewport<kernels::serial::viewportCounts>)->Name("viewport_counts/serial");
BENCHMARK(viewport<kernels::parallel::viewportCounts>)->Name("viewport_counts/parallel");

BENCHMARK_MAIN();

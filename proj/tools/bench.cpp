// Compares the serial reference kernels against their OpenMP variants and
// verifies the outputs stay bit-identical while timing both.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "voxpose/kernels.hpp"
#include "voxpose/registration.hpp"
#include "voxpose/rng.hpp"
#include "voxpose/voxelizer.hpp"

using namespace voxpose;

namespace {

double ms_of(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s %10.2f ms %10.2f ms %8.2fx   %s\n", name.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 3;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--reps" && i + 1 < argc) {
      reps = std::atoi(argv[++i]);
    } else if (arg == "--threads" && i + 1 < argc) {
      omp_set_num_threads(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--reps N] [--threads N]\n", argv[0]);
      return 2;
    }
  }
  std::printf("threads: %d, reps: %d (best-of)\n", omp_get_max_threads(), reps);
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(12345);

  {  // conv3d forward + backward at desk-scale rotation-net size
    const auto dm = kernels::conv_dims(8, 4, 40, 30, 30, 4, 5, 5, 5, 2, 2, 2, 2,
                                       2, 2);
    std::vector<float> in(dm.n * dm.c * dm.d * dm.h * dm.w);
    std::vector<float> w(dm.k * dm.c * dm.kd * dm.kh * dm.kw);
    std::vector<float> out(dm.n * dm.k * dm.od * dm.oh * dm.ow);
    std::vector<float> out2(out.size());
    for (auto& v : in) v = float(rng.uniform(-1, 1));
    for (auto& v : w) v = float(rng.uniform(-1, 1));

    const double s = ms_of(
        [&] { kernels::conv_forward(in.data(), w.data(), out.data(), dm, false); },
        reps);
    const double p = ms_of(
        [&] { kernels::conv_forward(in.data(), w.data(), out2.data(), dm, true); },
        reps);
    report("conv3d forward", s, p, out == out2);

    std::vector<float> gin1(in.size(), 0.0f), gin2(in.size(), 0.0f);
    const double sb = ms_of(
        [&] {
          std::fill(gin1.begin(), gin1.end(), 0.0f);
          kernels::conv_backward_input(out.data(), w.data(), gin1.data(), dm,
                                       false);
        },
        reps);
    const double pb = ms_of(
        [&] {
          std::fill(gin2.begin(), gin2.end(), 0.0f);
          kernels::conv_backward_input(out.data(), w.data(), gin2.data(), dm,
                                       true);
        },
        reps);
    report("conv3d backward (input)", sb, pb, gin1 == gin2);

    std::vector<float> gw1(w.size(), 0.0f), gw2(w.size(), 0.0f);
    const double sw = ms_of(
        [&] {
          std::fill(gw1.begin(), gw1.end(), 0.0f);
          kernels::conv_backward_weights(out.data(), in.data(), gw1.data(), dm,
                                         false);
        },
        reps);
    const double pw = ms_of(
        [&] {
          std::fill(gw2.begin(), gw2.end(), 0.0f);
          kernels::conv_backward_weights(out.data(), in.data(), gw2.data(), dm,
                                         true);
        },
        reps);
    report("conv3d backward (weights)", sw, pw, gw1 == gw2);
  }

  {  // voxelizer on a full workspace cloud
    const VoxelConfig cfg = translation_grid_config();
    PointCloud cloud;
    cloud.frame = Frame::base;
    for (int i = 0; i < 200000; ++i) {
      PointXYZRGB p;
      p.position = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.5),
                    rng.uniform(0.0, 0.5)};
      p.color = {uint8_t(rng.uniform_int(0, 255)),
                 uint8_t(rng.uniform_int(0, 255)),
                 uint8_t(rng.uniform_int(0, 255))};
      cloud.points.push_back(p);
    }
    VoxelGrid g1, g2;
    const double s = ms_of([&] { g1 = voxelize_serial(cloud, cfg); }, reps);
    const double p = ms_of([&] { g2 = voxelize(cloud, cfg); }, reps);
    report("voxelize 200k points", s, p,
           g1.counts == g2.counts && g1.features == g2.features);
  }

  {  // nearest-neighbour search, grid-accelerated region
    std::vector<Eigen::Vector3d> queries(20000), targets(50000);
    for (auto& q : queries) {
      q = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    }
    for (auto& t : targets) {
      t = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    }
    std::vector<int> r1, r2;
    const double s =
        ms_of([&] { r1 = nearest_neighbors_serial(queries, targets); }, reps);
    const double p = ms_of([&] { r2 = nearest_neighbors(queries, targets); }, reps);
    report("nearest neighbours 20k/50k", s, p, r1 == r2);
  }

  return 0;
}

#include "voxpose/voxelizer.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace voxpose {

void VoxelConfig::validate() const {
  if (shape[0] < 1 || shape[1] < 1 || shape[2] < 1) {
    throw std::invalid_argument("voxel grid shape must be positive");
  }
  for (int k = 0; k < 3; ++k) {
    if (!(extent[k] > 0.0)) {
      throw std::invalid_argument("voxel grid extent must be positive");
    }
  }
  if (channels != 1 && channels != 4) {
    throw std::invalid_argument("voxel grid channels must be 1 or 4");
  }
}

int64_t VoxelGrid::occupied_cells() const {
  int64_t n = 0;
  for (int32_t c : counts) n += (c > 0);
  return n;
}

Aabb default_translation_workspace() {
  Aabb box;
  box.min = {0.0, 0.0, 0.05};
  box.max = {1.0, 0.5, 0.45};
  return box;
}

VoxelConfig translation_grid_config(const Aabb& workspace,
                                    std::array<int, 3> shape, int channels) {
  VoxelConfig cfg;
  cfg.origin = workspace.min;
  cfg.extent = workspace.max - workspace.min;
  cfg.shape = shape;
  cfg.channels = channels;
  cfg.validate();
  return cfg;
}

VoxelConfig rotation_grid_config(double cx, double cy,
                                 const Eigen::Vector3d& volume,
                                 std::array<int, 3> shape, double floor_z,
                                 int channels) {
  VoxelConfig cfg;
  cfg.origin = {cx - volume.x() / 2.0, cy - volume.y() / 2.0, floor_z};
  cfg.extent = volume;
  cfg.shape = shape;
  cfg.channels = channels;
  cfg.validate();
  return cfg;
}

namespace {

// Integer accumulators; integer addition is associative, so chunked merges
// reproduce the sequential result exactly.
struct BinAccum {
  std::vector<int32_t> counts;
  std::vector<int64_t> rgb;  // 3 sums per cell, in-order r, g, b

  explicit BinAccum(int64_t cells) : counts(cells, 0), rgb(3 * cells, 0) {}

  void add(int64_t cell, const std::array<uint8_t, 3>& color) {
    counts[cell] += 1;
    rgb[3 * cell + 0] += color[0];
    rgb[3 * cell + 1] += color[1];
    rgb[3 * cell + 2] += color[2];
  }

  void merge(const BinAccum& other) {
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    for (size_t i = 0; i < rgb.size(); ++i) rgb[i] += other.rgb[i];
  }
};

// floor binning; returns false when the point falls outside the volume
inline bool cell_of(const VoxelConfig& cfg, const Eigen::Vector3d& cell_size,
                    const Eigen::Vector3d& p, int64_t* cell) {
  int64_t idx[3];
  for (int k = 0; k < 3; ++k) {
    const double f = std::floor((p[k] - cfg.origin[k]) / cell_size[k]);
    if (!(f >= 0.0 && f < static_cast<double>(cfg.shape[k]))) return false;
    idx[k] = static_cast<int64_t>(f);
  }
  *cell = (idx[2] * cfg.shape[1] + idx[1]) * cfg.shape[0] + idx[0];
  return true;
}

VoxelGrid finalize(const VoxelConfig& cfg, BinAccum&& acc) {
  VoxelGrid grid;
  grid.config = cfg;
  const int64_t cells = cfg.cell_count();
  grid.counts = std::move(acc.counts);
  grid.features.assign(int64_t(cfg.channels) * cells, 0.0);
  for (int64_t i = 0; i < cells; ++i) {
    const int32_t n = grid.counts[i];
    if (n == 0) continue;
    grid.features[i] = 1.0;
    if (cfg.channels == 4) {
      for (int ch = 0; ch < 3; ++ch) {
        grid.features[(ch + 1) * cells + i] =
            static_cast<double>(acc.rgb[3 * i + ch]) / (255.0 * n);
      }
    }
  }
  return grid;
}

}  // namespace

VoxelGrid voxelize_serial(const PointCloud& cloud, const VoxelConfig& cfg) {
  cfg.validate();
  const Eigen::Vector3d cell_size = cfg.cell_size();
  BinAccum acc(cfg.cell_count());
  for (const PointXYZRGB& p : cloud.points) {
    int64_t cell;
    if (cell_of(cfg, cell_size, p.position, &cell)) acc.add(cell, p.color);
  }
  return finalize(cfg, std::move(acc));
}

VoxelGrid voxelize(const PointCloud& cloud, const VoxelConfig& cfg) {
  cfg.validate();
  const int64_t n = static_cast<int64_t>(cloud.points.size());
  const int threads = omp_get_max_threads();
  if (threads <= 1 || n < 4096) return voxelize_serial(cloud, cfg);

  const Eigen::Vector3d cell_size = cfg.cell_size();
  const int64_t cells = cfg.cell_count();
  const int chunks = threads;
  const int64_t chunk_len = (n + chunks - 1) / chunks;

  std::vector<BinAccum> partial(chunks, BinAccum(cells));
#pragma omp parallel for schedule(static, 1)
  for (int chunk = 0; chunk < chunks; ++chunk) {
    const int64_t lo = chunk * chunk_len;
    const int64_t hi = std::min(n, lo + chunk_len);
    BinAccum& acc = partial[chunk];
    for (int64_t i = lo; i < hi; ++i) {
      int64_t cell;
      if (cell_of(cfg, cell_size, cloud.points[i].position, &cell)) {
        acc.add(cell, cloud.points[i].color);
      }
    }
  }
  // merge in fixed chunk order
  for (int chunk = 1; chunk < chunks; ++chunk) partial[0].merge(partial[chunk]);
  return finalize(cfg, std::move(partial[0]));
}

void save_grid(const std::filesystem::path& path, const VoxelGrid& grid) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    const auto& s = grid.config.shape;
    f << s[0] << " " << s[1] << " " << s[2] << " " << grid.config.channels
      << "\n";
    char buf[40];
    const int64_t row = s[0];
    for (int64_t i = 0; i < static_cast<int64_t>(grid.features.size()); ++i) {
      const int n =
          std::snprintf(buf, sizeof(buf), "%.17g%c", grid.features[i],
                        (i % row == row - 1) ? '\n' : ' ');
      f.write(buf, n);
    }
    if (!f) throw std::runtime_error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

VoxelGrid load_grid(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  VoxelGrid grid;
  auto& s = grid.config.shape;
  int channels = 0;
  if (!(f >> s[0] >> s[1] >> s[2] >> channels)) {
    throw std::runtime_error("bad grid header in " + path.string());
  }
  grid.config.channels = channels;
  // geometry is not part of the dump; keep unit extent
  grid.config.extent = {double(s[0]), double(s[1]), double(s[2])};
  const int64_t total = int64_t(channels) * grid.config.cell_count();
  grid.features.resize(total);
  for (int64_t i = 0; i < total; ++i) {
    if (!(f >> grid.features[i])) {
      throw std::runtime_error("truncated grid dump " + path.string());
    }
  }
  return grid;
}

}  // namespace voxpose

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "voxpose/pointcloud.hpp"

namespace voxpose {

// Geometry of a dense voxel volume. `shape` counts cells along (x, y, z);
// the feature tensor is laid out C x D x H x W with W = x, H = y, D = z
// (bird's-eye arrangement).
struct VoxelConfig {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();   // metres, base frame
  Eigen::Vector3d extent = Eigen::Vector3d::Ones();   // metres
  std::array<int, 3> shape = {1, 1, 1};               // cells along x, y, z
  int channels = 4;                                   // 1 = occupancy, 4 = +RGB

  Eigen::Vector3d cell_size() const {
    return {extent.x() / shape[0], extent.y() / shape[1], extent.z() / shape[2]};
  }
  int64_t cell_count() const {
    return int64_t(shape[0]) * shape[1] * shape[2];
  }
  void validate() const;
};

// Channel 0 is occupancy; channels 1..3 are the mean R/G/B of contributing
// points scaled to [0,1], zero where unoccupied.
struct VoxelGrid {
  VoxelConfig config;
  std::vector<double> features;   // C * D * H * W
  std::vector<int32_t> counts;    // D * H * W

  int64_t feature_index(int c, int iz, int iy, int ix) const {
    const auto& s = config.shape;
    return ((int64_t(c) * s[2] + iz) * s[1] + iy) * s[0] + ix;
  }
  int64_t cell_index(int iz, int iy, int ix) const {
    const auto& s = config.shape;
    return (int64_t(iz) * s[1] + iy) * s[0] + ix;
  }
  int64_t occupied_cells() const;
};

// Default workspace volume: 1.0 x 0.5 x 0.40 m starting 5 cm above the
// workbench, voxelized at 1 cm cells.
Aabb default_translation_workspace();
VoxelConfig translation_grid_config(const Aabb& workspace = default_translation_workspace(),
                                    std::array<int, 3> shape = {100, 50, 40},
                                    int channels = 4);

// Rotation volume centred on (cx, cy); the grid shape stays fixed while the
// volume scales, so smaller volumes mean finer cells.
VoxelConfig rotation_grid_config(double cx, double cy,
                                 const Eigen::Vector3d& volume = {0.30, 0.30, 0.40},
                                 std::array<int, 3> shape = {60, 60, 80},
                                 double floor_z = 0.05, int channels = 4);

// Bins a base-frame cloud into the grid. Points outside [origin,
// origin+extent) are ignored. Accumulation is in integers, so the parallel
// and serial paths are bit-identical for any thread count.
VoxelGrid voxelize(const PointCloud& cloud, const VoxelConfig& cfg);
VoxelGrid voxelize_serial(const PointCloud& cloud, const VoxelConfig& cfg);

// Debug dump: header `W H D C`, then C*D*H*W decimals in C, D, H, W order.
void save_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_grid(const std::filesystem::path& path);

}  // namespace voxpose

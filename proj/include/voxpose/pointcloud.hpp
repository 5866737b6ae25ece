#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "voxpose/geometry.hpp"

namespace voxpose {

struct PointXYZRGB {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::array<uint8_t, 3> color = {0, 0, 0};
};

// Ordered, immutable-by-convention point container. All operations return
// new clouds; concurrent reads are safe.
struct PointCloud {
  std::vector<PointXYZRGB> points;
  Frame frame = Frame::camera;

  size_t size() const { return points.size(); }
};

// Axis-aligned box, half-open: a point belongs iff min <= p < max per axis.
struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    for (int k = 0; k < 3; ++k) {
      if (!(p[k] >= min[k] && p[k] < max[k])) return false;
    }
    return true;
  }
};

struct PlyError : std::runtime_error {
  explicit PlyError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")"
                                    : msg),
        line_number(line) {}
  int line_number = 0;
};

// ASCII PLY subset: float x/y/z plus uchar red/green/blue. The loaded frame
// defaults to camera; callers retag via `frame` when the file is known to be
// in another frame.
PointCloud load_ply(const std::filesystem::path& path);
void save_ply(const std::filesystem::path& path, const PointCloud& cloud);

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);
PointCloud crop_box(const PointCloud& cloud, const Aabb& box);

}  // namespace voxpose

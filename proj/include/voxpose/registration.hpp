#pragma once

#include <filesystem>
#include <vector>

#include "voxpose/pointcloud.hpp"

namespace voxpose {

// Paired points: the fitted transform maps a-points onto b-points.
struct Correspondences {
  std::vector<Eigen::Vector3d> a;
  std::vector<Eigen::Vector3d> b;
};

struct RegistrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Least-squares rigid fit (SVD-based orthogonal Procrustes) minimizing
// sum |T*a_i - b_i|^2, with the reflection corrected to det(R) = +1.
RigidTransform fit_rigid(const Correspondences& c, Frame from = Frame::base,
                         Frame to = Frame::base);

struct IcpConfig {
  int max_iterations = 50;
  double tolerance = 1e-9;  // metres, on the RMS change between iterations
  RigidTransform initial;   // rough alignment
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;
  int iterations = 0;
  std::vector<double> residual_history;  // RMS after each correspondence pass
};

// Point-to-point ICP from source to target. The residual sequence is
// monotonically non-increasing; convergence to the global optimum is not
// guaranteed from a poor initial guess.
IcpResult icp(const PointCloud& source, const PointCloud& target,
              const IcpConfig& cfg);

// Exact nearest-neighbour indices into `targets` for every query. Brute
// force below 5000 targets, a uniform-grid accelerator (still exact) above.
// Ties break to the lowest target index in both paths.
std::vector<int> nearest_neighbors(const std::vector<Eigen::Vector3d>& queries,
                                   const std::vector<Eigen::Vector3d>& targets,
                                   bool parallel = true);
std::vector<int> nearest_neighbors_serial(
    const std::vector<Eigen::Vector3d>& queries,
    const std::vector<Eigen::Vector3d>& targets);

// CSV lines `ax,ay,az,bx,by,bz` in metres.
Correspondences load_correspondences_csv(const std::filesystem::path& path);

}  // namespace voxpose

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "voxpose/netmodels.hpp"
#include "voxpose/synthdata.hpp"

namespace voxpose {

// Grid geometry shared by the two stages. The translation grid is fixed;
// the rotation grid is re-centred on each stage-1 estimate.
struct PipelineConfig {
  VoxelConfig translation_grid;
  Eigen::Vector3d rotation_volume = {0.30, 0.30, 0.40};
  std::array<int, 3> rotation_shape = {60, 60, 80};
  double floor_z = 0.05;
  int channels = 4;

  VoxelConfig rotation_grid_at(double cx, double cy) const {
    return rotation_grid_config(cx, cy, rotation_volume, rotation_shape, floor_z,
                                channels);
  }

  static PipelineConfig full_scale();
  static PipelineConfig desk_scale();
  // Recovers the geometry both checkpoints were trained with.
  static PipelineConfig from_models(const Model& tnet, const Model& rnet);
};

struct PoseEstimate {
  double x = 0.0;
  double y = 0.0;
  int yaw_class = 0;
  double yaw_deg = 0.0;
  std::vector<double> probabilities;  // 72 entries, sums to 1
};

struct NoObjectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EstimateDiag {
  Eigen::Vector3d crop_origin = Eigen::Vector3d::Zero();
  int64_t coarse_points = 0;  // points binned by the workspace grid
  int64_t fine_points = 0;
};

// Stage 1: workspace voxels -> (x, y). Throws NoObjectError when no point
// falls inside the workspace volume.
std::pair<double, double> estimate_translation(const PointCloud& base_cloud,
                                               const Model& tnet,
                                               const VoxelConfig& grid,
                                               int64_t* binned_points = nullptr);
// Stage 2: fine voxels around (cx, cy) -> yaw class (argmax; ties to the
// lowest index).
PoseEstimate estimate_rotation(const PointCloud& base_cloud, double cx, double cy,
                               const Model& rnet, const PipelineConfig& cfg,
                               EstimateDiag* diag = nullptr);
// Full pipeline on a camera-frame cloud.
PoseEstimate estimate_pose(const PointCloud& camera_cloud,
                           const RigidTransform& t_c2b, const Model& tnet,
                           const Model& rnet, const PipelineConfig& cfg,
                           EstimateDiag* diag = nullptr);

enum class Task { translation, rotation };
Task task_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch = 50;
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;
};

// A labelled cloud already expressed in the base frame.
struct TrainSample {
  PointCloud base_cloud;
  PlanarPose label;
  int yaw_class = 0;
};

std::vector<TrainSample> load_split(const Dataset& ds, const std::string& split);

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // rotation only
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool has_val = false;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

// Seeded-shuffle mini-batch loop; the final partial batch is kept. The
// validation split is scored every epoch for the log; the returned model is
// simply the last epoch's.
TrainResult train(Model& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, Task task,
                  const TrainConfig& cfg, const PipelineConfig& pipeline);

void save_loss_history(const std::filesystem::path& path, Task task,
                       const TrainResult& result);

struct MetricsReport {
  double e_x = 0.0;        // metres
  double e_y = 0.0;        // metres
  double e_psi = 0.0;      // degrees
  double accuracy = 0.0;   // exact-class fraction
  int n = 0;
  std::vector<double> x_errors;
  std::vector<double> y_errors;
  std::vector<double> yaw_errors;  // degrees
};

// 5 * min(|a-b|, 72-|a-b|) degrees.
double yaw_class_error_deg(int a, int b);

MetricsReport evaluate(const Model& tnet, const Model& rnet,
                       const std::vector<TrainSample>& test_set,
                       const PipelineConfig& cfg);

// metrics.csv plus 1 cm / 5 degree histograms as CSV and SVG bar charts.
void emit_report(const MetricsReport& report, const std::filesystem::path& outdir);

}  // namespace voxpose

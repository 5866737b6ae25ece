#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxpose/pointcloud.hpp"
#include "voxpose/rng.hpp"

namespace voxpose {

// Object-frame cuboid with a flat color.
struct Cuboid {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
  std::array<uint8_t, 3> color;
};

// Union of cuboids standing on z = 0 in the object frame. The yaw-0
// convention puts the most prominent feature (the handle) along +x, which
// also guarantees yaw identifiability: the volume centroid sits off the
// z-axis, so no rotation about z maps the shape onto itself.
struct ObjectTemplate {
  std::string name;
  std::vector<Cuboid> parts;

  Eigen::Vector3d volume_centroid() const;
  double bounding_radius_xy() const;
  double surface_area() const;
};

struct TemplateSpec {
  Eigen::Vector3d body_size = {0.10, 0.10, 0.20};
  Eigen::Vector3d handle_size = {0.06, 0.02, 0.04};
  std::array<uint8_t, 3> body_color = {40, 80, 200};
  std::array<uint8_t, 3> handle_color = {220, 50, 30};
  double dimension_jitter = 0.0;  // relative, applied per axis from the seed
};

struct SymmetryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Body cuboid centred on the object z-axis plus a handle cuboid attached to
// the +x face at mid-height. Rejects specs whose centroid stays on the
// z-axis (yaw would be unidentifiable).
ObjectTemplate make_template(const TemplateSpec& spec, uint64_t seed);

void save_template_json(const std::filesystem::path& path, const ObjectTemplate& t);
ObjectTemplate load_template_json(const std::filesystem::path& path);

// Virtual RGB-D sensor: pinhole camera with a z-buffer for visibility,
// Gaussian ray noise, and circular dropout patches that mimic MoCap markers
// invisible to the sensor.
struct SensorConfig {
  RigidTransform t_c2b;  // camera -> base
  int width = 320;
  int height = 240;
  double hfov_deg = 70.0;
  double noise_sigma = 0.003;     // metres, along the viewing ray
  int void_count_min = 3;
  int void_count_max = 5;
  double void_radius = 0.005;     // metres
  double sample_spacing = 0.004;  // surface sampling grid (>= 4 points/cm^2)

  // 45 degrees looking down from ~1 m standoff at the workspace centre.
  static SensorConfig defaults();
};

void save_sensor_json(const std::filesystem::path& path, const SensorConfig& s);
SensorConfig load_sensor_json(const std::filesystem::path& path);

struct Sample {
  PointCloud cloud;  // camera frame
  PlanarPose label;
  int yaw_class = 0;
};

// Bench area poses may occupy; the translation grid floor sits 5 cm above
// its bottom.
Aabb default_bench();

// Renders the template at `pose` (upright on the bench). Deterministic per
// (inputs, seed); the surface-sampling, noise and void streams are seeded
// independently so disabling one does not shift the others.
Sample render_sample(const ObjectTemplate& tmpl, const PlanarPose& pose,
                     const SensorConfig& sensor, uint64_t seed);

// Uniform pose draw with enough margin that the rotated object stays on the
// bench.
PlanarPose sample_pose(Rng& rng, const ObjectTemplate& tmpl, const Aabb& bench);

// Dense object-frame surface cloud over every face (no visibility), used as
// the registration target when refitting the template to rendered clouds.
PointCloud template_surface_cloud(const ObjectTemplate& tmpl, double spacing);

struct DatasetSpec {
  int n = 1000;
  int train = 600;
  int val = 200;
  int test = 200;
  uint64_t seed = 0;
};

struct SampleMeta {
  int id = 0;
  std::string ply;  // relative path
  double x = 0, y = 0, yaw_deg = 0;
  int yaw_class = 0;
  std::string split;  // train / val / test / unused
};

struct Dataset {
  std::filesystem::path dir;
  ObjectTemplate object;
  SensorConfig sensor;
  uint64_t seed = 0;
  std::vector<SampleMeta> samples;

  std::vector<int> split_ids(const std::string& split) const;
};

// Writes manifest.json, sensor.json, template.json and one PLY per sample.
// The whole directory is staged and renamed so failures leave no partial
// dataset behind.
Dataset generate_dataset(const ObjectTemplate& tmpl, const SensorConfig& sensor,
                         const DatasetSpec& spec,
                         const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);
PointCloud load_sample_cloud(const Dataset& ds, int id);  // camera frame

}  // namespace voxpose

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "voxpose/registration.hpp"
#include "voxpose/synthdata.hpp"

using namespace voxpose;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SensorConfig noiseless_sensor() {
  SensorConfig s = SensorConfig::defaults();
  s.noise_sigma = 0.0;
  s.void_count_min = 0;
  s.void_count_max = 0;
  return s;
}

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a.points[i].position != b.points[i].position) return false;
    if (a.points[i].color != b.points[i].color) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("default template: handle sticks out past the body") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  REQUIRE(t.parts.size() == 2);
  const Cuboid& body = t.parts[0];
  const Cuboid& handle = t.parts[1];
  const double handle_cx = (handle.min.x() + handle.max.x()) / 2.0;
  CHECK(handle_cx > body.max.x());
  CHECK(t.volume_centroid().head<2>().norm() > 1e-3);
  CHECK(t.bounding_radius_xy() > 0.1);
}

TEST_CASE("symmetric specs are rejected") {
  TemplateSpec no_handle;
  no_handle.handle_size = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(make_template(no_handle, 0), SymmetryError);

  TemplateSpec flat;
  flat.body_size = {0.1, 0.1, 0.0};
  CHECK_THROWS_AS(make_template(flat, 0), SymmetryError);
}

TEST_CASE("template construction is deterministic per seed") {
  TemplateSpec spec;
  spec.dimension_jitter = 0.1;
  const ObjectTemplate a = make_template(spec, 42);
  const ObjectTemplate b = make_template(spec, 42);
  const ObjectTemplate c = make_template(spec, 43);
  REQUIRE(a.parts.size() == b.parts.size());
  for (size_t i = 0; i < a.parts.size(); ++i) {
    CHECK(a.parts[i].min == b.parts[i].min);
    CHECK(a.parts[i].max == b.parts[i].max);
  }
  CHECK(a.parts[0].max != c.parts[0].max);
}

TEST_CASE("template json round trip") {
  const auto dir = temp_dir("voxpose_synth_tmpl");
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  save_template_json(dir / "template.json", t);
  const ObjectTemplate back = load_template_json(dir / "template.json");
  REQUIRE(back.parts.size() == t.parts.size());
  for (size_t i = 0; i < t.parts.size(); ++i) {
    CHECK(back.parts[i].min == t.parts[i].min);
    CHECK(back.parts[i].max == t.parts[i].max);
    CHECK(back.parts[i].color == t.parts[i].color);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sensor defaults look at the workspace centre from above") {
  const SensorConfig s = SensorConfig::defaults();
  CHECK(s.t_c2b.from == Frame::camera);
  CHECK(s.t_c2b.to == Frame::base);
  // optical axis pitched 45 degrees down
  const Eigen::Vector3d axis = s.t_c2b.rotation.col(2);
  CHECK(axis.z() == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-9));
  // ~1 m standoff from the point it is aimed at
  const Eigen::Vector3d target = s.t_c2b.apply(Eigen::Vector3d(0, 0, 1.0));
  CHECK((target - Eigen::Vector3d(0.5, 0.25, 0.10)).norm() < 1e-9);
  // round trip through json
  const auto dir = temp_dir("voxpose_synth_sensor");
  save_sensor_json(dir / "sensor.json", s);
  const SensorConfig back = load_sensor_json(dir / "sensor.json");
  CHECK(back.t_c2b.rotation == s.t_c2b.rotation);
  CHECK(back.noise_sigma == s.noise_sigma);
  CHECK(back.width == s.width);
  std::filesystem::remove_all(dir);
}

TEST_CASE("rendering is deterministic per seed") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  const SensorConfig s = SensorConfig::defaults();
  PlanarPose pose;
  pose.x = 0.5;
  pose.y = 0.25;
  pose.yaw_deg = 117.0;
  const Sample a = render_sample(t, pose, s, 999);
  const Sample b = render_sample(t, pose, s, 999);
  CHECK(same_cloud(a.cloud, b.cloud));
  CHECK(a.yaw_class == yaw_to_class(117.0).index);
  const Sample c = render_sample(t, pose, s, 1000);
  CHECK(!same_cloud(a.cloud, c.cloud));
}

TEST_CASE("rendered points lie on front-facing surfaces only") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  const SensorConfig s = noiseless_sensor();
  PlanarPose pose;
  pose.x = 0.45;
  pose.y = 0.3;
  pose.yaw_deg = 203.0;
  const Sample sample = render_sample(t, pose, s, 7);
  REQUIRE(sample.cloud.size() > 500);

  const RigidTransform t_o2b = pose_to_transform(pose);
  const RigidTransform t_c2o = compose(s.t_c2b, invert(t_o2b));
  const Eigen::Vector3d cam_in_obj = t_c2o.translation;

  int matched = 0;
  for (const PointXYZRGB& p : sample.cloud.points) {
    const Eigen::Vector3d q = t_c2o.apply(p.position);  // object frame
    // identify the face the point was sampled on
    bool found = false;
    for (const Cuboid& cub : t.parts) {
      for (int axis = 0; axis < 3 && !found; ++axis) {
        for (int side = 0; side < 2 && !found; ++side) {
          const double plane = side ? cub.max[axis] : cub.min[axis];
          if (std::abs(q[axis] - plane) > 1e-9) continue;
          bool inside = true;
          for (int k = 0; k < 3; ++k) {
            if (k == axis) continue;
            inside = inside && q[k] >= cub.min[k] - 1e-9 &&
                     q[k] <= cub.max[k] + 1e-9;
          }
          if (!inside) continue;
          Eigen::Vector3d normal = Eigen::Vector3d::Zero();
          normal[axis] = side ? 1.0 : -1.0;
          // front-facing: the outward normal points towards the camera
          CHECK(normal.dot(q - cam_in_obj) < 0.0);
          found = true;
        }
      }
      if (found) break;
    }
    matched += found;
  }
  CHECK(matched == int(sample.cloud.size()));
}

TEST_CASE("handle direction in the base frame follows the yaw label") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  const SensorConfig s = noiseless_sensor();
  for (double yaw : {0.0, 45.0, 135.0, 250.0}) {
    PlanarPose pose;
    pose.x = 0.5;
    pose.y = 0.25;
    pose.yaw_deg = yaw;
    const Sample sample = render_sample(t, pose, s, 11);
    const PointCloud base = transform_cloud(sample.cloud, s.t_c2b);

    Eigen::Vector2d handle_centroid = Eigen::Vector2d::Zero();
    int handle_count = 0;
    for (const auto& p : base.points) {
      if (p.color == t.parts[1].color) {
        handle_centroid += p.position.head<2>();
        ++handle_count;
      }
    }
    REQUIRE(handle_count > 8);  // the handle is small and partly occluded
    handle_centroid /= handle_count;
    const Eigen::Vector2d dir = handle_centroid - Eigen::Vector2d(pose.x, pose.y);
    const double got = normalize_yaw_deg(std::atan2(dir.y(), dir.x()) * 180.0 / M_PI);
    const double diff = std::abs(normalize_yaw_deg(got - yaw + 180.0) - 180.0);
    CHECK(diff < 10.0);  // centroid of the visible half can be slightly off-axis
  }
}

TEST_CASE("void patches only remove points") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  SensorConfig with_voids = noiseless_sensor();
  with_voids.void_count_min = 3;
  with_voids.void_count_max = 5;
  SensorConfig without = noiseless_sensor();

  PlanarPose pose;
  pose.x = 0.55;
  pose.y = 0.2;
  pose.yaw_deg = 30.0;
  const Sample a = render_sample(t, pose, with_voids, 321);
  const Sample b = render_sample(t, pose, without, 321);
  CHECK(a.cloud.size() < b.cloud.size());

  // every surviving point exists, untouched, in the void-free render
  std::map<std::array<double, 3>, int> reference;
  for (const auto& p : b.cloud.points) {
    reference[{p.position.x(), p.position.y(), p.position.z()}] += 1;
  }
  for (const auto& p : a.cloud.points) {
    auto it = reference.find({p.position.x(), p.position.y(), p.position.z()});
    REQUIRE(it != reference.end());
    REQUIRE(it->second > 0);
    it->second -= 1;
  }
}

TEST_CASE("clouds stay inside the bench volume plus noise margin") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  SensorConfig s = SensorConfig::defaults();  // sigma 3 mm
  Rng rng(2718);
  const Aabb bench = default_bench();
  const double margin = 4.0 * s.noise_sigma;
  for (int i = 0; i < 10; ++i) {
    const PlanarPose pose = sample_pose(rng, t, bench);
    const Sample sample = render_sample(t, pose, s, 5000 + i);
    const PointCloud base = transform_cloud(sample.cloud, s.t_c2b);
    for (const auto& p : base.points) {
      for (int k = 0; k < 3; ++k) {
        CHECK(p.position[k] >= bench.min[k] - margin);
        CHECK(p.position[k] <= bench.max[k] + margin);
      }
    }
  }
}

TEST_CASE("pose sampling is uniform over yaw classes") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  Rng rng(31416);
  std::array<int, 72> hist{};
  const int n = 7200;
  for (int i = 0; i < n; ++i) {
    const PlanarPose p = sample_pose(rng, t, default_bench());
    hist[yaw_to_class(p.yaw_deg).index] += 1;
    CHECK(p.x >= 0.1);
    CHECK(p.x <= 0.9);
    CHECK(p.y >= 0.1);
    CHECK(p.y <= 0.4);
  }
  for (int c = 0; c < 72; ++c) {
    CHECK(hist[c] >= 70);  // within +-30% of the expected 100
    CHECK(hist[c] <= 130);
  }
}

TEST_CASE("render rejects poses off the bench") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  PlanarPose outside;
  outside.x = 1.5;
  outside.y = 0.25;
  CHECK_THROWS_AS(render_sample(t, outside, SensorConfig::defaults(), 1),
                  std::invalid_argument);
}

TEST_CASE("label fidelity: template refit recovers the pose") {
  const ObjectTemplate tmpl = make_template(TemplateSpec{}, 0);
  const SensorConfig sensor = noiseless_sensor();
  // a fine target grid keeps correspondence quantization well under 1 mm
  const PointCloud target = template_surface_cloud(tmpl, 0.001);
  Rng rng(161803);
  for (int i = 0; i < 5; ++i) {
    const PlanarPose pose = sample_pose(rng, tmpl, default_bench());
    const Sample sample = render_sample(tmpl, pose, sensor, 100 + i);
    PointCloud base = transform_cloud(sample.cloud, sensor.t_c2b);

    // init: the true pose perturbed by a few millimetres / degrees
    PlanarPose guess = pose;
    guess.x += rng.uniform(-0.005, 0.005);
    guess.y += rng.uniform(-0.005, 0.005);
    guess.yaw_deg += rng.uniform(-2.0, 2.0);

    IcpConfig cfg;
    cfg.initial = invert(pose_to_transform(guess));  // base -> object
    cfg.max_iterations = 60;
    const IcpResult r = icp(base, target, cfg);
    const PlanarPose fitted = transform_to_pose(invert(r.transform));
    CHECK(std::abs(fitted.x - pose.x) < 0.001);
    CHECK(std::abs(fitted.y - pose.y) < 0.001);
    const double yaw_diff =
        std::abs(normalize_yaw_deg(fitted.yaw_deg - pose.yaw_deg + 180.0) - 180.0);
    CHECK(yaw_diff < 0.5);
  }
}

TEST_CASE("dataset generation: splits, manifest determinism, round trip") {
  const ObjectTemplate t = make_template(TemplateSpec{}, 0);
  const SensorConfig s = SensorConfig::defaults();
  DatasetSpec spec;
  spec.n = 24;
  spec.train = 14;
  spec.val = 5;
  spec.test = 5;
  spec.seed = 77;
  const auto dir = temp_dir("voxpose_synth_ds");

  const Dataset ds = generate_dataset(t, s, spec, dir / "ds");
  REQUIRE(ds.samples.size() == 24);
  CHECK(ds.split_ids("train").size() == 14);
  CHECK(ds.split_ids("val").size() == 5);
  CHECK(ds.split_ids("test").size() == 5);

  // disjoint cover
  std::map<int, int> seen;
  for (const auto& split : {"train", "val", "test"}) {
    for (int id : ds.split_ids(split)) seen[id] += 1;
  }
  CHECK(seen.size() == 24);
  for (const auto& [id, n] : seen) {
    CHECK(n == 1);
    (void)id;
  }

  // same seed, second directory: identical manifests and clouds
  const Dataset ds2 = generate_dataset(t, s, spec, dir / "ds2");
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(ds.samples[i].x == ds2.samples[i].x);
    CHECK(ds.samples[i].y == ds2.samples[i].y);
    CHECK(ds.samples[i].yaw_deg == ds2.samples[i].yaw_deg);
    CHECK(ds.samples[i].split == ds2.samples[i].split);
  }
  CHECK(same_cloud(load_sample_cloud(ds, 0), load_sample_cloud(ds2, 0)));

  // reload from disk
  const Dataset back = load_dataset(dir / "ds");
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.seed == 77);
  CHECK(back.samples[3].yaw_class == ds.samples[3].yaw_class);
  CHECK(back.sensor.noise_sigma == s.noise_sigma);
  const PointCloud c0 = load_sample_cloud(back, 0);
  CHECK(c0.size() > 100);

  CHECK_THROWS_AS(
      generate_dataset(t, s, DatasetSpec{10, 8, 2, 2, 0}, dir / "bad"),
      std::invalid_argument);
  std::filesystem::remove_all(dir);
}

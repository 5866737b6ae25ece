#include "voxpose/synthdata.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace voxpose {

using nlohmann::json;

// ---------------------------------------------------------------------------
// templates
// ---------------------------------------------------------------------------

Eigen::Vector3d ObjectTemplate::volume_centroid() const {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (const Cuboid& c : parts) {
    const Eigen::Vector3d size = c.max - c.min;
    const double vol = size.x() * size.y() * size.z();
    acc += vol * (c.min + c.max) / 2.0;
    total += vol;
  }
  if (total <= 0.0) throw SymmetryError("template has zero volume");
  return acc / total;
}

double ObjectTemplate::bounding_radius_xy() const {
  double r = 0.0;
  for (const Cuboid& c : parts) {
    for (double x : {c.min.x(), c.max.x()}) {
      for (double y : {c.min.y(), c.max.y()}) {
        r = std::max(r, std::hypot(x, y));
      }
    }
  }
  return r;
}

double ObjectTemplate::surface_area() const {
  double a = 0.0;
  for (const Cuboid& c : parts) {
    const Eigen::Vector3d s = c.max - c.min;
    a += 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
  }
  return a;
}

ObjectTemplate make_template(const TemplateSpec& spec, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xfeed));
  auto jitter = [&](double v) {
    if (spec.dimension_jitter <= 0.0) return v;
    return v * (1.0 + spec.dimension_jitter * (2.0 * rng.uniform() - 1.0));
  };
  Eigen::Vector3d body, handle;
  for (int k = 0; k < 3; ++k) body[k] = jitter(spec.body_size[k]);
  for (int k = 0; k < 3; ++k) handle[k] = jitter(spec.handle_size[k]);

  for (int k = 0; k < 3; ++k) {
    if (!(body[k] > 0.0)) throw SymmetryError("degenerate body dimensions");
  }

  ObjectTemplate t;
  t.name = "cuboid-with-handle";
  // body centred on the z-axis, standing on z = 0
  t.parts.push_back(Cuboid{{-body.x() / 2, -body.y() / 2, 0.0},
                           {body.x() / 2, body.y() / 2, body.z()},
                           spec.body_color});
  if (handle.x() > 0.0 && handle.y() > 0.0 && handle.z() > 0.0) {
    const double zc = body.z() / 2.0;
    t.parts.push_back(Cuboid{
        {body.x() / 2, -handle.y() / 2, zc - handle.z() / 2},
        {body.x() / 2 + handle.x(), handle.y() / 2, zc + handle.z() / 2},
        spec.handle_color});
  }

  // identifiability guard: a centroid off the z-axis cannot survive any
  // non-trivial rotation about z
  if (t.volume_centroid().head<2>().norm() < 1e-3) {
    throw SymmetryError(
        "template is rotationally ambiguous (centroid on the z-axis); "
        "a handle or similar asymmetric feature is required");
  }
  return t;
}

namespace {

json cuboid_to_json(const Cuboid& c) {
  return json{{"min", {c.min.x(), c.min.y(), c.min.z()}},
              {"max", {c.max.x(), c.max.y(), c.max.z()}},
              {"color", {c.color[0], c.color[1], c.color[2]}}};
}

Cuboid cuboid_from_json(const json& j) {
  Cuboid c;
  for (int k = 0; k < 3; ++k) {
    c.min[k] = j.at("min").at(k).get<double>();
    c.max[k] = j.at("max").at(k).get<double>();
    c.color[k] = j.at("color").at(k).get<uint8_t>();
  }
  return c;
}

void write_json_atomic(const std::filesystem::path& path, const json& j) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return json::parse(f);
}

json transform_to_json(const RigidTransform& t) {
  std::vector<double> rot(9), tr(3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = t.rotation(r, c);
    tr[r] = t.translation[r];
  }
  return json{{"from", frame_name(t.from)},
              {"to", frame_name(t.to)},
              {"rotation", rot},
              {"translation", tr}};
}

RigidTransform transform_from_json(const json& j) {
  RigidTransform t;
  t.from = frame_from_name(j.at("from").get<std::string>());
  t.to = frame_from_name(j.at("to").get<std::string>());
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      t.rotation(r, c) = j.at("rotation").at(r * 3 + c).get<double>();
    }
    t.translation[r] = j.at("translation").at(r).get<double>();
  }
  return t;
}

}  // namespace

void save_template_json(const std::filesystem::path& path,
                        const ObjectTemplate& t) {
  json j{{"name", t.name}, {"parts", json::array()}};
  for (const Cuboid& c : t.parts) j["parts"].push_back(cuboid_to_json(c));
  write_json_atomic(path, j);
}

ObjectTemplate load_template_json(const std::filesystem::path& path) {
  const json j = read_json(path);
  ObjectTemplate t;
  t.name = j.at("name").get<std::string>();
  for (const json& c : j.at("parts")) t.parts.push_back(cuboid_from_json(c));
  return t;
}

// ---------------------------------------------------------------------------
// sensor
// ---------------------------------------------------------------------------

SensorConfig SensorConfig::defaults() {
  SensorConfig s;
  const Eigen::Vector3d target(0.5, 0.25, 0.10);
  const double standoff = 1.0;
  const double depression = 45.0 * M_PI / 180.0;
  const Eigen::Vector3d pos =
      target + standoff * Eigen::Vector3d(-std::cos(depression), 0.0,
                                          std::sin(depression));
  const Eigen::Vector3d z_axis = (target - pos).normalized();  // optical axis
  const Eigen::Vector3d x_axis(0.0, -1.0, 0.0);                // image right
  const Eigen::Vector3d y_axis = z_axis.cross(x_axis);         // image down
  s.t_c2b.rotation.col(0) = x_axis;
  s.t_c2b.rotation.col(1) = y_axis;
  s.t_c2b.rotation.col(2) = z_axis;
  s.t_c2b.translation = pos;
  s.t_c2b.from = Frame::camera;
  s.t_c2b.to = Frame::base;
  return s;
}

void save_sensor_json(const std::filesystem::path& path, const SensorConfig& s) {
  json j{{"t_c2b", transform_to_json(s.t_c2b)},
         {"width", s.width},
         {"height", s.height},
         {"hfov_deg", s.hfov_deg},
         {"noise_sigma", s.noise_sigma},
         {"void_count", {s.void_count_min, s.void_count_max}},
         {"void_radius", s.void_radius},
         {"sample_spacing", s.sample_spacing}};
  write_json_atomic(path, j);
}

SensorConfig load_sensor_json(const std::filesystem::path& path) {
  const json j = read_json(path);
  SensorConfig s;
  s.t_c2b = transform_from_json(j.at("t_c2b"));
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.hfov_deg = j.at("hfov_deg").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.void_count_min = j.at("void_count").at(0).get<int>();
  s.void_count_max = j.at("void_count").at(1).get<int>();
  s.void_radius = j.at("void_radius").get<double>();
  s.sample_spacing = j.at("sample_spacing").get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

Aabb default_bench() {
  Aabb b;
  b.min = {0.0, 0.0, 0.0};
  b.max = {1.0, 0.5, 0.45};
  return b;
}

namespace {

struct Face {
  Eigen::Vector3d corner;  // object frame
  Eigen::Vector3d du;      // spans the face
  Eigen::Vector3d dv;
  Eigen::Vector3d normal;  // outward
  std::array<uint8_t, 3> color;
};

std::vector<Face> cuboid_faces(const Cuboid& c) {
  const Eigen::Vector3d lo = c.min, hi = c.max;
  const Eigen::Vector3d sz = hi - lo;
  std::vector<Face> faces;
  // +-x
  faces.push_back({{hi.x(), lo.y(), lo.z()}, {0, sz.y(), 0}, {0, 0, sz.z()},
                   {1, 0, 0}, c.color});
  faces.push_back({{lo.x(), lo.y(), lo.z()}, {0, sz.y(), 0}, {0, 0, sz.z()},
                   {-1, 0, 0}, c.color});
  // +-y
  faces.push_back({{lo.x(), hi.y(), lo.z()}, {sz.x(), 0, 0}, {0, 0, sz.z()},
                   {0, 1, 0}, c.color});
  faces.push_back({{lo.x(), lo.y(), lo.z()}, {sz.x(), 0, 0}, {0, 0, sz.z()},
                   {0, -1, 0}, c.color});
  // +-z
  faces.push_back({{lo.x(), lo.y(), hi.z()}, {sz.x(), 0, 0}, {0, sz.y(), 0},
                   {0, 0, 1}, c.color});
  faces.push_back({{lo.x(), lo.y(), lo.z()}, {sz.x(), 0, 0}, {0, sz.y(), 0},
                   {0, 0, -1}, c.color});
  return faces;
}

}  // namespace

Sample render_sample(const ObjectTemplate& tmpl, const PlanarPose& pose,
                     const SensorConfig& sensor, uint64_t seed) {
  const Aabb bench = default_bench();
  if (!(pose.x >= bench.min.x() && pose.x < bench.max.x() &&
        pose.y >= bench.min.y() && pose.y < bench.max.y())) {
    throw std::invalid_argument("render_sample: pose outside the workspace");
  }

  // independent streams so that e.g. disabling voids does not shift points
  Rng rng_points(derive_seed(seed, 1));
  Rng rng_noise(derive_seed(seed, 2));
  Rng rng_voids(derive_seed(seed, 3));

  const RigidTransform t_o2b = pose_to_transform(pose);
  const RigidTransform t_b2c = invert(sensor.t_c2b);
  const Eigen::Matrix3d r_o2c = t_b2c.rotation * t_o2b.rotation;
  const Eigen::Vector3d t_oc =
      t_b2c.rotation * t_o2b.translation + t_b2c.translation;

  const double fx =
      (sensor.width / 2.0) / std::tan(sensor.hfov_deg * M_PI / 360.0);
  const double fy = fx;
  const double cx = (sensor.width - 1) / 2.0;
  const double cy = (sensor.height - 1) / 2.0;

  // surface sampling + backface culling
  struct Candidate {
    Eigen::Vector3d cam;  // camera frame
    std::array<uint8_t, 3> color;
    int px, py;
  };
  std::vector<Candidate> candidates;
  for (const Cuboid& cub : tmpl.parts) {
    for (const Face& face : cuboid_faces(cub)) {
      const double len_u = face.du.norm(), len_v = face.dv.norm();
      const int nu = std::max(1, int(std::ceil(len_u / sensor.sample_spacing)));
      const int nv = std::max(1, int(std::ceil(len_v / sensor.sample_spacing)));
      const Eigen::Vector3d n_cam = r_o2c * face.normal;
      for (int iu = 0; iu < nu; ++iu) {
        for (int iv = 0; iv < nv; ++iv) {
          const double fu = (iu + rng_points.uniform()) / nu;
          const double fv = (iv + rng_points.uniform()) / nv;
          const Eigen::Vector3d obj = face.corner + fu * face.du + fv * face.dv;
          const Eigen::Vector3d cam = r_o2c * obj + t_oc;
          if (cam.z() <= 1e-6) continue;
          if (n_cam.dot(cam) >= 0.0) continue;  // facing away
          const int px = int(std::lround(fx * cam.x() / cam.z() + cx));
          const int py = int(std::lround(fy * cam.y() / cam.z() + cy));
          if (px < 0 || py < 0 || px >= sensor.width || py >= sensor.height) {
            continue;
          }
          candidates.push_back({cam, face.color, px, py});
        }
      }
    }
  }

  // z-buffer: nearest candidate per pixel wins; first wins ties
  std::vector<int32_t> winner(size_t(sensor.width) * sensor.height, -1);
  for (size_t i = 0; i < candidates.size(); ++i) {
    const int64_t pix = int64_t(candidates[i].py) * sensor.width +
                        candidates[i].px;
    const int32_t cur = winner[pix];
    if (cur < 0 || candidates[i].cam.z() < candidates[cur].cam.z()) {
      winner[pix] = int32_t(i);
    }
  }
  std::vector<char> visible(candidates.size(), 0);
  for (const int32_t w : winner) {
    if (w >= 0) visible[w] = 1;
  }

  Sample sample;
  sample.cloud.frame = Frame::camera;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (!visible[i]) continue;
    Eigen::Vector3d p = candidates[i].cam;
    if (sensor.noise_sigma > 0.0) {
      p += sensor.noise_sigma * rng_noise.normal() * p.normalized();
    }
    sample.cloud.points.push_back(PointXYZRGB{p, candidates[i].color});
  }

  // marker voids: remove every point within a radius of a surface point
  if (sensor.void_count_max > 0 && !sample.cloud.points.empty()) {
    const int patches = int(rng_voids.uniform_int(sensor.void_count_min,
                                                  sensor.void_count_max));
    for (int k = 0; k < patches && !sample.cloud.points.empty(); ++k) {
      const auto centre_idx = size_t(rng_voids.uniform_int(
          0, int64_t(sample.cloud.points.size()) - 1));
      const Eigen::Vector3d centre = sample.cloud.points[centre_idx].position;
      std::vector<PointXYZRGB> kept;
      kept.reserve(sample.cloud.points.size());
      for (const PointXYZRGB& p : sample.cloud.points) {
        if ((p.position - centre).norm() > sensor.void_radius) {
          kept.push_back(p);
        }
      }
      sample.cloud.points = std::move(kept);
    }
  }

  sample.label = pose;
  sample.yaw_class = yaw_to_class(pose.yaw_deg).index;
  return sample;
}

PointCloud template_surface_cloud(const ObjectTemplate& tmpl, double spacing) {
  PointCloud cloud;
  cloud.frame = Frame::object;
  for (const Cuboid& cub : tmpl.parts) {
    for (const Face& face : cuboid_faces(cub)) {
      const double len_u = face.du.norm(), len_v = face.dv.norm();
      const int nu = std::max(1, int(std::ceil(len_u / spacing)));
      const int nv = std::max(1, int(std::ceil(len_v / spacing)));
      for (int iu = 0; iu <= nu; ++iu) {
        for (int iv = 0; iv <= nv; ++iv) {
          const Eigen::Vector3d p = face.corner +
                                    (double(iu) / nu) * face.du +
                                    (double(iv) / nv) * face.dv;
          cloud.points.push_back({p, face.color});
        }
      }
    }
  }
  return cloud;
}

PlanarPose sample_pose(Rng& rng, const ObjectTemplate& tmpl, const Aabb& bench) {
  const double margin = tmpl.bounding_radius_xy() + 0.01;
  PlanarPose pose;
  pose.x = rng.uniform(bench.min.x() + margin, bench.max.x() - margin);
  pose.y = rng.uniform(bench.min.y() + margin, bench.max.y() - margin);
  pose.yaw_deg = rng.uniform(0.0, 360.0);
  return pose;
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

std::vector<int> Dataset::split_ids(const std::string& split) const {
  std::vector<int> out;
  for (const SampleMeta& m : samples) {
    if (m.split == split) out.push_back(m.id);
  }
  return out;
}

Dataset generate_dataset(const ObjectTemplate& tmpl, const SensorConfig& sensor,
                         const DatasetSpec& spec,
                         const std::filesystem::path& out_dir) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 ||
      spec.train + spec.val + spec.test > spec.n) {
    throw std::invalid_argument("split sizes exceed the sample count");
  }

  const std::filesystem::path stage = out_dir.string() + ".staging";
  std::filesystem::remove_all(stage);
  std::filesystem::create_directories(stage / "samples");

  Dataset ds;
  ds.dir = out_dir;
  ds.object = tmpl;
  ds.sensor = sensor;
  ds.seed = spec.seed;
  ds.samples.resize(spec.n);

  const Aabb bench = default_bench();
  // poses drawn serially so the manifest is independent of thread count
  std::vector<PlanarPose> poses(spec.n);
  {
    Rng pose_rng(derive_seed(spec.seed, 0x90));
    for (int i = 0; i < spec.n; ++i) poses[i] = sample_pose(pose_rng, tmpl, bench);
  }

#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < spec.n; ++i) {
    const Sample s = render_sample(tmpl, poses[i], sensor,
                                   derive_seed(spec.seed, 0x1000 + i));
    char name[64];
    std::snprintf(name, sizeof(name), "samples/sample_%05d.ply", i);
    save_ply(stage / name, s.cloud);
    SampleMeta meta;
    meta.id = i;
    meta.ply = name;
    meta.x = s.label.x;
    meta.y = s.label.y;
    meta.yaw_deg = s.label.yaw_deg;
    meta.yaw_class = s.yaw_class;
    if (i < spec.train) {
      meta.split = "train";
    } else if (i < spec.train + spec.val) {
      meta.split = "val";
    } else if (i < spec.train + spec.val + spec.test) {
      meta.split = "test";
    } else {
      meta.split = "unused";
    }
    ds.samples[i] = meta;
  }

  save_template_json(stage / "template.json", tmpl);
  save_sensor_json(stage / "sensor.json", sensor);

  json manifest{{"seed", spec.seed},
                {"splits", {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}}},
                {"samples", json::array()}};
  for (const SampleMeta& m : ds.samples) {
    manifest["samples"].push_back(json{{"id", m.id},
                                       {"ply", m.ply},
                                       {"x", m.x},
                                       {"y", m.y},
                                       {"yaw_deg", m.yaw_deg},
                                       {"yaw_class", m.yaw_class},
                                       {"split", m.split}});
  }
  write_json_atomic(stage / "manifest.json", manifest);

  std::filesystem::remove_all(out_dir);
  std::filesystem::rename(stage, out_dir);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.dir = dir;
  ds.object = load_template_json(dir / "template.json");
  ds.sensor = load_sensor_json(dir / "sensor.json");
  const json manifest = read_json(dir / "manifest.json");
  ds.seed = manifest.at("seed").get<uint64_t>();
  for (const json& j : manifest.at("samples")) {
    SampleMeta m;
    m.id = j.at("id").get<int>();
    m.ply = j.at("ply").get<std::string>();
    m.x = j.at("x").get<double>();
    m.y = j.at("y").get<double>();
    m.yaw_deg = j.at("yaw_deg").get<double>();
    m.yaw_class = j.at("yaw_class").get<int>();
    m.split = j.at("split").get<std::string>();
    ds.samples.push_back(m);
  }
  return ds;
}

PointCloud load_sample_cloud(const Dataset& ds, int id) {
  return load_ply(ds.dir / ds.samples.at(id).ply);
}

}  // namespace voxpose

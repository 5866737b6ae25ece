#include "voxpose/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voxpose {

const char* frame_name(Frame f) {
  switch (f) {
    case Frame::camera:
      return "camera";
    case Frame::base:
      return "base";
    case Frame::robot:
      return "robot";
    case Frame::object:
      return "object";
    case Frame::gripper:
      return "gripper";
  }
  return "?";
}

Frame frame_from_name(const std::string& name) {
  for (Frame f : {Frame::camera, Frame::base, Frame::robot, Frame::object,
                  Frame::gripper}) {
    if (name == frame_name(f)) return f;
  }
  throw FrameError("unknown frame name: " + name);
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = rotation;
  m.block<3, 1>(0, 3) = translation;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  if (a.to != b.from) {
    throw FrameError(std::string("compose frame mismatch: ") + frame_name(a.from) +
                     "->" + frame_name(a.to) + " then " + frame_name(b.from) +
                     "->" + frame_name(b.to));
  }
  RigidTransform r;
  r.rotation = b.rotation * a.rotation;
  r.translation = b.rotation * a.translation + b.translation;
  r.from = a.from;
  r.to = b.to;
  return r;
}

RigidTransform invert(const RigidTransform& t) {
  RigidTransform r;
  r.rotation = t.rotation.transpose();
  r.translation = -(r.rotation * t.translation);
  r.from = t.to;
  r.to = t.from;
  return r;
}

double rotation_angle_rad(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
  const double c = ((r1.transpose() * r2).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

Eigen::Matrix3d rot_x(double deg) {
  const double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Eigen::Matrix3d rot_y(double deg) {
  const double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Eigen::Matrix3d rot_z(double deg) {
  const double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

double normalize_yaw_deg(double yaw_deg) {
  if (!std::isfinite(yaw_deg)) {
    throw std::invalid_argument("yaw must be finite");
  }
  double r = std::fmod(yaw_deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r -= 360.0;
  return r;
}

YawClass yaw_to_class(double yaw_deg) {
  const double sectors = normalize_yaw_deg(yaw_deg) / kYawSectorDeg;
  const int idx = static_cast<int>(std::floor(sectors + 0.5));  // half-up
  return YawClass{idx % kYawClasses};
}

double class_to_yaw(YawClass c) {
  if (c.index < 0 || c.index >= kYawClasses) {
    throw std::out_of_range("yaw class out of range: " + std::to_string(c.index));
  }
  return kYawSectorDeg * c.index;
}

RigidTransform pose_to_transform(const PlanarPose& p) {
  RigidTransform t;
  t.rotation = rot_z(p.yaw_deg) * rot_y(p.pitch_deg) * rot_x(p.roll_deg);
  t.translation = Eigen::Vector3d(p.x, p.y, p.z);
  t.from = Frame::object;
  t.to = Frame::base;
  return t;
}

PlanarPose transform_to_pose(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  PlanarPose p;
  p.x = t.translation.x();
  p.y = t.translation.y();
  p.z = t.translation.z();
  p.yaw_deg = std::atan2(r(1, 0), r(0, 0)) / kDegToRad;
  p.pitch_deg = std::asin(std::clamp(-r(2, 0), -1.0, 1.0)) / kDegToRad;
  p.roll_deg = std::atan2(r(2, 1), r(2, 2)) / kDegToRad;
  p.yaw_deg = normalize_yaw_deg(p.yaw_deg);
  return p;
}

std::string format_transform(const RigidTransform& t) {
  char buf[340];
  int n = std::snprintf(buf, sizeof(buf), "# from=%s to=%s\n", frame_name(t.from),
                        frame_name(t.to));
  std::string out(buf, n);
  for (int i = 0; i < 3; ++i) {
    n = std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", t.rotation(i, 0),
                      t.rotation(i, 1), t.rotation(i, 2));
    out.append(buf, n);
  }
  n = std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", t.translation.x(),
                    t.translation.y(), t.translation.z());
  out.append(buf, n);
  return out;
}

void save_transform(const std::filesystem::path& path, const RigidTransform& t) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << format_transform(t);
  }
  std::filesystem::rename(tmp, path);
}

RigidTransform load_transform(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string hash, from_kv, to_kv;
  hs >> hash >> from_kv >> to_kv;
  if (hash != "#" || from_kv.rfind("from=", 0) != 0 || to_kv.rfind("to=", 0) != 0) {
    throw std::runtime_error("bad transform header in " + path.string());
  }
  RigidTransform t;
  t.from = frame_from_name(from_kv.substr(5));
  t.to = frame_from_name(to_kv.substr(3));
  double v[12];
  for (double& x : v) {
    if (!(f >> x)) {
      throw std::runtime_error("expected 12 numbers in " + path.string());
    }
  }
  t.rotation << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  t.translation << v[9], v[10], v[11];
  const double ortho =
      (t.rotation.transpose() * t.rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  if (ortho > 1e-6 || std::abs(t.rotation.determinant() - 1.0) > 1e-6) {
    throw std::runtime_error("rotation in " + path.string() +
                             " is not orthonormal");
  }
  return t;
}

}  // namespace voxpose

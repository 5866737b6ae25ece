#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace voxpose {

enum class Frame { camera, base, robot, object, gripper };

const char* frame_name(Frame f);
Frame frame_from_name(const std::string& name);

struct FrameError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rigid SE(3) transform mapping coordinates in frame `from` to frame `to`:
// p_to = rotation * p_from + translation. Frame tags are checked at runtime
// when transforms are chained.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Frame from = Frame::base;
  Frame to = Frame::base;

  static RigidTransform identity(Frame from, Frame to) {
    RigidTransform t;
    t.from = from;
    t.to = to;
    return t;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  Eigen::Matrix4d matrix() const;
};

// Applies `a` first, then `b`. Requires a.to == b.from.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

// Rotation angle (radians) taking r1 into r2.
double rotation_angle_rad(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2);

Eigen::Matrix3d rot_x(double deg);
Eigen::Matrix3d rot_y(double deg);
Eigen::Matrix3d rot_z(double deg);

// ---------------------------------------------------------------------------
// Yaw sectors: one revolution split into 72 sectors of 5 degrees. Sector k
// covers [5k - 2.5, 5k + 2.5) degrees, so sector 0 is centred on yaw 0.
// ---------------------------------------------------------------------------

inline constexpr int kYawClasses = 72;
inline constexpr double kYawSectorDeg = 5.0;

struct YawClass {
  int index = 0;
};

// Maps any finite yaw into [0, 360).
double normalize_yaw_deg(double yaw_deg);
YawClass yaw_to_class(double yaw_deg);
double class_to_yaw(YawClass c);

// Planar object pose on the workbench. z, roll and pitch are fixed per
// object configuration rather than estimated.
struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;
  double z = 0.0;
  double roll_deg = 0.0;
  double pitch_deg = 0.0;
};

// object -> base, rotation Rz(yaw)*Ry(pitch)*Rx(roll).
RigidTransform pose_to_transform(const PlanarPose& p);
// Inverse extraction (ZYX Euler angles plus translation).
PlanarPose transform_to_pose(const RigidTransform& t);

// Transform file: one header line `# from=<frame> to=<frame>`, then 12
// whitespace-separated decimals (row-major rotation, then translation).
void save_transform(const std::filesystem::path& path, const RigidTransform& t);
RigidTransform load_transform(const std::filesystem::path& path);

// In-memory variant of the same format, used by the CLI output.
std::string format_transform(const RigidTransform& t);

}  // namespace voxpose

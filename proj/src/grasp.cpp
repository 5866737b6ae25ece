#include "voxpose/grasp.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace voxpose {

using nlohmann::json;

GraspStrategy teach_strategy(const std::string& name, const RigidTransform& t_g2r,
                             const RigidTransform& t_i2r,
                             const RigidTransform& t_b2r,
                             const RigidTransform& t_o2b) {
  const RigidTransform t_r2b = invert(t_b2r);
  const RigidTransform t_b2o = invert(t_o2b);
  GraspStrategy s;
  s.name = name;
  s.t_g2o = compose(compose(t_g2r, t_r2b), t_b2o);
  s.t_i2o = compose(compose(t_i2r, t_r2b), t_b2o);
  return s;
}

ReachabilityPredicate default_reachability(const Aabb& box, double max_pitch_deg) {
  return [box, max_pitch_deg](const RigidTransform& t_g2r) {
    if (!box.contains(t_g2r.translation)) return false;
    // gripper z-axis vs straight down in the robot frame
    const Eigen::Vector3d approach = t_g2r.rotation.col(2);
    const double c = approach.dot(Eigen::Vector3d(0, 0, -1));
    const double angle = std::acos(std::clamp(c, -1.0, 1.0));
    return angle <= max_pitch_deg * M_PI / 180.0;
  };
}

GraspPlan plan_grasp(const PoseEstimate& est,
                     const std::vector<GraspStrategy>& strategies,
                     const RigidTransform& t_b2r,
                     const ReachabilityPredicate& reachable,
                     const PlanConfig& cfg) {
  if (strategies.empty()) throw PlanningError("no strategies given");

  PlanarPose pose;
  pose.x = est.x;
  pose.y = est.y;
  pose.yaw_deg = est.yaw_deg;
  pose.z = cfg.fixed_z;
  pose.roll_deg = cfg.fixed_roll_deg;
  pose.pitch_deg = cfg.fixed_pitch_deg;
  const RigidTransform t_o2b = pose_to_transform(pose);

  GraspPlan candidate;
  GraspPlan chosen;
  bool found = false;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const GraspStrategy& s : strategies) {
    candidate.strategy = s.name;
    candidate.grasp = compose(compose(s.t_g2o, t_o2b), t_b2r);
    candidate.intermediate = compose(compose(s.t_i2o, t_o2b), t_b2r);
    if (!reachable(candidate.grasp) || !reachable(candidate.intermediate)) {
      continue;
    }
    const double d =
        (candidate.grasp.translation - cfg.home_g2r.translation).norm() +
        cfg.lambda *
            rotation_angle_rad(candidate.grasp.rotation, cfg.home_g2r.rotation);
    candidate.distance = d;
    if (d < best_distance) {  // strict: ties keep the earliest strategy
      best_distance = d;
      chosen = candidate;
      found = true;
    }
  }
  if (!found) {
    throw PlanningError("no reachable grasp strategy for this object pose");
  }
  return chosen;
}

namespace {

json transform_to_12(const RigidTransform& t) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(t.rotation(r, c));
  }
  for (int r = 0; r < 3; ++r) a.push_back(t.translation[r]);
  return a;
}

RigidTransform transform_from_12(const json& a, Frame from, Frame to) {
  if (!a.is_array() || a.size() != 12) {
    throw PlanningError("strategy transform must be 12 numbers");
  }
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = a.at(r * 3 + c).get<double>();
    t.translation[r] = a.at(9 + r).get<double>();
  }
  t.from = from;
  t.to = to;
  return t;
}

}  // namespace

void save_strategies_json(const std::filesystem::path& path,
                          const std::vector<GraspStrategy>& strategies) {
  json j = json::array();
  for (const GraspStrategy& s : strategies) {
    j.push_back(json{{"name", s.name},
                     {"T_g2o", transform_to_12(s.t_g2o)},
                     {"T_i2o", transform_to_12(s.t_i2o)}});
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw PlanningError("cannot write " + path.string());
    f << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::vector<GraspStrategy> load_strategies_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw PlanningError("cannot read " + path.string());
  const json j = json::parse(f);
  std::vector<GraspStrategy> out;
  for (const json& e : j) {
    GraspStrategy s;
    s.name = e.at("name").get<std::string>();
    s.t_g2o = transform_from_12(e.at("T_g2o"), Frame::gripper, Frame::object);
    s.t_i2o = transform_from_12(e.at("T_i2o"), Frame::gripper, Frame::object);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace voxpose

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "voxpose/estimator.hpp"
#include "voxpose/geometry.hpp"

namespace voxpose {

// A taught gripper-to-object transform plus an intermediate approach pose.
struct GraspStrategy {
  std::string name;
  RigidTransform t_g2o;  // gripper -> object, the grasp pose
  RigidTransform t_i2o;  // gripper -> object, the intermediate pose
};

struct PlanningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Records the strategy from a demonstrated gripper pose: the grasp (and
// intermediate) pose in the robot frame, the base-to-robot calibration, and
// the object pose. t_g2o = t_b2o * t_r2b * t_g2r with the inverses taken
// from the given calibrations.
GraspStrategy teach_strategy(const std::string& name, const RigidTransform& t_g2r,
                             const RigidTransform& t_i2r,
                             const RigidTransform& t_b2r,
                             const RigidTransform& t_o2b);

// Stand-in for an IK query: candidate gripper poses (gripper -> robot) that
// fail are disregarded.
using ReachabilityPredicate = std::function<bool(const RigidTransform& t_g2r)>;

// Default: gripper position inside `box` (robot frame) and gripper z-axis
// within `max_pitch_deg` of straight down.
ReachabilityPredicate default_reachability(const Aabb& box,
                                           double max_pitch_deg = 45.0);

struct PlanConfig {
  RigidTransform home_g2r = RigidTransform::identity(Frame::gripper, Frame::robot);
  double lambda = 0.1;  // metres per radian in the selection distance
  double fixed_z = 0.0;
  double fixed_roll_deg = 0.0;
  double fixed_pitch_deg = 0.0;
};

struct GraspPlan {
  std::string strategy;
  RigidTransform intermediate;  // gripper -> robot
  RigidTransform grasp;         // gripper -> robot
  double distance = 0.0;        // selection distance from the home pose
};

// Chains t_g2r = t_b2r * t_o2b * t_g2o per strategy, drops candidates whose
// grasp or intermediate pose fails `reachable`, and picks the viable one
// closest to the home pose: |t - t_home| + lambda * angle(R, R_home).
// Ties break to the earliest strategy in the list.
GraspPlan plan_grasp(const PoseEstimate& est,
                     const std::vector<GraspStrategy>& strategies,
                     const RigidTransform& t_b2r,
                     const ReachabilityPredicate& reachable,
                     const PlanConfig& cfg);

// JSON list of {name, T_g2o (12 numbers), T_i2o (12 numbers)}.
void save_strategies_json(const std::filesystem::path& path,
                          const std::vector<GraspStrategy>& strategies);
std::vector<GraspStrategy> load_strategies_json(const std::filesystem::path& path);

}  // namespace voxpose

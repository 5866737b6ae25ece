// voxpose: model-free planar-pose estimation on voxelized RGB-D clouds.
// One binary, one subcommand per pipeline stage; the dataflow of the full
// pipeline lives in `estimate`.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "voxpose/estimator.hpp"
#include "voxpose/grasp.hpp"
#include "voxpose/registration.hpp"
#include "voxpose/synthdata.hpp"

using namespace voxpose;

namespace {

// semantic flag problems that CLI11 cannot catch; mapped to exit code 2
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenDataOpts {
  std::string template_spec = "default";
  int n = 1000;
  uint64_t seed = 0;
  std::string splits = "600/200/200";
  double noise_sigma = -1.0;  // <0: keep the sensor default
  std::string out;
};

void run_gen_data(const GenDataOpts& o) {
  DatasetSpec spec;
  spec.n = o.n;
  spec.seed = o.seed;
  if (std::sscanf(o.splits.c_str(), "%d/%d/%d", &spec.train, &spec.val,
                  &spec.test) != 3 ||
      spec.train < 0 || spec.val < 0 || spec.test < 0) {
    throw UsageError("--splits must look like 600/200/200");
  }
  if (spec.train + spec.val + spec.test > spec.n) {
    throw UsageError("split sizes exceed --n");
  }

  ObjectTemplate tmpl;
  if (o.template_spec == "default") {
    tmpl = make_template(TemplateSpec{}, o.seed);
  } else {
    tmpl = load_template_json(o.template_spec);
  }
  SensorConfig sensor = SensorConfig::defaults();
  if (o.noise_sigma >= 0.0) sensor.noise_sigma = o.noise_sigma;

  const Dataset ds = generate_dataset(tmpl, sensor, spec, o.out);
  std::printf("wrote %zu samples to %s (train=%d val=%d test=%d)\n",
              ds.samples.size(), o.out.c_str(), spec.train, spec.val, spec.test);
}

struct TrainOpts {
  std::string task;
  std::string data;
  int epochs = 100;
  int batch = 50;
  double lr = 1e-5;
  uint64_t seed = 0;
  bool desk_scale = false;
  std::string out;
};

void run_train(const TrainOpts& o) {
  const Task task = task_from_name(o.task);
  const Dataset ds = load_dataset(o.data);
  const auto train_set = load_split(ds, "train");
  const auto val_set = load_split(ds, "val");
  if (train_set.empty()) {
    throw std::runtime_error("dataset has no train split: " + o.data);
  }

  const PipelineConfig pipeline =
      o.desk_scale ? PipelineConfig::desk_scale() : PipelineConfig::full_scale();
  NetConfig netcfg;
  if (task == Task::translation) {
    netcfg = o.desk_scale ? NetConfig::translation_desk()
                          : NetConfig::translation_full();
  } else {
    netcfg = o.desk_scale ? NetConfig::rotation_desk() : NetConfig::rotation_full();
  }
  Model model = build_net(netcfg);
  model.init_params(derive_seed(o.seed, 0x1417));

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch = o.batch;
  cfg.lr = o.lr;
  cfg.seed = o.seed;
  const TrainResult result = train(model, train_set, val_set, task, cfg, pipeline);

  save_checkpoint(model, o.out);
  const auto history_path =
      std::filesystem::path(o.out).parent_path() / "loss_history.csv";
  save_loss_history(history_path, task, result);
  std::printf("trained %s for %d epochs on %zu samples; final train loss %.9g\n",
              o.task.c_str(), o.epochs, train_set.size(),
              result.history.back().train_loss);
}

struct EvalOpts {
  std::string tmodel, rmodel, data, out;
};

void run_eval(const EvalOpts& o) {
  const Model tnet = load_checkpoint(o.tmodel);
  const Model rnet = load_checkpoint(o.rmodel);
  const PipelineConfig cfg = PipelineConfig::from_models(tnet, rnet);
  const Dataset ds = load_dataset(o.data);
  const auto test_set = load_split(ds, "test");
  if (test_set.empty()) {
    throw std::runtime_error("dataset has no test split: " + o.data);
  }
  const MetricsReport report = evaluate(tnet, rnet, test_set, cfg);
  emit_report(report, o.out);
  std::printf("n=%d e_x=%.6f m e_y=%.6f m e_psi=%.6f deg accuracy=%.6f\n",
              report.n, report.e_x, report.e_y, report.e_psi, report.accuracy);
}

struct EstimateOpts {
  std::string cloud, t_c2b, tmodel, rmodel;
};

void run_estimate(const EstimateOpts& o) {
  PointCloud cloud = load_ply(o.cloud);
  cloud.frame = Frame::camera;
  const RigidTransform t_c2b = load_transform(o.t_c2b);
  if (t_c2b.from != Frame::camera || t_c2b.to != Frame::base) {
    throw std::runtime_error("--t-c2b must map camera to base");
  }
  const Model tnet = load_checkpoint(o.tmodel);
  const Model rnet = load_checkpoint(o.rmodel);
  const PipelineConfig cfg = PipelineConfig::from_models(tnet, rnet);
  const PoseEstimate est = estimate_pose(cloud, t_c2b, tnet, rnet, cfg);

  std::printf("x=%.6f y=%.6f yaw=%.1f class=%d\n", est.x, est.y, est.yaw_deg,
              est.yaw_class);
  std::vector<int> order(est.probabilities.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                    [&](int a, int b) {
                      return est.probabilities[a] > est.probabilities[b] ||
                             (est.probabilities[a] == est.probabilities[b] && a < b);
                    });
  std::printf("top3: %d:%.4f %d:%.4f %d:%.4f\n", order[0],
              est.probabilities[order[0]], order[1], est.probabilities[order[1]],
              order[2], est.probabilities[order[2]]);
}

struct PlanGraspOpts {
  std::vector<double> pose;  // x y yaw
  std::string strategies, base2robot, home;
  double fixed_z = 0.0;
  double lambda = 0.1;
  std::vector<double> reach_box = {-2.0, -2.0, -2.0, 2.0, 2.0, 2.0};
  double reach_pitch_deg = 45.0;
};

void run_plan_grasp(const PlanGraspOpts& o) {
  const auto strategies = load_strategies_json(o.strategies);
  const RigidTransform t_b2r = load_transform(o.base2robot);
  if (t_b2r.from != Frame::base || t_b2r.to != Frame::robot) {
    throw std::runtime_error("--base2robot must map base to robot");
  }
  PlanConfig cfg;
  cfg.home_g2r = load_transform(o.home);
  if (cfg.home_g2r.from != Frame::gripper || cfg.home_g2r.to != Frame::robot) {
    throw std::runtime_error("--home must map gripper to robot");
  }
  cfg.lambda = o.lambda;
  cfg.fixed_z = o.fixed_z;

  PoseEstimate est;
  est.x = o.pose[0];
  est.y = o.pose[1];
  est.yaw_deg = normalize_yaw_deg(o.pose[2]);
  est.yaw_class = yaw_to_class(est.yaw_deg).index;

  Aabb box;
  box.min = {o.reach_box[0], o.reach_box[1], o.reach_box[2]};
  box.max = {o.reach_box[3], o.reach_box[4], o.reach_box[5]};
  const GraspPlan plan = plan_grasp(
      est, strategies, t_b2r, default_reachability(box, o.reach_pitch_deg), cfg);

  std::printf("strategy: %s (distance %.6f)\n", plan.strategy.c_str(),
              plan.distance);
  std::printf("intermediate pose:\n%s", format_transform(plan.intermediate).c_str());
  std::printf("grasp pose:\n%s", format_transform(plan.grasp).c_str());
}

struct CalibrateOpts {
  std::string pairs;
  bool use_icp = false;
  std::string source, target, init;
  std::string from = "base", to = "robot";
  std::string out;
};

void run_calibrate(const CalibrateOpts& o) {
  const Frame from = frame_from_name(o.from);
  const Frame to = frame_from_name(o.to);

  RigidTransform t = RigidTransform::identity(from, to);
  bool have_initial = false;
  if (!o.pairs.empty()) {
    t = fit_rigid(load_correspondences_csv(o.pairs), from, to);
    have_initial = true;
    std::printf("rigid fit from %s\n", o.pairs.c_str());
  }
  if (!o.init.empty()) {
    t = load_transform(o.init);
    if (t.from != from || t.to != to) {
      throw std::runtime_error("--init frames do not match --from/--to");
    }
    have_initial = true;
  }

  if (o.use_icp) {
    if (o.source.empty() || o.target.empty()) {
      throw UsageError("--icp needs --source and --target clouds");
    }
    if (!have_initial) {
      throw UsageError("--icp needs a rough alignment: --pairs or --init");
    }
    PointCloud source = load_ply(o.source);
    source.frame = from;
    PointCloud target = load_ply(o.target);
    target.frame = to;
    IcpConfig cfg;
    cfg.initial = t;
    const IcpResult r = icp(source, target, cfg);
    t = r.transform;
    std::printf("icp refined: rms %.9g m after %d iterations\n", r.rms,
                r.iterations);
  } else if (!have_initial) {
    throw UsageError("calibrate needs --pairs (or --init with --icp)");
  }

  save_transform(o.out, t);
  std::printf("wrote %s\n", o.out.c_str());
}

struct VoxelizeOpts {
  std::string cloud;
  std::string mode;
  std::vector<double> center;
  std::string t_c2b;
  bool desk_scale = false;
  std::string out;
};

void run_voxelize(const VoxelizeOpts& o) {
  PointCloud cloud = load_ply(o.cloud);
  if (!o.t_c2b.empty()) {
    cloud.frame = Frame::camera;
    const RigidTransform t = load_transform(o.t_c2b);
    cloud = transform_cloud(cloud, t);
  } else {
    cloud.frame = Frame::base;
  }

  const PipelineConfig cfg =
      o.desk_scale ? PipelineConfig::desk_scale() : PipelineConfig::full_scale();
  VoxelConfig vc;
  if (o.mode == "translation") {
    vc = cfg.translation_grid;
  } else {
    if (o.center.size() != 2) {
      throw UsageError("--mode rotation needs --center \"x y\"");
    }
    vc = cfg.rotation_grid_at(o.center[0], o.center[1]);
  }
  const VoxelGrid grid = voxelize(cloud, vc);
  save_grid(o.out, grid);
  int64_t binned = 0;
  for (int32_t c : grid.counts) binned += c;
  std::printf("voxelized %zu points -> %lld binned, %lld occupied cells, %s\n",
              cloud.points.size(), static_cast<long long>(binned),
              static_cast<long long>(grid.occupied_cells()), o.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxpose: two-stage object pose estimation on voxelized RGB-D "
               "point clouds, with grasp planning on top"};
  app.require_subcommand(1);

  GenDataOpts gen;
  auto* sub_gen = app.add_subcommand("gen-data", "generate a labelled synthetic dataset");
  sub_gen->add_option("--template", gen.template_spec,
                      "'default' or a template.json path");
  sub_gen->add_option("--n", gen.n, "number of samples")->check(CLI::PositiveNumber);
  sub_gen->add_option("--seed", gen.seed, "master seed");
  sub_gen->add_option("--splits", gen.splits, "train/val/test sizes, e.g. 600/200/200");
  sub_gen->add_option("--noise-sigma", gen.noise_sigma, "ray noise in metres");
  sub_gen->add_option("--out", gen.out, "output dataset directory")->required();
  sub_gen->callback([&] { run_gen_data(gen); });

  TrainOpts tr;
  auto* sub_train = app.add_subcommand("train", "train one of the two networks");
  sub_train->add_option("--task", tr.task, "translation or rotation")
      ->required()
      ->check(CLI::IsMember({"translation", "rotation"}));
  sub_train->add_option("--data", tr.data, "dataset directory")->required();
  sub_train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  sub_train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  sub_train->add_option("--lr", tr.lr, "Adam learning rate");
  sub_train->add_option("--seed", tr.seed);
  sub_train->add_flag("--desk-scale", tr.desk_scale,
                      "reduced grids and halved channel widths");
  sub_train->add_option("--out", tr.out, "checkpoint path (.vpnn)")->required();
  sub_train->callback([&] { run_train(tr); });

  EvalOpts ev;
  auto* sub_eval = app.add_subcommand("eval", "evaluate the two-stage pipeline on the test split");
  sub_eval->add_option("--tmodel", ev.tmodel)->required();
  sub_eval->add_option("--rmodel", ev.rmodel)->required();
  sub_eval->add_option("--data", ev.data)->required();
  sub_eval->add_option("--out", ev.out, "report directory")->required();
  sub_eval->callback([&] { run_eval(ev); });

  EstimateOpts es;
  auto* sub_est = app.add_subcommand("estimate", "estimate the pose of one cloud");
  sub_est->add_option("--cloud", es.cloud, "PLY file in the camera frame")->required();
  sub_est->add_option("--t-c2b", es.t_c2b, "camera-to-base transform file")->required();
  sub_est->add_option("--tmodel", es.tmodel)->required();
  sub_est->add_option("--rmodel", es.rmodel)->required();
  sub_est->callback([&] { run_estimate(es); });

  PlanGraspOpts pg;
  auto* sub_plan = app.add_subcommand("plan-grasp", "plan gripper poses from an object pose");
  sub_plan->add_option("--pose", pg.pose, "object pose: x y yaw_deg")
      ->required()
      ->expected(3);
  sub_plan->add_option("--strategies", pg.strategies, "strategies JSON")->required();
  sub_plan->add_option("--base2robot", pg.base2robot, "transform file")->required();
  sub_plan->add_option("--home", pg.home, "home gripper pose file")->required();
  sub_plan->add_option("--fixed-z", pg.fixed_z, "object z (metres)");
  sub_plan->add_option("--lambda", pg.lambda, "metres per radian in the distance");
  sub_plan->add_option("--reach-box", pg.reach_box, "reachable box x0 y0 z0 x1 y1 z1")
      ->expected(6);
  sub_plan->add_option("--reach-pitch-deg", pg.reach_pitch_deg,
                       "max angle from vertical");
  sub_plan->callback([&] { run_plan_grasp(pg); });

  CalibrateOpts cal;
  auto* sub_cal = app.add_subcommand("calibrate", "fit a rigid transform, optionally ICP-refined");
  sub_cal->add_option("--pairs", cal.pairs, "correspondence CSV");
  sub_cal->add_flag("--icp", cal.use_icp, "refine with ICP");
  sub_cal->add_option("--source", cal.source, "source PLY (in --from frame)");
  sub_cal->add_option("--target", cal.target, "target PLY (in --to frame)");
  sub_cal->add_option("--init", cal.init, "initial transform file");
  sub_cal->add_option("--from", cal.from, "source frame name");
  sub_cal->add_option("--to", cal.to, "target frame name");
  sub_cal->add_option("--out", cal.out, "output transform file")->required();
  sub_cal->callback([&] { run_calibrate(cal); });

  VoxelizeOpts vx;
  auto* sub_vox = app.add_subcommand("voxelize", "dump a voxel grid for a cloud");
  sub_vox->add_option("--cloud", vx.cloud, "PLY file")->required();
  sub_vox->add_option("--mode", vx.mode)
      ->required()
      ->check(CLI::IsMember({"translation", "rotation"}));
  sub_vox->add_option("--center", vx.center, "rotation crop centre: x y")->expected(2);
  sub_vox->add_option("--t-c2b", vx.t_c2b,
                      "camera-to-base transform (cloud is base frame if omitted)");
  sub_vox->add_flag("--desk-scale", vx.desk_scale);
  sub_vox->add_option("--out", vx.out, "grid dump path")->required();
  sub_vox->callback([&] { run_voxelize(vx); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

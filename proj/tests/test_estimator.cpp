#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "voxpose/estimator.hpp"

using namespace voxpose;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// small shared dataset for the training/eval contract tests
struct Fixture {
  Dataset ds;
  std::vector<TrainSample> train;
  std::vector<TrainSample> test;
  PipelineConfig pipeline = PipelineConfig::desk_scale();

  Fixture() {
    const auto dir = temp_dir("voxpose_est_fixture");
    const ObjectTemplate tmpl = make_template(TemplateSpec{}, 0);
    DatasetSpec spec;
    spec.n = 10;
    spec.train = 6;
    spec.val = 0;
    spec.test = 4;
    spec.seed = 9090;
    ds = generate_dataset(tmpl, SensorConfig::defaults(), spec, dir / "ds");
    train = load_split(ds, "train");
    test = load_split(ds, "test");
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Model fresh_model(Task task, uint64_t seed) {
  const NetConfig cfg = task == Task::translation ? NetConfig::translation_desk()
                                                  : NetConfig::rotation_desk();
  Model m = build_net(cfg);
  m.init_params(seed);
  return m;
}

bool same_params(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->data != pb[i]->data) return false;
  }
  return true;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("yaw class error: exhaustive 72x72 properties") {
  CHECK(yaw_class_error_deg(71, 0) == 5.0);
  CHECK(yaw_class_error_deg(0, 36) == 180.0);
  CHECK(yaw_class_error_deg(17, 17) == 0.0);
  for (int a = 0; a < 72; ++a) {
    for (int b = 0; b < 72; ++b) {
      const double e = yaw_class_error_deg(a, b);
      REQUIRE(e >= 0.0);
      REQUIRE(e <= 180.0);
      REQUIRE(e == yaw_class_error_deg(b, a));
      REQUIRE(std::fmod(e, 5.0) == 0.0);
    }
  }
}

TEST_CASE("pipeline configs carry the documented grids") {
  const PipelineConfig full = PipelineConfig::full_scale();
  CHECK(full.translation_grid.shape == std::array<int, 3>{100, 50, 40});
  CHECK(full.rotation_shape == std::array<int, 3>{60, 60, 80});
  const VoxelConfig rot = full.rotation_grid_at(0.5, 0.25);
  CHECK((rot.origin - Eigen::Vector3d(0.35, 0.10, 0.05)).cwiseAbs().maxCoeff() <
        1e-15);

  const PipelineConfig desk = PipelineConfig::desk_scale();
  CHECK(desk.translation_grid.shape == std::array<int, 3>{50, 25, 20});
  CHECK(desk.rotation_shape == std::array<int, 3>{30, 30, 40});
  CHECK((desk.translation_grid.cell_size() - Eigen::Vector3d(0.02, 0.02, 0.02))
            .cwiseAbs()
            .maxCoeff() < 1e-15);
}

TEST_CASE("no object: empty workspace cloud raises instead of guessing") {
  const Model tnet = fresh_model(Task::translation, 1);
  PointCloud off;
  off.frame = Frame::base;
  off.points.push_back({{0.5, 0.25, 2.0}, {1, 2, 3}});  // far above the volume
  CHECK_THROWS_AS(
      estimate_translation(off, tnet, PipelineConfig::desk_scale().translation_grid),
      NoObjectError);

  PointCloud empty;
  empty.frame = Frame::base;
  CHECK_THROWS_AS(
      estimate_translation(empty, tnet,
                           PipelineConfig::desk_scale().translation_grid),
      NoObjectError);
}

TEST_CASE("stage-2 crop is centred on the stage-1 output") {
  Model rnet = build_net(NetConfig::rotation_full());
  rnet.init_params(2);
  const PipelineConfig cfg = PipelineConfig::full_scale();
  const TrainSample& s = fixture().train[0];
  EstimateDiag diag;
  estimate_rotation(s.base_cloud, 0.42, 0.21, rnet, cfg, &diag);
  CHECK((diag.crop_origin - Eigen::Vector3d(0.42 - 0.15, 0.21 - 0.15, 0.05))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("stage-2 depends on stage-1 only through the crop centre") {
  const Model tnet = fresh_model(Task::translation, 3);
  const Model rnet = fresh_model(Task::rotation, 4);
  const PipelineConfig cfg = fixture().pipeline;
  const TrainSample& s = fixture().test[0];

  const auto [cx, cy] = estimate_translation(s.base_cloud, tnet, cfg.translation_grid);
  const PoseEstimate direct = estimate_rotation(s.base_cloud, cx, cy, rnet, cfg);

  // full pipeline from the camera frame must reproduce stage 2 bit-for-bit
  const RigidTransform t_c2b = fixture().ds.sensor.t_c2b;
  const PointCloud camera_cloud = transform_cloud(s.base_cloud, invert(t_c2b));
  const PoseEstimate full = estimate_pose(camera_cloud, t_c2b, tnet, rnet, cfg);
  CHECK(full.yaw_class == direct.yaw_class);
  CHECK(full.probabilities == direct.probabilities);

  // probabilities are a proper distribution with the argmax recorded
  double sum = 0.0;
  for (double p : direct.probabilities) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  int amax = 0;
  for (int i = 1; i < 72; ++i) {
    if (direct.probabilities[i] > direct.probabilities[amax]) amax = i;
  }
  CHECK(amax == direct.yaw_class);
  CHECK(direct.yaw_deg == class_to_yaw(YawClass{direct.yaw_class}));
}

TEST_CASE("training is bit-reproducible and guards against task mismatch") {
  const auto& fx = fixture();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.lr = 1e-4;
  cfg.seed = 55;

  Model a = fresh_model(Task::translation, 10);
  Model b = fresh_model(Task::translation, 10);
  const TrainResult ra = train(a, fx.train, {}, Task::translation, cfg, fx.pipeline);
  const TrainResult rb = train(b, fx.train, {}, Task::translation, cfg, fx.pipeline);
  CHECK(same_params(a, b));
  REQUIRE(ra.history.size() == 2);
  CHECK(ra.history[0].train_loss == rb.history[0].train_loss);
  CHECK(ra.history[1].train_loss == rb.history[1].train_loss);

  Model wrong = fresh_model(Task::rotation, 10);
  CHECK_THROWS_AS(train(wrong, fx.train, {}, Task::translation, cfg, fx.pipeline),
                  ModelError);
  CHECK_THROWS_AS(train(a, {}, {}, Task::translation, cfg, fx.pipeline),
                  std::invalid_argument);
}

TEST_CASE("zero learning rate: flat loss history, untouched parameters") {
  const auto& fx = fixture();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 3;
  cfg.lr = 0.0;
  cfg.seed = 66;
  Model m = fresh_model(Task::rotation, 20);
  const Model before = m;
  const TrainResult r = train(m, fx.train, fx.test, Task::rotation, cfg, fx.pipeline);
  CHECK(same_params(m, before));
  REQUIRE(r.history.size() == 4);
  for (const EpochStats& s : r.history) {
    // per-sample losses are identical; only the double summation order
    // changes with the shuffle
    CHECK(s.train_loss ==
          doctest::Approx(r.history[0].train_loss).epsilon(1e-12));
    CHECK(s.val_loss == r.history[0].val_loss);  // fixed order: bit-equal
    CHECK(s.has_val);
  }

  // loss history file: translation layout vs rotation layout
  const auto dir = temp_dir("voxpose_est_hist");
  save_loss_history(dir / "loss_history.csv", Task::rotation, r);
  const auto lines = read_lines(dir / "loss_history.csv");
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "epoch,train_loss,train_accuracy,val_loss,val_accuracy");
  CHECK(lines[1].rfind("1,", 0) == 0);
}

TEST_CASE("translation overfit: loss collapses on a tiny set") {
  const auto& fx = fixture();
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch = 6;
  cfg.lr = 1e-3;
  cfg.seed = 77;
  Model m = fresh_model(Task::translation, 30);
  const TrainResult r = train(m, fx.train, {}, Task::translation, cfg, fx.pipeline);
  CHECK(r.history.back().train_loss < r.history.front().train_loss / 10.0);
}

TEST_CASE("evaluate: ordering invariance and histogram/report consistency") {
  const auto& fx = fixture();
  const Model tnet = fresh_model(Task::translation, 40);
  const Model rnet = fresh_model(Task::rotation, 41);

  const MetricsReport r = evaluate(tnet, rnet, fx.test, fx.pipeline);
  CHECK(r.n == int(fx.test.size()));
  CHECK(r.e_psi >= 0.0);
  CHECK(r.e_psi <= 180.0);

  std::vector<TrainSample> reversed(fx.test.rbegin(), fx.test.rend());
  const MetricsReport r2 = evaluate(tnet, rnet, reversed, fx.pipeline);
  CHECK(r.e_x == doctest::Approx(r2.e_x).epsilon(1e-12));
  CHECK(r.e_y == doctest::Approx(r2.e_y).epsilon(1e-12));
  CHECK(r.e_psi == doctest::Approx(r2.e_psi).epsilon(1e-12));
  CHECK(r.accuracy == r2.accuracy);

  const auto dir = temp_dir("voxpose_est_report");
  emit_report(r, dir);
  const auto lines = read_lines(dir / "metrics.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "e_x_m,e_y_m,e_psi_deg,accuracy,n");
  char expected[160];
  std::snprintf(expected, sizeof(expected), "%.6f,%.6f,%.6f,%.6f,%d", r.e_x,
                r.e_y, r.e_psi, r.accuracy, r.n);
  CHECK(lines[1] == expected);

  // histogram mass equals the sample count, and the CSV re-aggregates to it
  for (const char* name : {"hist_x.csv", "hist_y.csv", "hist_yaw.csv"}) {
    const auto hist_lines = read_lines(dir / name);
    REQUIRE(hist_lines.size() >= 2);
    CHECK(hist_lines[0] == "bin_low,count");
    long long total = 0;
    for (size_t i = 1; i < hist_lines.size(); ++i) {
      const auto comma = hist_lines[i].find(',');
      total += std::stoll(hist_lines[i].substr(comma + 1));
    }
    CHECK(total == r.n);
  }
  for (const char* name : {"hist_x.svg", "hist_y.svg", "hist_yaw.svg"}) {
    CHECK(std::filesystem::file_size(dir / name) > 100);
  }
}

TEST_CASE("perfect predictions produce an all-zero report") {
  MetricsReport r;
  r.n = 6;
  r.e_x = r.e_y = r.e_psi = 0.0;
  r.accuracy = 1.0;
  r.x_errors.assign(6, 0.0);
  r.y_errors.assign(6, 0.0);
  r.yaw_errors.assign(6, 0.0);
  const auto dir = temp_dir("voxpose_est_zero");
  emit_report(r, dir);
  const auto lines = read_lines(dir / "hist_x.csv");
  REQUIRE(lines.size() == 2);  // single zero bin
  CHECK(lines[1] == "0,6");
}

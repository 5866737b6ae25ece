#include "voxpose/estimator.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voxpose {

PipelineConfig PipelineConfig::full_scale() {
  PipelineConfig c;
  c.translation_grid = translation_grid_config();
  c.rotation_volume = {0.30, 0.30, 0.40};
  c.rotation_shape = {60, 60, 80};
  c.floor_z = 0.05;
  return c;
}

PipelineConfig PipelineConfig::desk_scale() {
  PipelineConfig c;
  c.translation_grid =
      translation_grid_config(default_translation_workspace(), {50, 25, 20});
  c.rotation_volume = {0.30, 0.30, 0.40};
  c.rotation_shape = {30, 30, 40};
  c.floor_z = 0.05;
  return c;
}

PipelineConfig PipelineConfig::from_models(const Model& tnet, const Model& rnet) {
  if (tnet.config.head != 2) {
    throw ModelError("a translation model (head 2) is required, got head " +
                     std::to_string(tnet.config.head));
  }
  if (rnet.config.head != 72) {
    throw ModelError("a rotation model (head 72) is required, got head " +
                     std::to_string(rnet.config.head));
  }
  PipelineConfig c;
  c.translation_grid = tnet.config.grid;
  c.rotation_volume = rnet.config.grid.extent;
  c.rotation_shape = rnet.config.grid.shape;
  c.floor_z = rnet.config.grid.origin.z();
  c.channels = tnet.config.grid.channels;
  return c;
}

namespace {

Tensor<float> grid_to_input(const VoxelGrid& g) {
  const auto& s = g.config.shape;
  Tensor<float> t({1, g.config.channels, s[2], s[1], s[0]});
  for (size_t i = 0; i < g.features.size(); ++i) {
    t.data[i] = static_cast<float>(g.features[i]);
  }
  return t;
}

int64_t total_points(const VoxelGrid& g) {
  int64_t n = 0;
  for (int32_t c : g.counts) n += c;
  return n;
}

int argmax_row(const float* v, int64_t n) {
  int best = 0;
  for (int64_t i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = int(i);  // ties keep the lowest index
  }
  return best;
}

}  // namespace

std::pair<double, double> estimate_translation(const PointCloud& base_cloud,
                                               const Model& tnet,
                                               const VoxelConfig& grid,
                                               int64_t* binned_points) {
  if (base_cloud.frame != Frame::base) {
    throw FrameError("estimate_translation expects a base-frame cloud");
  }
  if (tnet.config.head != 2) {
    throw ModelError("translation model required (head 2)");
  }
  const VoxelGrid g = voxelize(base_cloud, grid);
  const int64_t binned = total_points(g);
  if (binned_points) *binned_points = binned;
  if (binned == 0) {
    throw NoObjectError("no object: the cloud has no points inside the workspace volume");
  }
  const Tensor<float> out = tnet.forward_value(grid_to_input(g));
  return {double(out.data[0]), double(out.data[1])};
}

PoseEstimate estimate_rotation(const PointCloud& base_cloud, double cx, double cy,
                               const Model& rnet, const PipelineConfig& cfg,
                               EstimateDiag* diag) {
  if (base_cloud.frame != Frame::base) {
    throw FrameError("estimate_rotation expects a base-frame cloud");
  }
  if (rnet.config.head != 72) {
    throw ModelError("rotation model required (head 72)");
  }
  const VoxelConfig rcfg = cfg.rotation_grid_at(cx, cy);
  Aabb bounds;
  bounds.min = rcfg.origin;
  bounds.max = rcfg.origin + rcfg.extent;
  const PointCloud sub = crop_box(base_cloud, bounds);
  const VoxelGrid fine = voxelize(sub, rcfg);
  if (diag) {
    diag->crop_origin = rcfg.origin;
    diag->fine_points = total_points(fine);
  }

  const Tensor<float> logits = rnet.forward_value(grid_to_input(fine));

  PoseEstimate est;
  est.x = cx;
  est.y = cy;
  est.yaw_class = argmax_row(logits.ptr(), logits.shape[1]);
  est.yaw_deg = class_to_yaw(YawClass{est.yaw_class});
  // softmax in double for the reported probabilities
  est.probabilities.resize(logits.shape[1]);
  double mx = logits.data[0];
  for (int64_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, double(logits.data[i]));
  double sum = 0.0;
  for (int64_t i = 0; i < logits.numel(); ++i) {
    est.probabilities[i] = std::exp(double(logits.data[i]) - mx);
    sum += est.probabilities[i];
  }
  for (double& p : est.probabilities) p /= sum;
  return est;
}

PoseEstimate estimate_pose(const PointCloud& camera_cloud,
                           const RigidTransform& t_c2b, const Model& tnet,
                           const Model& rnet, const PipelineConfig& cfg,
                           EstimateDiag* diag) {
  const PointCloud base_cloud = transform_cloud(camera_cloud, t_c2b);
  int64_t coarse = 0;
  const auto [cx, cy] =
      estimate_translation(base_cloud, tnet, cfg.translation_grid, &coarse);
  PoseEstimate est = estimate_rotation(base_cloud, cx, cy, rnet, cfg, diag);
  if (diag) diag->coarse_points = coarse;
  return est;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

Task task_from_name(const std::string& name) {
  if (name == "translation") return Task::translation;
  if (name == "rotation") return Task::rotation;
  throw std::invalid_argument("unknown task " + name);
}

std::vector<TrainSample> load_split(const Dataset& ds, const std::string& split) {
  const std::vector<int> ids = ds.split_ids(split);
  std::vector<TrainSample> out(ids.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (int64_t i = 0; i < int64_t(ids.size()); ++i) {
    const SampleMeta& m = ds.samples.at(ids[i]);
    TrainSample s;
    s.base_cloud = transform_cloud(load_sample_cloud(ds, m.id), ds.sensor.t_c2b);
    s.label.x = m.x;
    s.label.y = m.y;
    s.label.yaw_deg = m.yaw_deg;
    s.yaw_class = m.yaw_class;
    out[i] = std::move(s);
  }
  return out;
}

namespace {

// Input tensors are assembled per batch; grids are cheap to recompute
// relative to the convolutions they feed.
Tensor<float> batch_input(const std::vector<TrainSample>& samples,
                          const std::vector<int>& ids, int64_t lo, int64_t hi,
                          Task task, const PipelineConfig& cfg) {
  const VoxelConfig probe =
      task == Task::translation
          ? cfg.translation_grid
          : cfg.rotation_grid_at(0.0, 0.0);
  const auto& s = probe.shape;
  const int64_t per = int64_t(probe.channels) * s[0] * s[1] * s[2];
  Tensor<float> t({hi - lo, probe.channels, s[2], s[1], s[0]});
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = lo; i < hi; ++i) {
    const TrainSample& sample = samples[ids[i]];
    const VoxelConfig vc =
        task == Task::translation
            ? cfg.translation_grid
            : cfg.rotation_grid_at(sample.label.x, sample.label.y);
    const VoxelGrid g = voxelize(sample.base_cloud, vc);
    float* dst = t.ptr() + (i - lo) * per;
    for (int64_t k = 0; k < per; ++k) dst[k] = float(g.features[k]);
  }
  return t;
}

struct ForwardScore {
  double loss_sum = 0.0;  // per-sample losses summed in double
  int64_t correct = 0;
};

// Double-precision per-sample losses from the float predictions, so logged
// losses do not depend on how samples were grouped into batches.
ForwardScore score_outputs(const Tensor<float>& out,
                           const std::vector<TrainSample>& samples,
                           const std::vector<int>& ids, int64_t lo, int64_t hi,
                           Task task) {
  ForwardScore fs;
  const int64_t cols = out.shape[1];
  for (int64_t i = lo; i < hi; ++i) {
    const TrainSample& s = samples[ids[i]];
    const float* row = out.ptr() + (i - lo) * cols;
    if (task == Task::translation) {
      const double dx = double(row[0]) - s.label.x;
      const double dy = double(row[1]) - s.label.y;
      fs.loss_sum += (dx * dx + dy * dy) / 2.0;
    } else {
      double mx = row[0];
      for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, double(row[j]));
      double sum = 0.0;
      for (int64_t j = 0; j < cols; ++j) sum += std::exp(double(row[j]) - mx);
      fs.loss_sum += (mx + std::log(sum)) - double(row[s.yaw_class]);
      fs.correct += argmax_row(row, cols) == s.yaw_class;
    }
  }
  return fs;
}

void check_finite(const Model& model, int epoch) {
  for (const Tensor<float>* p : model.parameters()) {
    for (float v : p->data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite parameter after epoch " +
                                 std::to_string(epoch));
      }
    }
  }
}

}  // namespace

TrainResult train(Model& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, Task task,
                  const TrainConfig& cfg, const PipelineConfig& pipeline) {
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (cfg.batch < 1 || cfg.epochs < 1) {
    throw std::invalid_argument("batch and epochs must be >= 1");
  }
  const int expected_head = task == Task::translation ? 2 : 72;
  if (model.config.head != expected_head) {
    throw ModelError("task/head mismatch: model head " +
                     std::to_string(model.config.head));
  }

  AdamState<float> adam;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.eps;
  adam.lr = cfg.lr;
  adam.init(model.parameters());

  Rng shuffle_rng(derive_seed(cfg.seed, 0x7a17));
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::vector<int> val_order(val_set.size());
  for (size_t i = 0; i < val_order.size(); ++i) val_order[i] = int(i);

  TrainResult result;
  const int64_t n = int64_t(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    ForwardScore epoch_score;
    for (int64_t lo = 0; lo < n; lo += cfg.batch) {
      const int64_t hi = std::min(n, lo + cfg.batch);
      const Tensor<float> input =
          batch_input(train_set, order, lo, hi, task, pipeline);

      Tape<float> tape;
      const auto in = tape.leaf(input);
      std::vector<Tape<float>::NodeId> param_nodes;
      const auto out = model.forward(tape, in, &param_nodes);

      Tape<float>::NodeId loss;
      if (task == Task::translation) {
        Tensor<float> labels({hi - lo, 2});
        for (int64_t i = lo; i < hi; ++i) {
          labels.data[(i - lo) * 2 + 0] = float(train_set[order[i]].label.x);
          labels.data[(i - lo) * 2 + 1] = float(train_set[order[i]].label.y);
        }
        loss = tape.l2_translation_loss(out, labels);
      } else {
        std::vector<int> classes(hi - lo);
        for (int64_t i = lo; i < hi; ++i) {
          classes[i - lo] = train_set[order[i]].yaw_class;
        }
        loss = tape.cross_entropy_loss(out, classes);
      }

      const double loss_val = double(tape.value(loss).data[0]);
      if (!std::isfinite(loss_val)) {
        throw std::runtime_error(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            ", batch starting at " + std::to_string(lo));
      }
      const ForwardScore bs =
          score_outputs(tape.value(out), train_set, order, lo, hi, task);
      epoch_score.loss_sum += bs.loss_sum;
      epoch_score.correct += bs.correct;

      tape.backward(loss);
      std::vector<const Tensor<float>*> grads;
      grads.reserve(param_nodes.size());
      for (const auto id : param_nodes) grads.push_back(&tape.grad(id));
      adam_step(model.parameters(), grads, adam);
    }

    EpochStats stats;
    stats.train_loss = epoch_score.loss_sum / double(n);
    stats.train_accuracy = double(epoch_score.correct) / double(n);

    if (!val_set.empty()) {
      ForwardScore vs;
      const int64_t vn = int64_t(val_set.size());
      for (int64_t lo = 0; lo < vn; lo += cfg.batch) {
        const int64_t hi = std::min(vn, lo + cfg.batch);
        const Tensor<float> input =
            batch_input(val_set, val_order, lo, hi, task, pipeline);
        const Tensor<float> out = model.forward_value(input);
        const ForwardScore bs = score_outputs(out, val_set, val_order, lo, hi, task);
        vs.loss_sum += bs.loss_sum;
        vs.correct += bs.correct;
      }
      stats.val_loss = vs.loss_sum / double(vn);
      stats.val_accuracy = double(vs.correct) / double(vn);
      stats.has_val = true;
    }
    result.history.push_back(stats);
    check_finite(model, epoch);
  }
  return result;
}

void save_loss_history(const std::filesystem::path& path, Task task,
                       const TrainResult& result) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    char buf[160];
    if (task == Task::translation) {
      f << "epoch,train_loss,val_loss\n";
      for (size_t e = 0; e < result.history.size(); ++e) {
        const EpochStats& s = result.history[e];
        int len;
        if (s.has_val) {
          len = std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", e + 1,
                              s.train_loss, s.val_loss);
        } else {
          len = std::snprintf(buf, sizeof(buf), "%zu,%.9g,\n", e + 1, s.train_loss);
        }
        f.write(buf, len);
      }
    } else {
      f << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
      for (size_t e = 0; e < result.history.size(); ++e) {
        const EpochStats& s = result.history[e];
        int len;
        if (s.has_val) {
          len = std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.6f,%.9g,%.6f\n",
                              e + 1, s.train_loss, s.train_accuracy, s.val_loss,
                              s.val_accuracy);
        } else {
          len = std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.6f,,\n", e + 1,
                              s.train_loss, s.train_accuracy);
        }
        f.write(buf, len);
      }
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

double yaw_class_error_deg(int a, int b) {
  const int d = std::abs(a - b);
  return kYawSectorDeg * std::min(d, kYawClasses - d);
}

MetricsReport evaluate(const Model& tnet, const Model& rnet,
                       const std::vector<TrainSample>& test_set,
                       const PipelineConfig& cfg) {
  if (test_set.empty()) throw std::invalid_argument("empty test set");
  MetricsReport r;
  const int64_t n = int64_t(test_set.size());
  r.n = int(n);
  r.x_errors.resize(n);
  r.y_errors.resize(n);
  r.yaw_errors.resize(n);
  std::vector<int> exact(n, 0);

#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    const TrainSample& s = test_set[i];
    const auto [cx, cy] =
        estimate_translation(s.base_cloud, tnet, cfg.translation_grid);
    const PoseEstimate est = estimate_rotation(s.base_cloud, cx, cy, rnet, cfg);
    r.x_errors[i] = std::abs(cx - s.label.x);
    r.y_errors[i] = std::abs(cy - s.label.y);
    r.yaw_errors[i] = yaw_class_error_deg(s.yaw_class, est.yaw_class);
    exact[i] = est.yaw_class == s.yaw_class;
  }

  // index-ordered reduction
  double sx = 0.0, sy = 0.0, sp = 0.0;
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    sx += r.x_errors[i];
    sy += r.y_errors[i];
    sp += r.yaw_errors[i];
    correct += exact[i];
  }
  r.e_x = sx / double(n);
  r.e_y = sy / double(n);
  r.e_psi = sp / double(n);
  r.accuracy = double(correct) / double(n);
  return r;
}

namespace {

struct Histogram {
  double bin_width;
  std::vector<int64_t> counts;
};

Histogram make_histogram(const std::vector<double>& values, double bin_width) {
  Histogram h{bin_width, {}};
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, v);
  const size_t bins = size_t(std::floor(mx / bin_width)) + 1;
  h.counts.assign(bins, 0);
  for (double v : values) {
    h.counts[size_t(std::floor(v / bin_width))] += 1;
  }
  return h;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "bin_low,count\n";
    char buf[64];
    for (size_t i = 0; i < h.counts.size(); ++i) {
      const int len = std::snprintf(buf, sizeof(buf), "%g,%lld\n",
                                    double(i) * h.bin_width,
                                    static_cast<long long>(h.counts[i]));
      f.write(buf, len);
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_histogram_svg(const std::filesystem::path& path, const Histogram& h,
                         const std::string& title, const std::string& unit) {
  const int width = 640, height = 320, margin = 40;
  int64_t peak = 1;
  for (int64_t c : h.counts) peak = std::max(peak, c);
  const double bar_w =
      double(width - 2 * margin) / double(std::max<size_t>(1, h.counts.size()));

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (size_t i = 0; i < h.counts.size(); ++i) {
    const double frac = double(h.counts[i]) / double(peak);
    const double bh = frac * (height - 2 * margin);
    os << "<rect x=\"" << margin + double(i) * bar_w << "\" y=\""
       << height - margin - bh << "\" width=\"" << bar_w * 0.9 << "\" height=\""
       << bh << "\" fill=\"#4878b0\"/>\n";
  }
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
     << width - margin << "\" y2=\"" << height - margin
     << "\" stroke=\"black\"/>\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">bin width %g %s, peak %lld</text>\n",
                margin, height - margin + 24, h.bin_width, unit.c_str(),
                static_cast<long long>(peak));
  os << buf << "</svg>\n";

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << os.str();
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void emit_report(const MetricsReport& report, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  {
    const std::filesystem::path tmp = outdir / "metrics.csv.tmp";
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write metrics.csv in " + outdir.string());
    char buf[160];
    const int len =
        std::snprintf(buf, sizeof(buf), "e_x_m,e_y_m,e_psi_deg,accuracy,n\n"
                                        "%.6f,%.6f,%.6f,%.6f,%d\n",
                      report.e_x, report.e_y, report.e_psi, report.accuracy,
                      report.n);
    f.write(buf, len);
    f.close();
    std::filesystem::rename(tmp, outdir / "metrics.csv");
  }
  const Histogram hx = make_histogram(report.x_errors, 0.01);
  const Histogram hy = make_histogram(report.y_errors, 0.01);
  const Histogram hyaw = make_histogram(report.yaw_errors, 5.0);
  write_histogram_csv(outdir / "hist_x.csv", hx);
  write_histogram_csv(outdir / "hist_y.csv", hy);
  write_histogram_csv(outdir / "hist_yaw.csv", hyaw);
  write_histogram_svg(outdir / "hist_x.svg", hx, "x error distribution", "m");
  write_histogram_svg(outdir / "hist_y.svg", hy, "y error distribution", "m");
  write_histogram_svg(outdir / "hist_yaw.svg", hyaw, "yaw error distribution",
                      "deg");
}

}  // namespace voxpose

#include "voxpose/registration.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace voxpose {

RigidTransform fit_rigid(const Correspondences& c, Frame from, Frame to) {
  const size_t n = c.a.size();
  if (n != c.b.size()) throw RegistrationError("pair lists differ in length");
  if (n < 3) throw RegistrationError("need at least 3 pairs");

  Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    ca += c.a[i];
    cb += c.b[i];
  }
  ca /= double(n);
  cb /= double(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    cov += (c.b[i] - cb) * (c.a[i] - ca).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  // second singular value ~ 0 means the pairs are (near) collinear and the
  // rotation about that axis is unconstrained
  const Eigen::Vector3d sv = svd.singularValues();
  if (sv(1) < 1e-12 * std::max(1.0, sv(0))) {
    throw RegistrationError("degenerate correspondences (collinear or coincident)");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0
                                                                          : 1.0;
  RigidTransform t;
  t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  t.translation = cb - t.rotation * ca;
  t.from = from;
  t.to = to;
  return t;
}

// ---------------------------------------------------------------------------
// nearest neighbours
// ---------------------------------------------------------------------------

namespace {

inline bool closer(double d2, int idx, double best_d2, int best_idx) {
  return d2 < best_d2 || (d2 == best_d2 && idx < best_idx);
}

int brute_nn(const Eigen::Vector3d& q, const std::vector<Eigen::Vector3d>& pts) {
  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - q).squaredNorm();
    if (closer(d2, int(i), best, best_idx)) {
      best = d2;
      best_idx = int(i);
    }
  }
  return best_idx;
}

// Uniform-grid index over the target bounding box. Queries expand Chebyshev
// rings of cells; any point in an unexamined ring is at least
// ring * min_cell away, which makes the early exit exact.
class GridIndex {
 public:
  explicit GridIndex(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
    Eigen::Vector3d lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Eigen::Vector3d span = (hi - lo).cwiseMax(1e-9);
    const double target_cell =
        std::cbrt(span.x() * span.y() * span.z() / double(pts.size()));
    for (int k = 0; k < 3; ++k) {
      dims_[k] = std::max<int64_t>(
          1, std::min<int64_t>(256, int64_t(std::ceil(span[k] / target_cell))));
      cell_[k] = span[k] / double(dims_[k]);
      origin_[k] = lo[k];
    }
    min_cell_ = std::min({cell_[0], cell_[1], cell_[2]});
    cells_.resize(dims_[0] * dims_[1] * dims_[2]);
    for (size_t i = 0; i < pts.size(); ++i) {
      cells_[flat(coord(pts[i]))].push_back(int(i));
    }
  }

  int query(const Eigen::Vector3d& q) const {
    const std::array<int64_t, 3> qc = coord_unclamped(q);
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    const int64_t max_ring =
        std::max({dims_[0], dims_[1], dims_[2]}) + ring_offset(qc);
    for (int64_t ring = 0; ring <= max_ring; ++ring) {
      if (best_idx >= 0 && ring >= 1) {
        // unexamined cells sit at Chebyshev >= ring, hence at least
        // (ring - 1) * min_cell away from the query point
        const double bound = double(ring - 1) * min_cell_;
        if (best <= bound * bound) break;
      }
      scan_ring(q, qc, ring, &best, &best_idx);
    }
    return best_idx;
  }

 private:
  std::array<int64_t, 3> coord(const Eigen::Vector3d& p) const {
    std::array<int64_t, 3> c;
    for (int k = 0; k < 3; ++k) {
      c[k] = std::clamp<int64_t>(int64_t((p[k] - origin_[k]) / cell_[k]), 0,
                                 dims_[k] - 1);
    }
    return c;
  }

  std::array<int64_t, 3> coord_unclamped(const Eigen::Vector3d& p) const {
    std::array<int64_t, 3> c;
    for (int k = 0; k < 3; ++k) {
      c[k] = int64_t(std::floor((p[k] - origin_[k]) / cell_[k]));
    }
    return c;
  }

  int64_t ring_offset(const std::array<int64_t, 3>& qc) const {
    int64_t off = 0;
    for (int k = 0; k < 3; ++k) {
      off = std::max(off, std::max<int64_t>(-qc[k], qc[k] - (dims_[k] - 1)));
    }
    return off;
  }

  int64_t flat(const std::array<int64_t, 3>& c) const {
    return (c[2] * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  void scan_cell(const Eigen::Vector3d& q, int64_t cx, int64_t cy, int64_t cz,
                 double* best, int* best_idx) const {
    if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] ||
        cz >= dims_[2]) {
      return;
    }
    for (int idx : cells_[flat({cx, cy, cz})]) {
      const double d2 = (pts_[idx] - q).squaredNorm();
      if (closer(d2, idx, *best, *best_idx)) {
        *best = d2;
        *best_idx = idx;
      }
    }
  }

  void scan_ring(const Eigen::Vector3d& q, const std::array<int64_t, 3>& qc,
                 int64_t ring, double* best, int* best_idx) const {
    if (ring == 0) {
      scan_cell(q, qc[0], qc[1], qc[2], best, best_idx);
      return;
    }
    for (int64_t dz = -ring; dz <= ring; ++dz) {
      for (int64_t dy = -ring; dy <= ring; ++dy) {
        for (int64_t dx = -ring; dx <= ring; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) {
            continue;
          }
          scan_cell(q, qc[0] + dx, qc[1] + dy, qc[2] + dz, best, best_idx);
        }
      }
    }
  }

  const std::vector<Eigen::Vector3d>& pts_;
  std::vector<std::vector<int>> cells_;
  std::array<int64_t, 3> dims_;
  Eigen::Vector3d origin_;
  Eigen::Vector3d cell_;
  double min_cell_ = 1.0;
};

constexpr size_t kGridThreshold = 5000;

std::vector<int> nn_impl(const std::vector<Eigen::Vector3d>& queries,
                         const std::vector<Eigen::Vector3d>& targets,
                         bool parallel) {
  if (targets.empty()) throw RegistrationError("empty target cloud");
  std::vector<int> out(queries.size());
  if (targets.size() > kGridThreshold) {
    const GridIndex index(targets);
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t i = 0; i < int64_t(queries.size()); ++i) {
      out[i] = index.query(queries[i]);
    }
  } else {
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t i = 0; i < int64_t(queries.size()); ++i) {
      out[i] = brute_nn(queries[i], targets);
    }
  }
  return out;
}

}  // namespace

std::vector<int> nearest_neighbors(const std::vector<Eigen::Vector3d>& queries,
                                   const std::vector<Eigen::Vector3d>& targets,
                                   bool parallel) {
  return nn_impl(queries, targets, parallel);
}

std::vector<int> nearest_neighbors_serial(
    const std::vector<Eigen::Vector3d>& queries,
    const std::vector<Eigen::Vector3d>& targets) {
  return nn_impl(queries, targets, false);
}

// ---------------------------------------------------------------------------
// ICP
// ---------------------------------------------------------------------------

IcpResult icp(const PointCloud& source, const PointCloud& target,
              const IcpConfig& cfg) {
  if (source.points.empty() || target.points.empty()) {
    throw RegistrationError("icp: empty cloud");
  }
  if (cfg.max_iterations < 1 || !(cfg.tolerance > 0)) {
    throw RegistrationError("icp: bad configuration");
  }
  if (cfg.initial.from != source.frame || cfg.initial.to != target.frame) {
    throw FrameError("icp: initial guess frames do not match the clouds");
  }

  std::vector<Eigen::Vector3d> src(source.points.size());
  for (size_t i = 0; i < src.size(); ++i) src[i] = source.points[i].position;
  std::vector<Eigen::Vector3d> tgt(target.points.size());
  for (size_t i = 0; i < tgt.size(); ++i) tgt[i] = target.points[i].position;

  IcpResult result;
  result.transform = cfg.initial;
  double prev_rms = std::numeric_limits<double>::infinity();

  std::vector<Eigen::Vector3d> moved(src.size());
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    for (size_t i = 0; i < src.size(); ++i) {
      moved[i] = result.transform.apply(src[i]);
    }
    const std::vector<int> nn = nearest_neighbors(moved, tgt);
    double sum = 0.0;
    for (size_t i = 0; i < src.size(); ++i) {
      sum += (moved[i] - tgt[nn[i]]).squaredNorm();
    }
    const double rms = std::sqrt(sum / double(src.size()));
    result.residual_history.push_back(rms);
    result.rms = rms;
    result.iterations = iter;
    if (rms < cfg.tolerance || prev_rms - rms < cfg.tolerance) break;
    if (iter == cfg.max_iterations) break;  // keep (transform, rms) consistent
    prev_rms = rms;

    Correspondences corr;
    corr.a = src;
    corr.b.resize(src.size());
    for (size_t i = 0; i < src.size(); ++i) corr.b[i] = tgt[nn[i]];
    result.transform = fit_rigid(corr, source.frame, target.frame);
  }
  return result;
}

Correspondences load_correspondences_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw RegistrationError("cannot read " + path.string());
  Correspondences c;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    double v[6];
    std::string tok;
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, tok, ',')) {
        throw RegistrationError("bad correspondence line " +
                                std::to_string(line_no) + " in " + path.string());
      }
      v[i] = std::stod(tok);
    }
    c.a.emplace_back(v[0], v[1], v[2]);
    c.b.emplace_back(v[3], v[4], v[5]);
  }
  return c;
}

}  // namespace voxpose

#include "voxpose/pointcloud.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voxpose {

namespace {

const char* kHeaderLines[] = {
    "ply",
    "format ascii 1.0",
    nullptr,  // element vertex N
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
    "end_header",
};

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw PlyError("cannot open " + path.string());

  PointCloud cloud;
  size_t vertex_count = 0;
  int line_no = 0;
  std::string line;
  for (const char* expected : kHeaderLines) {
    do {
      if (!std::getline(f, line)) throw PlyError("truncated header", line_no);
      ++line_no;
    } while (line.rfind("comment", 0) == 0);
    if (expected == nullptr) {
      std::istringstream is(line);
      std::string elem, vert;
      long long n = -1;
      is >> elem >> vert >> n;
      if (elem != "element" || vert != "vertex" || n < 0) {
        throw PlyError("expected `element vertex N`, got `" + line + "`", line_no);
      }
      vertex_count = static_cast<size_t>(n);
    } else if (line != expected) {
      throw PlyError("expected `" + std::string(expected) + "`, got `" + line + "`",
                     line_no);
    }
  }

  cloud.points.reserve(vertex_count);
  for (size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(f, line)) {
      throw PlyError("header declares " + std::to_string(vertex_count) +
                         " vertices but body has " + std::to_string(i),
                     line_no);
    }
    ++line_no;
    std::istringstream is(line);
    PointXYZRGB p;
    double x, y, z;
    int r, g, b;
    if (!(is >> x >> y >> z >> r >> g >> b)) {
      throw PlyError("malformed vertex line `" + line + "`", line_no);
    }
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw PlyError("non-finite coordinate", line_no);
    }
    if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw PlyError("color out of range", line_no);
    }
    p.position = Eigen::Vector3d(x, y, z);
    p.color = {static_cast<uint8_t>(r), static_cast<uint8_t>(g),
               static_cast<uint8_t>(b)};
    cloud.points.push_back(p);
  }
  return cloud;
}

void save_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw PlyError("cannot write " + path.string());
    f << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
    char buf[128];
    for (const PointXYZRGB& p : cloud.points) {
      const int n = std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %d %d %d\n",
                                  p.position.x(), p.position.y(), p.position.z(),
                                  p.color[0], p.color[1], p.color[2]);
      f.write(buf, n);
    }
    if (!f) throw PlyError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  if (t.from != cloud.frame) {
    throw FrameError(std::string("transform_cloud: cloud is in frame ") +
                     frame_name(cloud.frame) + " but transform maps from " +
                     frame_name(t.from));
  }
  PointCloud out;
  out.frame = t.to;
  out.points.resize(cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    out.points[i].position = t.apply(cloud.points[i].position);
    out.points[i].color = cloud.points[i].color;
  }
  return out;
}

PointCloud crop_box(const PointCloud& cloud, const Aabb& box) {
  PointCloud out;
  out.frame = cloud.frame;
  for (const PointXYZRGB& p : cloud.points) {
    if (box.contains(p.position)) out.points.push_back(p);
  }
  return out;
}

}  // namespace voxpose

#include "voxpose/netmodels.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "voxpose/rng.hpp"

namespace voxpose {

namespace {

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

std::string join_csv(const double* v, int n) {
  std::string out;
  char buf[40];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    if (i) out += ",";
    out += buf;
  }
  return out;
}

std::vector<double> split_csv(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

}  // namespace

NetConfig NetConfig::translation_full() {
  NetConfig c;
  c.task = "translation";
  c.grid = translation_grid_config();
  c.input = {c.grid.channels, c.grid.shape[2], c.grid.shape[1], c.grid.shape[0]};
  c.widths = {8, 16, 32, 64, 256};
  c.head = 2;
  return c;
}

NetConfig NetConfig::translation_desk() {
  NetConfig c;
  c.task = "translation";
  c.grid = translation_grid_config(default_translation_workspace(), {50, 25, 20});
  c.input = {c.grid.channels, c.grid.shape[2], c.grid.shape[1], c.grid.shape[0]};
  c.widths = {4, 8, 16, 32, 128};
  c.head = 2;
  return c;
}

NetConfig NetConfig::rotation_full() {
  NetConfig c;
  c.task = "rotation";
  c.grid = rotation_grid_config(0.0, 0.0);
  c.input = {c.grid.channels, c.grid.shape[2], c.grid.shape[1], c.grid.shape[0]};
  c.widths = {8, 16, 32, 64, 256};
  c.head = 72;
  return c;
}

NetConfig NetConfig::rotation_desk() {
  NetConfig c;
  c.task = "rotation";
  c.grid = rotation_grid_config(0.0, 0.0, {0.30, 0.30, 0.40}, {30, 30, 40});
  c.input = {c.grid.channels, c.grid.shape[2], c.grid.shape[1], c.grid.shape[0]};
  c.widths = {4, 8, 16, 32, 128};
  c.head = 72;
  return c;
}

std::string NetConfig::describe() const {
  std::ostringstream os;
  os << "vpnet1 task=" << task << " in=" << input[0] << "," << input[1] << ","
     << input[2] << "," << input[3] << " widths=" << widths[0] << ","
     << widths[1] << "," << widths[2] << "," << widths[3] << "," << widths[4]
     << " head=" << head;
  const double geo[6] = {grid.origin.x(), grid.origin.y(), grid.origin.z(),
                         grid.extent.x(), grid.extent.y(), grid.extent.z()};
  os << " grid=" << join_csv(geo, 6) << "," << grid.shape[0] << ","
     << grid.shape[1] << "," << grid.shape[2] << "," << grid.channels;
  return os.str();
}

NetConfig NetConfig::parse(const std::string& descriptor) {
  std::istringstream is(descriptor);
  std::string magic;
  is >> magic;
  if (magic != "vpnet1") {
    throw ModelError("unknown architecture descriptor: " + descriptor);
  }
  NetConfig c;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ModelError("bad descriptor token " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "task") {
      c.task = val;
    } else if (key == "in") {
      const auto v = split_csv(val);
      if (v.size() != 4) throw ModelError("bad in= field");
      for (int i = 0; i < 4; ++i) c.input[i] = int(v[i]);
    } else if (key == "widths") {
      const auto v = split_csv(val);
      if (v.size() != 5) throw ModelError("bad widths= field");
      for (int i = 0; i < 5; ++i) c.widths[i] = int(v[i]);
    } else if (key == "head") {
      c.head = std::stoi(val);
    } else if (key == "grid") {
      const auto v = split_csv(val);
      if (v.size() != 10) throw ModelError("bad grid= field");
      c.grid.origin = {v[0], v[1], v[2]};
      c.grid.extent = {v[3], v[4], v[5]};
      c.grid.shape = {int(v[6]), int(v[7]), int(v[8])};
      c.grid.channels = int(v[9]);
    } else {
      throw ModelError("unknown descriptor key " + key);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// model construction
// ---------------------------------------------------------------------------

namespace {

struct ShapeChain {
  int c, d, h, w;
};

void add_conv3d(Model& m, ShapeChain& s, int out_c, int k, int stride, int pad) {
  Layer l;
  l.kind = LayerKind::conv3d;
  l.weights = Tensor<float>({out_c, s.c, k, k, k});
  l.stride = stride;
  l.pad = pad;
  m.layers.push_back(std::move(l));
  s = {out_c, conv_out(s.d, k, stride, pad), conv_out(s.h, k, stride, pad),
       conv_out(s.w, k, stride, pad)};
}

void add_squeeze(Model& m, ShapeChain& s, int out_c, int k, int pad) {
  Layer l;
  l.kind = LayerKind::squeeze_conv;
  l.weights = Tensor<float>({out_c, s.c, s.d, k, k});
  l.pad = pad;
  m.layers.push_back(std::move(l));
  s = {out_c, 1, conv_out(s.h, k, 1, pad), conv_out(s.w, k, 1, pad)};
}

void add_conv2d(Model& m, ShapeChain& s, int out_c, int k, int stride, int pad) {
  Layer l;
  l.kind = LayerKind::conv2d;
  l.weights = Tensor<float>({out_c, s.c, k, k});
  l.stride = stride;
  l.pad = pad;
  m.layers.push_back(std::move(l));
  s = {out_c, 1, conv_out(s.h, k, stride, pad), conv_out(s.w, k, stride, pad)};
}

void add_plain(Model& m, LayerKind kind) { m.layers.push_back(Layer{kind, {}, {}, 1, 0}); }

void add_pool(Model& m, ShapeChain& s) {
  add_plain(m, LayerKind::maxpool2x2);
  if (s.h < 2 || s.w < 2) throw ModelError("maxpool on degenerate feature map");
  s.h /= 2;
  s.w /= 2;
}

void add_fc(Model& m, ShapeChain& s, int out) {
  Layer l;
  l.kind = LayerKind::fully_connected;
  l.weights = Tensor<float>({out, int64_t(s.c) * s.h * s.w});
  l.bias = Tensor<float>({out});
  m.layers.push_back(std::move(l));
  s = {out, 1, 1, 1};
}

Model build_backbone(const NetConfig& cfg, bool extra_conv3d) {
  Model m;
  m.config = cfg;
  ShapeChain s{cfg.input[0], cfg.input[1], cfg.input[2], cfg.input[3]};
  const auto& w = cfg.widths;

  add_conv3d(m, s, w[0], 5, 2, 2);
  add_plain(m, LayerKind::relu);
  if (extra_conv3d) {
    add_conv3d(m, s, w[0], 3, 1, 1);
    add_plain(m, LayerKind::relu);
  }
  add_squeeze(m, s, w[1], 3, 1);
  add_plain(m, LayerKind::relu);
  add_conv2d(m, s, w[2], 3, 2, 1);
  add_plain(m, LayerKind::relu);
  add_pool(m, s);
  add_conv2d(m, s, w[3], 3, 1, 1);
  add_plain(m, LayerKind::relu);
  add_pool(m, s);
  add_plain(m, LayerKind::flatten);
  add_fc(m, s, w[4]);
  add_plain(m, LayerKind::relu);
  add_fc(m, s, cfg.head);
  return m;
}

}  // namespace

Model build_translation_net(const NetConfig& cfg) {
  if (cfg.task != "translation" || cfg.head != 2) {
    throw ModelError("translation net requires task=translation, head=2");
  }
  return build_backbone(cfg, /*extra_conv3d=*/false);
}

Model build_rotation_net(const NetConfig& cfg) {
  if (cfg.task != "rotation" || cfg.head != 72) {
    throw ModelError("rotation net requires task=rotation, head=72");
  }
  return build_backbone(cfg, /*extra_conv3d=*/true);
}

Model build_net(const NetConfig& cfg) {
  if (cfg.task == "translation") return build_translation_net(cfg);
  if (cfg.task == "rotation") return build_rotation_net(cfg);
  throw ModelError("unknown task " + cfg.task);
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const Tensor<float>* p : parameters()) n += p->numel();
  return n;
}

std::vector<Tensor<float>*> Model::parameters() {
  std::vector<Tensor<float>*> out;
  for (Layer& l : layers) {
    if (!l.weights.empty()) out.push_back(&l.weights);
    if (!l.bias.empty()) out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor<float>*> Model::parameters() const {
  std::vector<const Tensor<float>*> out;
  for (const Layer& l : layers) {
    if (!l.weights.empty()) out.push_back(&l.weights);
    if (!l.bias.empty()) out.push_back(&l.bias);
  }
  return out;
}

void Model::init_params(uint64_t seed) {
  Rng rng(seed);
  for (Layer& l : layers) {
    if (!l.weights.empty()) {
      int64_t fan_in = 1;
      for (size_t i = 1; i < l.weights.shape.size(); ++i) {
        fan_in *= l.weights.shape[i];
      }
      const double bound = std::sqrt(6.0 / double(fan_in));
      for (float& v : l.weights.data) {
        v = float(rng.uniform(-bound, bound));
      }
    }
    for (float& v : l.bias.data) v = 0.0f;
  }
}

Tape<float>::NodeId Model::forward(Tape<float>& tape, Tape<float>::NodeId input,
                                   std::vector<Tape<float>::NodeId>* param_nodes) const {
  const Tensor<float>& in = tape.value(input);
  if (in.rank() != 5 || in.shape[1] != config.input[0] ||
      in.shape[2] != config.input[1] || in.shape[3] != config.input[2] ||
      in.shape[4] != config.input[3]) {
    throw ModelError("model input shape does not match configuration");
  }
  auto x = input;
  for (const Layer& l : layers) {
    switch (l.kind) {
      case LayerKind::conv3d: {
        const auto w = tape.leaf(l.weights);
        if (param_nodes) param_nodes->push_back(w);
        x = tape.conv3d(x, w, Stride3{l.stride, l.stride, l.stride},
                        Pad3{l.pad, l.pad, l.pad});
        break;
      }
      case LayerKind::squeeze_conv: {
        const auto w = tape.leaf(l.weights);
        if (param_nodes) param_nodes->push_back(w);
        x = tape.conv3d_to_2d(x, w, l.pad);
        break;
      }
      case LayerKind::conv2d: {
        const auto w = tape.leaf(l.weights);
        if (param_nodes) param_nodes->push_back(w);
        x = tape.conv2d(x, w, l.stride, l.pad);
        break;
      }
      case LayerKind::maxpool2x2:
        x = tape.maxpool2x2(x);
        break;
      case LayerKind::relu:
        x = tape.relu(x);
        break;
      case LayerKind::flatten:
        x = tape.flatten(x);
        break;
      case LayerKind::fully_connected: {
        const auto w = tape.leaf(l.weights);
        const auto b = tape.leaf(l.bias);
        if (param_nodes) {
          param_nodes->push_back(w);
          param_nodes->push_back(b);
        }
        x = tape.fully_connected(x, w, b);
        break;
      }
    }
  }
  return x;
}

Tensor<float> Model::forward_value(const Tensor<float>& input) const {
  Tape<float> tape;
  const auto in = tape.leaf(input);
  const auto out = forward(tape, in);
  return tape.value(out);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'V', 'P', 'N', 'N'};
constexpr uint16_t kVersion = 1;
}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ModelError("cannot write " + path.string());
    f.write(kMagic, 4);
    f.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const std::string desc = m.config.describe();
    const uint32_t len = static_cast<uint32_t>(desc.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(desc.data(), len);
    for (const Tensor<float>* p : m.parameters()) {
      f.write(reinterpret_cast<const char*>(p->ptr()),
              p->numel() * sizeof(float));
    }
    if (!f) throw ModelError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot read " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw ModelError(path.string() + " is not a vpnn checkpoint");
  }
  uint16_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!f || version != kVersion) {
    throw ModelError("unsupported checkpoint version in " + path.string());
  }
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len > 4096) throw ModelError("bad descriptor in " + path.string());
  std::string desc(len, '\0');
  f.read(desc.data(), len);
  if (!f) throw ModelError("truncated checkpoint " + path.string());

  Model m = build_net(NetConfig::parse(desc));
  for (Tensor<float>* p : m.parameters()) {
    f.read(reinterpret_cast<char*>(p->ptr()), p->numel() * sizeof(float));
    if (!f) throw ModelError("truncated checkpoint " + path.string());
  }
  f.peek();
  if (!f.eof()) throw ModelError("trailing bytes in " + path.string());
  return m;
}

}  // namespace voxpose

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "voxpose/autodiff.hpp"
#include "voxpose/voxelizer.hpp"

namespace voxpose {

// Layer widths of the backbone: {conv3d, squeeze, conv2d_a, conv2d_b, fc}.
// Full-scale defaults follow a scaled-down AlexNet cadence; desk-scale
// halves every width.
struct NetConfig {
  std::string task = "translation";            // or "rotation"
  std::array<int, 4> input = {4, 40, 50, 100};  // C, D, H, W
  std::array<int, 5> widths = {8, 16, 32, 64, 256};
  int head = 2;
  VoxelConfig grid;  // geometry the net was trained against

  static NetConfig translation_full();
  static NetConfig translation_desk();
  static NetConfig rotation_full();
  static NetConfig rotation_desk();

  std::string describe() const;
  static NetConfig parse(const std::string& descriptor);
};

enum class LayerKind {
  conv3d,        // k5 s2 p2 or k3 s1 p1 (stored per layer)
  squeeze_conv,  // kernel depth = incoming depth, k3 in plane, p1
  conv2d,
  maxpool2x2,
  relu,
  flatten,
  fully_connected,
};

struct Layer {
  LayerKind kind;
  Tensor<float> weights;  // empty for parameterless layers
  Tensor<float> bias;     // fc only
  int stride = 1;
  int pad = 0;
};

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A concrete network: ordered layers plus their parameters. Immutable for
// inference; training mutates parameters under exclusive access.
struct Model {
  NetConfig config;
  std::vector<Layer> layers;

  int64_t parameter_count() const;
  std::vector<Tensor<float>*> parameters();
  std::vector<const Tensor<float>*> parameters() const;
  // He-style uniform init on weights, zero biases.
  void init_params(uint64_t seed);

  // Builds the graph for a [N,C,D,H,W] input node. param_nodes, when given,
  // receives the tape node of each parameter in parameters() order.
  Tape<float>::NodeId forward(Tape<float>& tape, Tape<float>::NodeId input,
                              std::vector<Tape<float>::NodeId>* param_nodes = nullptr) const;

  // Convenience single/batch inference.
  Tensor<float> forward_value(const Tensor<float>& input) const;
};

Model build_translation_net(const NetConfig& cfg);
Model build_rotation_net(const NetConfig& cfg);
Model build_net(const NetConfig& cfg);  // dispatch on cfg.task

// `.vpnn` checkpoint: magic VPNN, u16 version, length-prefixed descriptor,
// then per-parameter little-endian float32 blobs in parameters() order.
void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace voxpose

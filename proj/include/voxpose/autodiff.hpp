#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxpose {

// Dense row-major tensor. float carries training; double carries the
// finite-difference gradient checks.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s)
      : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  Tensor(std::vector<int64_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape)) {
      throw std::invalid_argument("tensor data length does not match shape");
    }
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 1) throw std::invalid_argument("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  int rank() const { return static_cast<int>(shape.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

struct Stride3 {
  int d = 1, h = 1, w = 1;
};
struct Pad3 {
  int d = 0, h = 0, w = 0;
};

// Reverse-mode tape. Nodes are appended in forward order; backward() walks
// them in reverse. A tape is confined to one logical thread; the conv
// kernels underneath may fan out over OpenMP with deterministic reductions.
template <class T>
class Tape {
 public:
  using NodeId = int32_t;

  explicit Tape(bool parallel_kernels = true)
      : parallel_kernels_(parallel_kernels) {}

  NodeId leaf(Tensor<T> value);

  const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }
  const Tensor<T>& grad(NodeId id) const { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }

  // input [N,C,D,H,W], kernels [K,C,kd,kh,kw] -> [N,K,OD,OH,OW]
  NodeId conv3d(NodeId input, NodeId kernels, Stride3 stride, Pad3 pad);
  // 3D convolution with kernel depth equal to input depth and no depth
  // padding; output depth 1 is squeezed away: [N,K,OH,OW].
  NodeId conv3d_to_2d(NodeId input, NodeId kernels, int pad_hw);
  // input [N,C,H,W], kernels [K,C,kh,kw] -> [N,K,OH,OW]
  NodeId conv2d(NodeId input, NodeId kernels, int stride, int pad);
  // 2x2 window, stride 2; gradient routed to the first maximum.
  NodeId maxpool2x2(NodeId input);
  NodeId relu(NodeId input);
  // [N, ...] -> [N, F]
  NodeId flatten(NodeId input);
  // input [N,I], weights [O,I], bias [O] -> [N,O]
  NodeId fully_connected(NodeId input, NodeId weights, NodeId bias);
  // row-wise softmax on [N,C]
  NodeId softmax(NodeId input);
  // scalar probe: sum of weights[i] * value[i]
  NodeId weighted_sum(NodeId input, const Tensor<T>& weights);
  // (1/2N) sum over batch of squared coordinate errors; pred/labels [N,2]
  NodeId l2_translation_loss(NodeId pred, const Tensor<T>& labels);
  // fused log-softmax + NLL over [N,C] logits
  NodeId cross_entropy_loss(NodeId logits, const std::vector<int>& labels);

  void backward(NodeId loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
  };

  NodeId add_node(Tensor<T> value, std::function<void(Tape&)> back = {});
  Tensor<T>& grad_buf(NodeId id);
  NodeId reshape_node(NodeId input, std::vector<int64_t> shape);

  std::vector<Node> nodes_;
  bool parallel_kernels_ = true;
};

// Adam optimizer state; moments match the parameter list elementwise.
template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-5;
  int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  void init(const std::vector<Tensor<T>*>& params);
};

// One bias-corrected Adam update over a parameter list.
template <class T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state);

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace voxpose

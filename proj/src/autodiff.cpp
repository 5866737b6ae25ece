#include "voxpose/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "voxpose/kernels.hpp"

namespace voxpose {

namespace {

void expect(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

template <class T>
typename Tape<T>::NodeId Tape<T>::add_node(Tensor<T> value,
                                           std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor<T>{}, std::move(back)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <class T>
Tensor<T>& Tape<T>::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape);
  return n.grad;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::leaf(Tensor<T> value) {
  return add_node(std::move(value));
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::NodeId Tape<T>::conv3d(NodeId input, NodeId kernels,
                                         Stride3 stride, Pad3 pad) {
  const Tensor<T>& in = value(input);
  const Tensor<T>& w = value(kernels);
  expect(in.rank() == 5, "conv3d: input must be [N,C,D,H,W]");
  expect(w.rank() == 5, "conv3d: kernels must be [K,C,kd,kh,kw]");
  expect(w.shape[1] == in.shape[1], "conv3d: channel mismatch");

  const kernels::ConvDims dm = kernels::conv_dims(
      in.shape[0], in.shape[1], in.shape[2], in.shape[3], in.shape[4],
      w.shape[0], w.shape[2], w.shape[3], w.shape[4], stride.d, stride.h,
      stride.w, pad.d, pad.h, pad.w);

  Tensor<T> out({dm.n, dm.k, dm.od, dm.oh, dm.ow});
  kernels::conv_forward(in.ptr(), w.ptr(), out.ptr(), dm, parallel_kernels_);

  const bool par = parallel_kernels_;
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, kernels, dm, par, id](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    kernels::conv_backward_input(g.ptr(), t.value(kernels).ptr(),
                                 t.grad_buf(input).ptr(), dm, par);
    kernels::conv_backward_weights(g.ptr(), t.value(input).ptr(),
                                   t.grad_buf(kernels).ptr(), dm, par);
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::conv3d_to_2d(NodeId input, NodeId kernels,
                                               int pad_hw) {
  const Tensor<T>& in = value(input);
  const Tensor<T>& w = value(kernels);
  expect(in.rank() == 5, "conv3d_to_2d: input must be [N,C,D,H,W]");
  expect(w.rank() == 5, "conv3d_to_2d: kernels must be [K,C,kd,kh,kw]");
  expect(w.shape[1] == in.shape[1], "conv3d_to_2d: channel mismatch");
  expect(w.shape[2] == in.shape[2],
         "conv3d_to_2d: kernel depth must equal input depth");

  const NodeId full = conv3d(input, kernels, Stride3{1, 1, 1},
                             Pad3{0, pad_hw, pad_hw});
  // output depth is 1 by construction; squeeze it
  const Tensor<T>& ov = value(full);
  std::vector<int64_t> shape = {ov.shape[0], ov.shape[1], ov.shape[3],
                                ov.shape[4]};
  return reshape_node(full, std::move(shape));
}

template <class T>
typename Tape<T>::NodeId Tape<T>::conv2d(NodeId input, NodeId kernels,
                                         int stride, int pad) {
  // appending nodes may reallocate the node vector, so copy the shapes out
  const std::vector<int64_t> in_shape = value(input).shape;
  const std::vector<int64_t> w_shape = value(kernels).shape;
  expect(in_shape.size() == 4, "conv2d: input must be [N,C,H,W]");
  expect(w_shape.size() == 4, "conv2d: kernels must be [K,C,kh,kw]");
  expect(w_shape[1] == in_shape[1], "conv2d: channel mismatch");

  const NodeId in5 = reshape_node(
      input, {in_shape[0], in_shape[1], 1, in_shape[2], in_shape[3]});
  const NodeId w5 = reshape_node(
      kernels, {w_shape[0], w_shape[1], 1, w_shape[2], w_shape[3]});
  const NodeId out5 =
      conv3d(in5, w5, Stride3{1, stride, stride}, Pad3{0, pad, pad});
  const Tensor<T>& ov = value(out5);
  return reshape_node(out5,
                      {ov.shape[0], ov.shape[1], ov.shape[3], ov.shape[4]});
}

// ---------------------------------------------------------------------------
// pointwise and structural ops
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::NodeId Tape<T>::reshape_node(NodeId input,
                                               std::vector<int64_t> shape) {
  const Tensor<T>& in = value(input);
  expect(Tensor<T>::numel_of(shape) == in.numel(), "reshape: element count");
  Tensor<T> out(std::move(shape), in.data);
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, id](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    Tensor<T>& gin = t.grad_buf(input);
    for (int64_t i = 0; i < g.numel(); ++i) gin.data[i] += g.data[i];
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::maxpool2x2(NodeId input) {
  const Tensor<T>& in = value(input);
  expect(in.rank() == 4, "maxpool2x2: input must be [N,C,H,W]");
  const int64_t n = in.shape[0], c = in.shape[1], h = in.shape[2],
                w = in.shape[3];
  expect(h >= 2 && w >= 2, "maxpool2x2: spatial dims must be >= 2");
  const int64_t oh = h / 2, ow = w / 2;

  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.numel());
  const T* src = in.ptr();
  T* dst = out.ptr();
  int64_t o = 0;
  for (int64_t i = 0; i < n * c; ++i) {
    const T* plane = src + i * h * w;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        // first maximum wins (strict > comparisons)
        int64_t best = (2 * y) * w + 2 * x;
        T bv = plane[best];
        const int64_t cand[3] = {(2 * y) * w + 2 * x + 1,
                                 (2 * y + 1) * w + 2 * x,
                                 (2 * y + 1) * w + 2 * x + 1};
        for (int64_t idx : cand) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        dst[o] = bv;
        (*argmax)[o] = i * h * w + best;
        ++o;
      }
    }
  }

  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, id, argmax](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    Tensor<T>& gin = t.grad_buf(input);
    for (int64_t i = 0; i < g.numel(); ++i) {
      gin.data[(*argmax)[i]] += g.data[i];
    }
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::relu(NodeId input) {
  const Tensor<T>& in = value(input);
  Tensor<T> out(in.shape);
  for (int64_t i = 0; i < in.numel(); ++i) {
    out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
  }
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, id](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    const Tensor<T>& x = t.value(input);
    Tensor<T>& gin = t.grad_buf(input);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (x.data[i] > T(0)) gin.data[i] += g.data[i];
    }
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::flatten(NodeId input) {
  const Tensor<T>& in = value(input);
  expect(in.rank() >= 2, "flatten: rank must be >= 2");
  return reshape_node(input, {in.shape[0], in.numel() / in.shape[0]});
}

template <class T>
typename Tape<T>::NodeId Tape<T>::fully_connected(NodeId input, NodeId weights,
                                                  NodeId bias) {
  const Tensor<T>& in = value(input);
  const Tensor<T>& w = value(weights);
  const Tensor<T>& b = value(bias);
  expect(in.rank() == 2, "fully_connected: input must be [N,I]");
  expect(w.rank() == 2 && w.shape[1] == in.shape[1],
         "fully_connected: weights must be [O,I]");
  expect(b.rank() == 1 && b.shape[0] == w.shape[0],
         "fully_connected: bias must be [O]");
  const int64_t n = in.shape[0], icnt = in.shape[1], ocnt = w.shape[0];

  Tensor<T> out({n, ocnt});
  for (int64_t r = 0; r < n; ++r) {
    const T* xr = in.ptr() + r * icnt;
    for (int64_t o = 0; o < ocnt; ++o) {
      const T* wr = w.ptr() + o * icnt;
      T acc = b.data[o];
      for (int64_t i = 0; i < icnt; ++i) acc += xr[i] * wr[i];
      out.data[r * ocnt + o] = acc;
    }
  }

  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, weights, bias, id, n, icnt, ocnt](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    const Tensor<T>& x = t.value(input);
    const Tensor<T>& wv = t.value(weights);
    Tensor<T>& gin = t.grad_buf(input);
    Tensor<T>& gw = t.grad_buf(weights);
    Tensor<T>& gb = t.grad_buf(bias);
    for (int64_t r = 0; r < n; ++r) {
      const T* gr = g.ptr() + r * ocnt;
      const T* xr = x.ptr() + r * icnt;
      T* gxr = gin.ptr() + r * icnt;
      for (int64_t o = 0; o < ocnt; ++o) {
        const T go = gr[o];
        const T* wr = wv.ptr() + o * icnt;
        T* gwr = gw.ptr() + o * icnt;
        for (int64_t i = 0; i < icnt; ++i) {
          gxr[i] += go * wr[i];
          gwr[i] += go * xr[i];
        }
        gb.data[o] += go;
      }
    }
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::softmax(NodeId input) {
  const Tensor<T>& in = value(input);
  expect(in.rank() == 2, "softmax: input must be [N,C]");
  const int64_t n = in.shape[0], c = in.shape[1];

  Tensor<T> out(in.shape);
  for (int64_t r = 0; r < n; ++r) {
    const T* xr = in.ptr() + r * c;
    T* sr = out.ptr() + r * c;
    T mx = xr[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      sr[j] = std::exp(xr[j] - mx);
      sum += sr[j];
    }
    for (int64_t j = 0; j < c; ++j) sr[j] /= sum;
  }

  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, id, n, c](Tape& t) {
    const Tensor<T>& g = t.nodes_[id].grad;
    const Tensor<T>& s = t.value(id);
    Tensor<T>& gin = t.grad_buf(input);
    for (int64_t r = 0; r < n; ++r) {
      const T* gr = g.ptr() + r * c;
      const T* sr = s.ptr() + r * c;
      T dot = T(0);
      for (int64_t j = 0; j < c; ++j) dot += gr[j] * sr[j];
      T* gi = gin.ptr() + r * c;
      for (int64_t j = 0; j < c; ++j) gi[j] += sr[j] * (gr[j] - dot);
    }
  };
  return id;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::NodeId Tape<T>::weighted_sum(NodeId input,
                                               const Tensor<T>& weights) {
  const Tensor<T>& in = value(input);
  expect(weights.numel() == in.numel(), "weighted_sum: size mismatch");
  T acc = T(0);
  for (int64_t i = 0; i < in.numel(); ++i) acc += weights.data[i] * in.data[i];
  Tensor<T> out({1});
  out.data[0] = acc;
  auto w = std::make_shared<Tensor<T>>(weights);
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [input, id, w](Tape& t) {
    const T g = t.nodes_[id].grad.data[0];
    Tensor<T>& gin = t.grad_buf(input);
    for (int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += g * w->data[i];
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::l2_translation_loss(NodeId pred,
                                                      const Tensor<T>& labels) {
  const Tensor<T>& p = value(pred);
  expect(p.rank() == 2 && p.shape[1] == 2,
         "l2_translation_loss: predictions must be [N,2]");
  expect(labels.shape == p.shape, "l2_translation_loss: label shape mismatch");
  const int64_t n = p.shape[0];

  T acc = T(0);
  for (int64_t i = 0; i < p.numel(); ++i) {
    const T d = p.data[i] - labels.data[i];
    acc += d * d;
  }
  Tensor<T> out({1});
  out.data[0] = acc / (T(2) * T(n));

  auto lab = std::make_shared<Tensor<T>>(labels);
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [pred, id, lab, n](Tape& t) {
    const T g = t.nodes_[id].grad.data[0];
    const Tensor<T>& pv = t.value(pred);
    Tensor<T>& gin = t.grad_buf(pred);
    for (int64_t i = 0; i < pv.numel(); ++i) {
      gin.data[i] += g * (pv.data[i] - lab->data[i]) / T(n);
    }
  };
  return id;
}

template <class T>
typename Tape<T>::NodeId Tape<T>::cross_entropy_loss(
    NodeId logits, const std::vector<int>& labels) {
  const Tensor<T>& z = value(logits);
  expect(z.rank() == 2, "cross_entropy_loss: logits must be [N,C]");
  const int64_t n = z.shape[0], c = z.shape[1];
  expect(static_cast<int64_t>(labels.size()) == n,
         "cross_entropy_loss: label count mismatch");
  for (int lbl : labels) {
    expect(lbl >= 0 && lbl < c, "cross_entropy_loss: label out of range");
  }

  // log-sum-exp with max subtraction; loss_i = lse_i - z[i, label_i]
  T total = T(0);
  for (int64_t r = 0; r < n; ++r) {
    const T* zr = z.ptr() + r * c;
    T mx = zr[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) sum += std::exp(zr[j] - mx);
    total += (mx + std::log(sum)) - zr[labels[r]];
  }
  Tensor<T> out({1});
  out.data[0] = total / T(n);

  auto lab = std::make_shared<std::vector<int>>(labels);
  const NodeId id = add_node(std::move(out));
  nodes_[id].back = [logits, id, lab, n, c](Tape& t) {
    const T g = t.nodes_[id].grad.data[0];
    const Tensor<T>& zv = t.value(logits);
    Tensor<T>& gin = t.grad_buf(logits);
    for (int64_t r = 0; r < n; ++r) {
      const T* zr = zv.ptr() + r * c;
      T mx = zr[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
      T sum = T(0);
      for (int64_t j = 0; j < c; ++j) sum += std::exp(zr[j] - mx);
      T* gi = gin.ptr() + r * c;
      for (int64_t j = 0; j < c; ++j) {
        T p = std::exp(zr[j] - mx) / sum;
        if (j == (*lab)[r]) p -= T(1);
        gi[j] += g * p / T(n);
      }
    }
  };
  return id;
}

template <class T>
void Tape<T>::backward(NodeId loss) {
  expect(nodes_[loss].value.numel() == 1, "backward: loss must be scalar");
  Tensor<T>& g = grad_buf(loss);
  g.data[0] = T(1);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && !n.grad.empty()) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class T>
void AdamState<T>::init(const std::vector<Tensor<T>*>& params) {
  m.clear();
  v.clear();
  for (const Tensor<T>* p : params) {
    m.emplace_back(p->shape);
    v.emplace_back(p->shape);
  }
  step = 0;
}

template <class T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter list mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& p = *params[pi];
    const Tensor<T>& g = *grads[pi];
    if (g.shape != p.shape) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    Tensor<T>& mm = state.m[pi];
    Tensor<T>& vv = state.v[pi];
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = double(g.data[i]);
      const double mi = state.beta1 * double(mm.data[i]) + (1.0 - state.beta1) * gi;
      const double vi =
          state.beta2 * double(vv.data[i]) + (1.0 - state.beta2) * gi * gi;
      mm.data[i] = T(mi);
      vv.data[i] = T(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.data[i] = T(double(p.data[i]) -
                    state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(const std::vector<Tensor<float>*>&,
                               const std::vector<const Tensor<float>*>&,
                               AdamState<float>&);
template void adam_step<double>(const std::vector<Tensor<double>*>&,
                                const std::vector<const Tensor<double>*>&,
                                AdamState<double>&);

}  // namespace voxpose

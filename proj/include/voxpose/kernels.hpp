#pragma once

#include <cstdint>
#include <stdexcept>

namespace voxpose::kernels {

// Dense 3D cross-correlation over batched C-major tensors.
// Input [N,C,D,H,W], kernels [K,C,kd,kh,kw], output [N,K,OD,OH,OW].
// 2D convolutions reuse the same kernels with D = kd = 1.
//
// Every variant exists in a serial and an OpenMP flavour. The parallel
// flavour splits work over whole output (or gradient) elements and keeps the
// per-element accumulation order identical to the serial loop, so the two
// produce bit-identical results.
struct ConvDims {
  int64_t n, c, d, h, w;     // input
  int64_t k, kd, kh, kw;     // kernel (c is shared with input)
  int64_t sd, sh, sw;        // stride
  int64_t pd, ph, pw;        // zero padding
  int64_t od, oh, ow;        // output (derived)
};

ConvDims conv_dims(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w,
                   int64_t k, int64_t kd, int64_t kh, int64_t kw, int64_t sd,
                   int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw);

template <class T>
void conv_forward(const T* in, const T* weights, T* out, const ConvDims& dm,
                  bool parallel);

// Accumulates (+=) into grad_in / grad_weights; callers zero-init.
template <class T>
void conv_backward_input(const T* grad_out, const T* weights, T* grad_in,
                         const ConvDims& dm, bool parallel);
template <class T>
void conv_backward_weights(const T* grad_out, const T* in, T* grad_weights,
                           const ConvDims& dm, bool parallel);

}  // namespace voxpose::kernels

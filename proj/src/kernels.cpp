#include "voxpose/kernels.hpp"

#include <string>

namespace voxpose::kernels {

namespace {

inline int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline int64_t ceil_div(int64_t a, int64_t b) { return floor_div(a + b - 1, b); }

}  // namespace

ConvDims conv_dims(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w,
                   int64_t k, int64_t kd, int64_t kh, int64_t kw, int64_t sd,
                   int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw) {
  ConvDims dm{n, c, d, h, w, k, kd, kh, kw, sd, sh, sw, pd, ph, pw, 0, 0, 0};
  if (n < 1 || c < 1 || d < 1 || h < 1 || w < 1 || k < 1) {
    throw std::invalid_argument("conv: empty tensor");
  }
  if (kd < 1 || kh < 1 || kw < 1 || sd < 1 || sh < 1 || sw < 1 || pd < 0 ||
      ph < 0 || pw < 0) {
    throw std::invalid_argument("conv: bad kernel/stride/padding");
  }
  if (kd > d + 2 * pd || kh > h + 2 * ph || kw > w + 2 * pw) {
    throw std::invalid_argument("conv: kernel larger than padded input");
  }
  dm.od = (d + 2 * pd - kd) / sd + 1;
  dm.oh = (h + 2 * ph - kh) / sh + 1;
  dm.ow = (w + 2 * pw - kw) / sw + 1;
  return dm;
}

template <class T>
void conv_forward(const T* in, const T* weights, T* out, const ConvDims& dm,
                  bool parallel) {
  const int64_t rows = dm.n * dm.k * dm.od * dm.oh;
#pragma omp parallel for schedule(static) if (parallel)
  for (int64_t row = 0; row < rows; ++row) {
    int64_t rest = row;
    const int64_t oh = rest % dm.oh;
    rest /= dm.oh;
    const int64_t od = rest % dm.od;
    rest /= dm.od;
    const int64_t k = rest % dm.k;
    const int64_t n = rest / dm.k;

    T* out_row = out + ((n * dm.k + k) * dm.od + od) * dm.oh * dm.ow + oh * dm.ow;
    for (int64_t ow = 0; ow < dm.ow; ++ow) out_row[ow] = T(0);

    const int64_t z_lo = std::max<int64_t>(0, dm.pd - od * dm.sd);
    const int64_t z_hi = std::min(dm.kd, dm.d + dm.pd - od * dm.sd);
    const int64_t y_lo = std::max<int64_t>(0, dm.ph - oh * dm.sh);
    const int64_t y_hi = std::min(dm.kh, dm.h + dm.ph - oh * dm.sh);

    for (int64_t c = 0; c < dm.c; ++c) {
      for (int64_t z = z_lo; z < z_hi; ++z) {
        const int64_t id = od * dm.sd - dm.pd + z;
        for (int64_t y = y_lo; y < y_hi; ++y) {
          const int64_t ih = oh * dm.sh - dm.ph + y;
          const T* in_row =
              in + (((n * dm.c + c) * dm.d + id) * dm.h + ih) * dm.w;
          const T* w_row =
              weights + (((k * dm.c + c) * dm.kd + z) * dm.kh + y) * dm.kw;
          for (int64_t x = 0; x < dm.kw; ++x) {
            const T wv = w_row[x];
            const int64_t lo = std::max<int64_t>(0, ceil_div(dm.pw - x, dm.sw));
            const int64_t hi = std::min(dm.ow - 1,
                                        floor_div(dm.w - 1 + dm.pw - x, dm.sw));
            const T* in_shift = in_row - dm.pw + x;
            for (int64_t ow = lo; ow <= hi; ++ow) {
              out_row[ow] += wv * in_shift[ow * dm.sw];
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv_backward_input(const T* grad_out, const T* weights, T* grad_in,
                         const ConvDims& dm, bool parallel) {
  const int64_t rows = dm.n * dm.c * dm.d * dm.h;
#pragma omp parallel for schedule(static) if (parallel)
  for (int64_t row = 0; row < rows; ++row) {
    int64_t rest = row;
    const int64_t ih = rest % dm.h;
    rest /= dm.h;
    const int64_t id = rest % dm.d;
    rest /= dm.d;
    const int64_t c = rest % dm.c;
    const int64_t n = rest / dm.c;

    T* gin_row = grad_in + (((n * dm.c + c) * dm.d + id) * dm.h + ih) * dm.w;

    for (int64_t k = 0; k < dm.k; ++k) {
      for (int64_t z = 0; z < dm.kd; ++z) {
        const int64_t num_d = id + dm.pd - z;
        if (num_d < 0 || num_d % dm.sd != 0) continue;
        const int64_t od = num_d / dm.sd;
        if (od >= dm.od) continue;
        for (int64_t y = 0; y < dm.kh; ++y) {
          const int64_t num_h = ih + dm.ph - y;
          if (num_h < 0 || num_h % dm.sh != 0) continue;
          const int64_t oh = num_h / dm.sh;
          if (oh >= dm.oh) continue;
          const T* g_row = grad_out +
                           (((n * dm.k + k) * dm.od + od) * dm.oh + oh) * dm.ow;
          const T* w_row =
              weights + (((k * dm.c + c) * dm.kd + z) * dm.kh + y) * dm.kw;
          for (int64_t x = 0; x < dm.kw; ++x) {
            const T wv = w_row[x];
            const int64_t lo = std::max<int64_t>(0, ceil_div(dm.pw - x, dm.sw));
            const int64_t hi = std::min(dm.ow - 1,
                                        floor_div(dm.w - 1 + dm.pw - x, dm.sw));
            // iw = ow*sw - pw + x for ow in [lo, hi]
            T* gin_shift = gin_row - dm.pw + x;
            for (int64_t ow = lo; ow <= hi; ++ow) {
              gin_shift[ow * dm.sw] += wv * g_row[ow];
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv_backward_weights(const T* grad_out, const T* in, T* grad_weights,
                           const ConvDims& dm, bool parallel) {
  const int64_t rows = dm.k * dm.c * dm.kd * dm.kh;
#pragma omp parallel for schedule(static) if (parallel)
  for (int64_t row = 0; row < rows; ++row) {
    int64_t rest = row;
    const int64_t y = rest % dm.kh;
    rest /= dm.kh;
    const int64_t z = rest % dm.kd;
    rest /= dm.kd;
    const int64_t c = rest % dm.c;
    const int64_t k = rest / dm.c;

    T* gw_row =
        grad_weights + (((k * dm.c + c) * dm.kd + z) * dm.kh + y) * dm.kw;

    for (int64_t x = 0; x < dm.kw; ++x) {
      T acc = T(0);
      for (int64_t n = 0; n < dm.n; ++n) {
        for (int64_t od = 0; od < dm.od; ++od) {
          const int64_t id = od * dm.sd - dm.pd + z;
          if (id < 0 || id >= dm.d) continue;
          for (int64_t oh = 0; oh < dm.oh; ++oh) {
            const int64_t ih = oh * dm.sh - dm.ph + y;
            if (ih < 0 || ih >= dm.h) continue;
            const T* g_row = grad_out +
                             (((n * dm.k + k) * dm.od + od) * dm.oh + oh) * dm.ow;
            const T* in_row =
                in + (((n * dm.c + c) * dm.d + id) * dm.h + ih) * dm.w;
            const int64_t lo = std::max<int64_t>(0, ceil_div(dm.pw - x, dm.sw));
            const int64_t hi = std::min(dm.ow - 1,
                                        floor_div(dm.w - 1 + dm.pw - x, dm.sw));
            const T* in_shift = in_row - dm.pw + x;
            for (int64_t ow = lo; ow <= hi; ++ow) {
              acc += g_row[ow] * in_shift[ow * dm.sw];
            }
          }
        }
      }
      gw_row[x] += acc;
    }
  }
}

template void conv_forward<float>(const float*, const float*, float*,
                                  const ConvDims&, bool);
template void conv_forward<double>(const double*, const double*, double*,
                                   const ConvDims&, bool);
template void conv_backward_input<float>(const float*, const float*, float*,
                                         const ConvDims&, bool);
template void conv_backward_input<double>(const double*, const double*, double*,
                                          const ConvDims&, bool);
template void conv_backward_weights<float>(const float*, const float*, float*,
                                           const ConvDims&, bool);
template void conv_backward_weights<double>(const double*, const double*,
                                            double*, const ConvDims&, bool);

}  // namespace voxpose::kernels

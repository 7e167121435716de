#include "fer/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

// Both kernel variants share the per-element accumulation helpers below, so
// a parallel run distributes elements across threads without changing any
// element's summation order. That keeps serial and parallel output
// bit-identical, which the tests pin.

#ifdef _OPENMP
#define FER_OMP_FOR _Pragma("omp parallel for schedule(static)")
#define FER_OMP_FOR2 _Pragma("omp parallel for collapse(2) schedule(static)")
#else
#define FER_OMP_FOR
#define FER_OMP_FOR2
#endif

namespace fer::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// One output element of the replicate-padded 3x3 convolution.
inline double conv_cell(const double* in, int ic, int h, int w, const double* weights, int oc_idx,
                        int y, int x) {
  double acc = 0.0;
  const double* wk = weights + static_cast<std::size_t>(oc_idx) * ic * 9;
  for (int c = 0; c < ic; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * h * w;
    const double* k = wk + static_cast<std::size_t>(c) * 9;
    for (int dy = -1; dy <= 1; ++dy) {
      const int sy = clampi(y + dy, 0, h - 1);
      for (int dx = -1; dx <= 1; ++dx) {
        const int sx = clampi(x + dx, 0, w - 1);
        acc += plane[static_cast<std::size_t>(sy) * w + sx] * k[(dy + 1) * 3 + (dx + 1)];
      }
    }
  }
  return acc;
}

// Gradient gathered back onto one input element. Replicate padding can map
// several taps of a border output onto the same input pixel, so every output
// in the 3x3 neighborhood is scanned against every kernel offset.
inline double conv_input_grad_cell(const double* dout, int oc, int h, int w, const double* weights,
                                   int ic, int c_idx, int y, int x) {
  double acc = 0.0;
  for (int oy = y - 1; oy <= y + 1; ++oy) {
    if (oy < 0 || oy >= h) continue;
    for (int ox = x - 1; ox <= x + 1; ++ox) {
      if (ox < 0 || ox >= w) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        if (clampi(oy + dy, 0, h - 1) != y) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          if (clampi(ox + dx, 0, w - 1) != x) continue;
          for (int o = 0; o < oc; ++o) {
            acc += dout[(static_cast<std::size_t>(o) * h + oy) * w + ox] *
                   weights[((static_cast<std::size_t>(o) * ic + c_idx) * 3 + dy + 1) * 3 + dx + 1];
          }
        }
      }
    }
  }
  return acc;
}

inline double conv_weight_grad_cell(const double* in, const double* dout, int n, int ic, int oc,
                                    int h, int w, int o, int c, int dy, int dx) {
  double acc = 0.0;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    const double* dplane = dout + (static_cast<std::size_t>(s) * oc + o) * plane;
    const double* iplane = in + (static_cast<std::size_t>(s) * ic + c) * plane;
    for (int oy = 0; oy < h; ++oy) {
      const int sy = clampi(oy + dy, 0, h - 1);
      for (int ox = 0; ox < w; ++ox) {
        const int sx = clampi(ox + dx, 0, w - 1);
        acc += dplane[static_cast<std::size_t>(oy) * w + ox] * iplane[static_cast<std::size_t>(sy) * w + sx];
      }
    }
  }
  return acc;
}

inline double pool_cell(const double* plane, int h, int w, int py, int px) {
  const int y0 = py * 2, x0 = px * 2;
  const int y1 = y0 + 1 < h ? y0 + 1 : y0;
  const int x1 = x0 + 1 < w ? x0 + 1 : x0;
  double acc = plane[static_cast<std::size_t>(y0) * w + x0];
  int count = 1;
  if (x1 != x0) { acc += plane[static_cast<std::size_t>(y0) * w + x1]; ++count; }
  if (y1 != y0) { acc += plane[static_cast<std::size_t>(y1) * w + x0]; ++count; }
  if (x1 != x0 && y1 != y0) { acc += plane[static_cast<std::size_t>(y1) * w + x1]; ++count; }
  return acc / count;
}

inline int pool_window_count(int h, int w, int py, int px) {
  const int wy = (py * 2 + 1 < h) ? 2 : 1;
  const int wx = (px * 2 + 1 < w) ? 2 : 1;
  return wy * wx;
}

inline double sobel_cell(const double* in, int h, int w, int y, int x) {
  // gx = [[-1,0,1],[-2,0,2],[-1,0,1]], gy = transpose; correlation, replicate pad
  double gx = 0.0, gy = 0.0;
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  for (int dy = -1; dy <= 1; ++dy) {
    const int sy = clampi(y + dy, 0, h - 1);
    for (int dx = -1; dx <= 1; ++dx) {
      const int sx = clampi(x + dx, 0, w - 1);
      const double v = in[static_cast<std::size_t>(sy) * w + sx];
      gx += v * kx[dy + 1][dx + 1];
      gy += v * kx[dx + 1][dy + 1];
    }
  }
  return std::sqrt(gx * gx + gy * gy);
}

}  // namespace

void set_backend(Backend backend) { g_backend.store(backend); }
Backend backend() { return g_backend.load(); }

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------
namespace serial {

void conv3x3_forward(const double* in, int n, int ic, int h, int w, const double* weights,
                     const double* bias, int oc, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < oc; ++o) {
      const double* sample = in + static_cast<std::size_t>(s) * ic * plane;
      double* dst = out + (static_cast<std::size_t>(s) * oc + o) * plane;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[static_cast<std::size_t>(y) * w + x] = conv_cell(sample, ic, h, w, weights, o, y, x) + bias[o];
    }
  }
}

void conv3x3_backward_input(const double* dout, int n, int oc, int h, int w, const double* weights,
                            int ic, double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < ic; ++c) {
      const double* dsample = dout + static_cast<std::size_t>(s) * oc * plane;
      double* dst = din + (static_cast<std::size_t>(s) * ic + c) * plane;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[static_cast<std::size_t>(y) * w + x] =
              conv_input_grad_cell(dsample, oc, h, w, weights, ic, c, y, x);
    }
  }
}

void conv3x3_backward_params(const double* in, const double* dout, int n, int ic, int oc, int h,
                             int w, double* dweights, double* dbias) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < oc; ++o) {
    for (int c = 0; c < ic; ++c)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          dweights[((static_cast<std::size_t>(o) * ic + c) * 3 + dy + 1) * 3 + dx + 1] =
              conv_weight_grad_cell(in, dout, n, ic, oc, h, w, o, c, dy, dx);
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      const double* dplane = dout + (static_cast<std::size_t>(s) * oc + o) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += dplane[i];
    }
    dbias[o] = acc;
  }
}

void relu_forward(const double* in, std::size_t len, double* out) {
  for (std::size_t i = 0; i < len; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const double* pre, const double* dout, std::size_t len, double* din) {
  for (std::size_t i = 0; i < len; ++i) din[i] = pre[i] > 0.0 ? dout[i] : 0.0;
}

void avgpool2_forward(const double* in, int n, int c, int h, int w, double* out) {
  const int oh = pooled_dim(h), ow = pooled_dim(w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  for (int p = 0; p < n * c; ++p) {
    const double* src = in + static_cast<std::size_t>(p) * plane;
    double* dst = out + static_cast<std::size_t>(p) * oplane;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) dst[static_cast<std::size_t>(y) * ow + x] = pool_cell(src, h, w, y, x);
  }
}

void avgpool2_backward(const double* dout, int n, int c, int h, int w, double* din) {
  const int ow = pooled_dim(w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(pooled_dim(h)) * ow;
  for (int p = 0; p < n * c; ++p) {
    const double* src = dout + static_cast<std::size_t>(p) * oplane;
    double* dst = din + static_cast<std::size_t>(p) * plane;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<std::size_t>(y) * w + x] =
            src[static_cast<std::size_t>(y / 2) * ow + x / 2] / pool_window_count(h, w, y / 2, x / 2);
  }
}

void global_avgpool_forward(const double* in, int n, int c, int h, int w, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int p = 0; p < n * c; ++p) {
    const double* src = in + static_cast<std::size_t>(p) * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[p] = acc / static_cast<double>(plane);
  }
}

void global_avgpool_backward(const double* dout, int n, int c, int h, int w, double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int p = 0; p < n * c; ++p) {
    const double g = dout[p] / static_cast<double>(plane);
    double* dst = din + static_cast<std::size_t>(p) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
  }
}

void dense_forward(const double* in, int n, int d, const double* weights, const double* bias,
                   int k, double* out) {
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < k; ++j) {
      double acc = bias[j];
      for (int i = 0; i < d; ++i) acc += in[static_cast<std::size_t>(s) * d + i] * weights[static_cast<std::size_t>(i) * k + j];
      out[static_cast<std::size_t>(s) * k + j] = acc;
    }
  }
}

void dense_backward(const double* in, const double* dout, int n, int d, int k,
                    const double* weights, double* din, double* dweights, double* dbias) {
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += weights[static_cast<std::size_t>(i) * k + j] * dout[static_cast<std::size_t>(s) * k + j];
      din[static_cast<std::size_t>(s) * d + i] = acc;
    }
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s) acc += in[static_cast<std::size_t>(s) * d + i] * dout[static_cast<std::size_t>(s) * k + j];
      dweights[static_cast<std::size_t>(i) * k + j] = acc;
    }
  }
  for (int j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int s = 0; s < n; ++s) acc += dout[static_cast<std::size_t>(s) * k + j];
    dbias[j] = acc;
  }
}

void sobel_magnitude(const double* in, int h, int w, double* out) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = sobel_cell(in, h, w, y, x);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP variants: same element helpers, elements distributed across threads.
// ---------------------------------------------------------------------------
namespace par {

void conv3x3_forward(const double* in, int n, int ic, int h, int w, const double* weights,
                     const double* bias, int oc, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  FER_OMP_FOR2
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < oc; ++o) {
      const double* sample = in + static_cast<std::size_t>(s) * ic * plane;
      double* dst = out + (static_cast<std::size_t>(s) * oc + o) * plane;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[static_cast<std::size_t>(y) * w + x] = conv_cell(sample, ic, h, w, weights, o, y, x) + bias[o];
    }
  }
}

void conv3x3_backward_input(const double* dout, int n, int oc, int h, int w, const double* weights,
                            int ic, double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  FER_OMP_FOR2
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < ic; ++c) {
      const double* dsample = dout + static_cast<std::size_t>(s) * oc * plane;
      double* dst = din + (static_cast<std::size_t>(s) * ic + c) * plane;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[static_cast<std::size_t>(y) * w + x] =
              conv_input_grad_cell(dsample, oc, h, w, weights, ic, c, y, x);
    }
  }
}

void conv3x3_backward_params(const double* in, const double* dout, int n, int ic, int oc, int h,
                             int w, double* dweights, double* dbias) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  FER_OMP_FOR2
  for (int o = 0; o < oc; ++o) {
    for (int c = 0; c < ic; ++c) {
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          dweights[((static_cast<std::size_t>(o) * ic + c) * 3 + dy + 1) * 3 + dx + 1] =
              conv_weight_grad_cell(in, dout, n, ic, oc, h, w, o, c, dy, dx);
    }
  }
  FER_OMP_FOR
  for (int o = 0; o < oc; ++o) {
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      const double* dplane = dout + (static_cast<std::size_t>(s) * oc + o) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += dplane[i];
    }
    dbias[o] = acc;
  }
}

void relu_forward(const double* in, std::size_t len, double* out) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
  FER_OMP_FOR
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const double* pre, const double* dout, std::size_t len, double* din) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
  FER_OMP_FOR
  for (std::ptrdiff_t i = 0; i < n; ++i) din[i] = pre[i] > 0.0 ? dout[i] : 0.0;
}

void avgpool2_forward(const double* in, int n, int c, int h, int w, double* out) {
  const int oh = pooled_dim(h), ow = pooled_dim(w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  FER_OMP_FOR
  for (int p = 0; p < n * c; ++p) {
    const double* src = in + static_cast<std::size_t>(p) * plane;
    double* dst = out + static_cast<std::size_t>(p) * oplane;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) dst[static_cast<std::size_t>(y) * ow + x] = pool_cell(src, h, w, y, x);
  }
}

void avgpool2_backward(const double* dout, int n, int c, int h, int w, double* din) {
  const int ow = pooled_dim(w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(pooled_dim(h)) * ow;
  FER_OMP_FOR
  for (int p = 0; p < n * c; ++p) {
    const double* src = dout + static_cast<std::size_t>(p) * oplane;
    double* dst = din + static_cast<std::size_t>(p) * plane;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<std::size_t>(y) * w + x] =
            src[static_cast<std::size_t>(y / 2) * ow + x / 2] / pool_window_count(h, w, y / 2, x / 2);
  }
}

void global_avgpool_forward(const double* in, int n, int c, int h, int w, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  FER_OMP_FOR
  for (int p = 0; p < n * c; ++p) {
    const double* src = in + static_cast<std::size_t>(p) * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[p] = acc / static_cast<double>(plane);
  }
}

void global_avgpool_backward(const double* dout, int n, int c, int h, int w, double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  FER_OMP_FOR
  for (int p = 0; p < n * c; ++p) {
    const double g = dout[p] / static_cast<double>(plane);
    double* dst = din + static_cast<std::size_t>(p) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
  }
}

void dense_forward(const double* in, int n, int d, const double* weights, const double* bias,
                   int k, double* out) {
  FER_OMP_FOR
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < k; ++j) {
      double acc = bias[j];
      for (int i = 0; i < d; ++i) acc += in[static_cast<std::size_t>(s) * d + i] * weights[static_cast<std::size_t>(i) * k + j];
      out[static_cast<std::size_t>(s) * k + j] = acc;
    }
  }
}

void dense_backward(const double* in, const double* dout, int n, int d, int k,
                    const double* weights, double* din, double* dweights, double* dbias) {
  FER_OMP_FOR
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += weights[static_cast<std::size_t>(i) * k + j] * dout[static_cast<std::size_t>(s) * k + j];
      din[static_cast<std::size_t>(s) * d + i] = acc;
    }
  }
  FER_OMP_FOR2
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s) acc += in[static_cast<std::size_t>(s) * d + i] * dout[static_cast<std::size_t>(s) * k + j];
      dweights[static_cast<std::size_t>(i) * k + j] = acc;
    }
  }
  FER_OMP_FOR
  for (int j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int s = 0; s < n; ++s) acc += dout[static_cast<std::size_t>(s) * k + j];
    dbias[j] = acc;
  }
}

void sobel_magnitude(const double* in, int h, int w, double* out) {
  FER_OMP_FOR
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = sobel_cell(in, h, w, y, x);
}

}  // namespace par

// ---------------------------------------------------------------------------
// Dispatch.
// ---------------------------------------------------------------------------

#define FER_DISPATCH(call) \
  if (backend() == Backend::Parallel) { par::call; } else { serial::call; }

void conv3x3_forward(const double* in, int n, int ic, int h, int w, const double* weights,
                     const double* bias, int oc, double* out) {
  FER_DISPATCH(conv3x3_forward(in, n, ic, h, w, weights, bias, oc, out))
}
void conv3x3_backward_input(const double* dout, int n, int oc, int h, int w, const double* weights,
                            int ic, double* din) {
  FER_DISPATCH(conv3x3_backward_input(dout, n, oc, h, w, weights, ic, din))
}
void conv3x3_backward_params(const double* in, const double* dout, int n, int ic, int oc, int h,
                             int w, double* dweights, double* dbias) {
  FER_DISPATCH(conv3x3_backward_params(in, dout, n, ic, oc, h, w, dweights, dbias))
}
void relu_forward(const double* in, std::size_t len, double* out) {
  FER_DISPATCH(relu_forward(in, len, out))
}
void relu_backward(const double* pre, const double* dout, std::size_t len, double* din) {
  FER_DISPATCH(relu_backward(pre, dout, len, din))
}
void avgpool2_forward(const double* in, int n, int c, int h, int w, double* out) {
  FER_DISPATCH(avgpool2_forward(in, n, c, h, w, out))
}
void avgpool2_backward(const double* dout, int n, int c, int h, int w, double* din) {
  FER_DISPATCH(avgpool2_backward(dout, n, c, h, w, din))
}
void global_avgpool_forward(const double* in, int n, int c, int h, int w, double* out) {
  FER_DISPATCH(global_avgpool_forward(in, n, c, h, w, out))
}
void global_avgpool_backward(const double* dout, int n, int c, int h, int w, double* din) {
  FER_DISPATCH(global_avgpool_backward(dout, n, c, h, w, din))
}
void dense_forward(const double* in, int n, int d, const double* weights, const double* bias,
                   int k, double* out) {
  FER_DISPATCH(dense_forward(in, n, d, weights, bias, k, out))
}
void dense_backward(const double* in, const double* dout, int n, int d, int k,
                    const double* weights, double* din, double* dweights, double* dbias) {
  FER_DISPATCH(dense_backward(in, dout, n, d, k, weights, din, dweights, dbias))
}
void sobel_magnitude(const double* in, int h, int w, double* out) {
  FER_DISPATCH(sobel_magnitude(in, h, w, out))
}

#undef FER_DISPATCH

}  // namespace fer::kernels

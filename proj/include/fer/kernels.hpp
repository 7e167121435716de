#pragma once

#include <cstddef>

// Dense numeric kernels behind the learner and the Sobel operator. Each
// kernel exists twice: a serial reference under kernels::serial and an
// OpenMP-parallel version under kernels::par. Both compute every output
// element with the same inner accumulation order, so their results are
// bit-identical; tests assert that and the learner stays deterministic
// regardless of thread count.
//
// Layouts: activations are (n, c, h, w) row-major; conv weights are
// (oc, ic, 3, 3); dense weights are (d, k) row-major.
namespace fer::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend backend);
Backend backend();
bool openmp_enabled();
int max_threads();

#define FER_DECLARE_KERNELS                                                               \
  /* 3x3 convolution, stride 1, replicate padding. out: (n, oc, h, w). */                 \
  void conv3x3_forward(const double* in, int n, int ic, int h, int w, const double* weights, \
                       const double* bias, int oc, double* out);                          \
  /* Gradient w.r.t. the conv input. din: (n, ic, h, w). */                               \
  void conv3x3_backward_input(const double* dout, int n, int oc, int h, int w,            \
                              const double* weights, int ic, double* din);                \
  /* Gradients w.r.t. conv weights and bias. */                                           \
  void conv3x3_backward_params(const double* in, const double* dout, int n, int ic, int oc, \
                               int h, int w, double* dweights, double* dbias);            \
  void relu_forward(const double* in, std::size_t len, double* out);                      \
  void relu_backward(const double* pre, const double* dout, std::size_t len, double* din); \
  /* 2x2 average pooling, stride 2, windows clipped at the borders.        */             \
  /* Output is ceil(h/2) x ceil(w/2); clipped windows average fewer taps.  */             \
  void avgpool2_forward(const double* in, int n, int c, int h, int w, double* out);       \
  void avgpool2_backward(const double* dout, int n, int c, int h, int w, double* din);    \
  void global_avgpool_forward(const double* in, int n, int c, int h, int w, double* out); \
  void global_avgpool_backward(const double* dout, int n, int c, int h, int w, double* din); \
  /* Dense head: out = in * weights + bias. in: (n, d), out: (n, k). */                   \
  void dense_forward(const double* in, int n, int d, const double* weights,               \
                     const double* bias, int k, double* out);                             \
  void dense_backward(const double* in, const double* dout, int n, int d, int k,          \
                      const double* weights, double* din, double* dweights, double* dbias); \
  /* Sobel magnitude map with replicate padding, one image. */                            \
  void sobel_magnitude(const double* in, int h, int w, double* out);

namespace serial {
FER_DECLARE_KERNELS
}
namespace par {
FER_DECLARE_KERNELS
}

// Dispatching entry points; route to serial:: or par:: per set_backend().
FER_DECLARE_KERNELS

#undef FER_DECLARE_KERNELS

inline int pooled_dim(int d) { return (d + 1) / 2; }

}  // namespace fer::kernels

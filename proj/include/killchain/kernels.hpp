#pragma once

#include <cstddef>

namespace killchain::kernels {

// Every kernel has a serial and an OpenMP variant. Both compute each output
// element with the same fixed accumulation order, so results are bitwise
// identical across backends and thread counts; the equivalence tests rely on
// this.
enum class Backend { kSerial, kParallel };

Backend default_backend();
void set_default_backend(Backend b);

// NHWC activations; weights laid out [kh][kw][in_c][out_c] so the innermost
// accumulator loop runs over contiguous output channels.
struct Conv2dDims {
  int batch = 0;
  int in_h = 0;
  int in_w = 0;
  int in_c = 0;
  int out_c = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(kernel) * kernel * in_c * out_c;
  }
};

void conv2d_forward(const float* in, const float* w, const float* bias, float* out,
                    const Conv2dDims& d, Backend b);
void conv2d_backward_input(const float* gout, const float* w, float* gin, const Conv2dDims& d,
                           Backend b);
void conv2d_backward_params(const float* gout, const float* in, float* gw, float* gb,
                            const Conv2dDims& d, Backend b);

// Dense layer: in [batch][in_dim], w [in_dim][out_dim], bias [out_dim].
void dense_forward(const float* in, const float* w, const float* bias, float* out, int batch,
                   int in_dim, int out_dim, Backend b);
void dense_backward_input(const float* gout, const float* w, float* gin, int batch, int in_dim,
                          int out_dim, Backend b);
void dense_backward_params(const float* gout, const float* in, float* gw, float* gb, int batch,
                           int in_dim, int out_dim, Backend b);

// 2x2 average pooling, stride 2; h and w must be even.
void avgpool2_forward(const float* in, float* out, int batch, int h, int w, int c, Backend b);
void avgpool2_backward(const float* gout, float* gin, int batch, int h, int w, int c, Backend b);

void tanh_forward(const float* in, float* out, std::size_t n, Backend b);
// gin = gout * (1 - out^2), where out is the cached tanh output.
void tanh_backward(const float* out, const float* gout, float* gin, std::size_t n, Backend b);

}  // namespace killchain::kernels

#include "killchain/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <vector>

namespace killchain::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::kParallel};

// Dispatches the outer loop; the body lambda owns one output slice per index,
// so no synchronization is needed and results do not depend on scheduling.
template <class F>
void for_range(long long n, Backend b, F&& body) {
  if (b == Backend::kParallel) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) body(i);
  } else {
    for (long long i = 0; i < n; ++i) body(i);
  }
}

}  // namespace

Backend default_backend() { return g_backend.load(); }
void set_default_backend(Backend b) { g_backend.store(b); }

void conv2d_forward(const float* in, const float* w, const float* bias, float* out,
                    const Conv2dDims& d, Backend b) {
  const int oh = d.out_h();
  const int ow = d.out_w();
  for_range(static_cast<long long>(d.batch) * oh, b, [&](long long row) {
    const int bi = static_cast<int>(row / oh);
    const int oy = static_cast<int>(row % oh);
    const float* in_b = in + static_cast<std::size_t>(bi) * d.in_h * d.in_w * d.in_c;
    float* out_row = out + ((static_cast<std::size_t>(bi) * oh + oy) * ow) * d.out_c;
    std::vector<float> acc(d.out_c);
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < d.out_c; ++co) acc[co] = bias[co];
      for (int ky = 0; ky < d.kernel; ++ky) {
        const int iy = oy * d.stride + ky - d.pad;
        if (iy < 0 || iy >= d.in_h) continue;
        for (int kx = 0; kx < d.kernel; ++kx) {
          const int ix = ox * d.stride + kx - d.pad;
          if (ix < 0 || ix >= d.in_w) continue;
          const float* in_px = in_b + (static_cast<std::size_t>(iy) * d.in_w + ix) * d.in_c;
          const float* w_px =
              w + (static_cast<std::size_t>(ky) * d.kernel + kx) * d.in_c * d.out_c;
          for (int ci = 0; ci < d.in_c; ++ci) {
            const float v = in_px[ci];
            const float* w_ci = w_px + static_cast<std::size_t>(ci) * d.out_c;
            for (int co = 0; co < d.out_c; ++co) acc[co] += v * w_ci[co];
          }
        }
      }
      for (int co = 0; co < d.out_c; ++co) out_row[ox * d.out_c + co] = acc[co];
    }
  });
}

void conv2d_backward_input(const float* gout, const float* w, float* gin, const Conv2dDims& d,
                           Backend b) {
  const int oh = d.out_h();
  const int ow = d.out_w();
  // Gather form: each input element sums its own contributions, in a fixed
  // (ky, kx, co) order.
  for_range(static_cast<long long>(d.batch) * d.in_h, b, [&](long long row) {
    const int bi = static_cast<int>(row / d.in_h);
    const int iy = static_cast<int>(row % d.in_h);
    const float* gout_b = gout + static_cast<std::size_t>(bi) * oh * ow * d.out_c;
    float* gin_row = gin + ((static_cast<std::size_t>(bi) * d.in_h + iy) * d.in_w) * d.in_c;
    for (int ix = 0; ix < d.in_w; ++ix) {
      for (int ci = 0; ci < d.in_c; ++ci) {
        float acc = 0.0f;
        for (int ky = 0; ky < d.kernel; ++ky) {
          const int oy_num = iy + d.pad - ky;
          if (oy_num < 0 || oy_num % d.stride != 0) continue;
          const int oy = oy_num / d.stride;
          if (oy >= oh) continue;
          for (int kx = 0; kx < d.kernel; ++kx) {
            const int ox_num = ix + d.pad - kx;
            if (ox_num < 0 || ox_num % d.stride != 0) continue;
            const int ox = ox_num / d.stride;
            if (ox >= ow) continue;
            const float* g_px = gout_b + (static_cast<std::size_t>(oy) * ow + ox) * d.out_c;
            const float* w_ci =
                w + ((static_cast<std::size_t>(ky) * d.kernel + kx) * d.in_c + ci) * d.out_c;
            for (int co = 0; co < d.out_c; ++co) acc += g_px[co] * w_ci[co];
          }
        }
        gin_row[ix * d.in_c + ci] = acc;
      }
    }
  });
}

void conv2d_backward_params(const float* gout, const float* in, float* gw, float* gb,
                            const Conv2dDims& d, Backend b) {
  const int oh = d.out_h();
  const int ow = d.out_w();
  // One task per (ky, kx, ci) slice; each owns a contiguous out_c stripe of gw.
  for_range(static_cast<long long>(d.kernel) * d.kernel * d.in_c, b, [&](long long idx) {
    const int ci = static_cast<int>(idx % d.in_c);
    const int kx = static_cast<int>((idx / d.in_c) % d.kernel);
    const int ky = static_cast<int>(idx / (static_cast<long long>(d.in_c) * d.kernel));
    float* gw_slice = gw + idx * d.out_c;
    for (int co = 0; co < d.out_c; ++co) gw_slice[co] = 0.0f;
    for (int bi = 0; bi < d.batch; ++bi) {
      const float* in_b = in + static_cast<std::size_t>(bi) * d.in_h * d.in_w * d.in_c;
      const float* gout_b = gout + static_cast<std::size_t>(bi) * oh * ow * d.out_c;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * d.stride + ky - d.pad;
        if (iy < 0 || iy >= d.in_h) continue;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * d.stride + kx - d.pad;
          if (ix < 0 || ix >= d.in_w) continue;
          const float v = in_b[(static_cast<std::size_t>(iy) * d.in_w + ix) * d.in_c + ci];
          const float* g_px = gout_b + (static_cast<std::size_t>(oy) * ow + ox) * d.out_c;
          for (int co = 0; co < d.out_c; ++co) gw_slice[co] += v * g_px[co];
        }
      }
    }
  });
  // Bias gradient: small, one pass per output channel.
  for_range(d.out_c, b, [&](long long co) {
    float acc = 0.0f;
    const std::size_t total = static_cast<std::size_t>(d.batch) * oh * ow;
    for (std::size_t i = 0; i < total; ++i) acc += gout[i * d.out_c + co];
    gb[co] = acc;
  });
}

void dense_forward(const float* in, const float* w, const float* bias, float* out, int batch,
                   int in_dim, int out_dim, Backend b) {
  for_range(batch, b, [&](long long bi) {
    const float* in_row = in + static_cast<std::size_t>(bi) * in_dim;
    float* out_row = out + static_cast<std::size_t>(bi) * out_dim;
    for (int m = 0; m < out_dim; ++m) out_row[m] = bias[m];
    for (int n = 0; n < in_dim; ++n) {
      const float v = in_row[n];
      const float* w_row = w + static_cast<std::size_t>(n) * out_dim;
      for (int m = 0; m < out_dim; ++m) out_row[m] += v * w_row[m];
    }
  });
}

void dense_backward_input(const float* gout, const float* w, float* gin, int batch, int in_dim,
                          int out_dim, Backend b) {
  for_range(static_cast<long long>(batch) * in_dim, b, [&](long long idx) {
    const int bi = static_cast<int>(idx / in_dim);
    const int n = static_cast<int>(idx % in_dim);
    const float* g_row = gout + static_cast<std::size_t>(bi) * out_dim;
    const float* w_row = w + static_cast<std::size_t>(n) * out_dim;
    float acc = 0.0f;
    for (int m = 0; m < out_dim; ++m) acc += g_row[m] * w_row[m];
    gin[idx] = acc;
  });
}

void dense_backward_params(const float* gout, const float* in, float* gw, float* gb, int batch,
                           int in_dim, int out_dim, Backend b) {
  for_range(in_dim, b, [&](long long n) {
    float* gw_row = gw + static_cast<std::size_t>(n) * out_dim;
    for (int m = 0; m < out_dim; ++m) gw_row[m] = 0.0f;
    for (int bi = 0; bi < batch; ++bi) {
      const float v = in[static_cast<std::size_t>(bi) * in_dim + n];
      const float* g_row = gout + static_cast<std::size_t>(bi) * out_dim;
      for (int m = 0; m < out_dim; ++m) gw_row[m] += v * g_row[m];
    }
  });
  for_range(out_dim, b, [&](long long m) {
    float acc = 0.0f;
    for (int bi = 0; bi < batch; ++bi) acc += gout[static_cast<std::size_t>(bi) * out_dim + m];
    gb[m] = acc;
  });
}

void avgpool2_forward(const float* in, float* out, int batch, int h, int w, int c, Backend b) {
  assert(h % 2 == 0 && w % 2 == 0);
  const int oh = h / 2;
  const int ow = w / 2;
  for_range(static_cast<long long>(batch) * oh, b, [&](long long row) {
    const int bi = static_cast<int>(row / oh);
    const int oy = static_cast<int>(row % oh);
    const float* in_b = in + static_cast<std::size_t>(bi) * h * w * c;
    float* out_row = out + ((static_cast<std::size_t>(bi) * oh + oy) * ow) * c;
    for (int ox = 0; ox < ow; ++ox) {
      const float* p00 = in_b + ((static_cast<std::size_t>(oy) * 2) * w + ox * 2) * c;
      const float* p01 = p00 + c;
      const float* p10 = p00 + static_cast<std::size_t>(w) * c;
      const float* p11 = p10 + c;
      for (int ch = 0; ch < c; ++ch) {
        out_row[ox * c + ch] = (p00[ch] + p01[ch] + p10[ch] + p11[ch]) * 0.25f;
      }
    }
  });
}

void avgpool2_backward(const float* gout, float* gin, int batch, int h, int w, int c, Backend b) {
  assert(h % 2 == 0 && w % 2 == 0);
  const int oh = h / 2;
  const int ow = w / 2;
  for_range(static_cast<long long>(batch) * h, b, [&](long long row) {
    const int bi = static_cast<int>(row / h);
    const int iy = static_cast<int>(row % h);
    const float* gout_b = gout + static_cast<std::size_t>(bi) * oh * ow * c;
    float* gin_row = gin + ((static_cast<std::size_t>(bi) * h + iy) * w) * c;
    for (int ix = 0; ix < w; ++ix) {
      const float* g_px = gout_b + ((static_cast<std::size_t>(iy) / 2) * ow + ix / 2) * c;
      for (int ch = 0; ch < c; ++ch) gin_row[ix * c + ch] = g_px[ch] * 0.25f;
    }
  });
}

void tanh_forward(const float* in, float* out, std::size_t n, Backend b) {
  for_range(static_cast<long long>(n), b, [&](long long i) { out[i] = std::tanh(in[i]); });
}

void tanh_backward(const float* out, const float* gout, float* gin, std::size_t n, Backend b) {
  for_range(static_cast<long long>(n), b,
            [&](long long i) { gin[i] = gout[i] * (1.0f - out[i] * out[i]); });
}

}  // namespace killchain::kernels

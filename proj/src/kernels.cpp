#include "glyphzero/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace gz {
namespace kernels {

namespace {

// Valid output range [lo, hi) so that ow * stride + base lands in [0, limit).
inline void clamp_run(int base, int stride, int limit, int wo, int& lo, int& hi) {
  lo = base < 0 ? (-base + stride - 1) / stride : 0;
  hi = std::min(wo, (limit - 1 - base) / stride + 1);
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int Cin, int H, int W,
                    int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  const int64_t x_c = static_cast<int64_t>(H) * W;
  const int64_t x_b = static_cast<int64_t>(Cin) * x_c;
  const int64_t y_c = static_cast<int64_t>(Ho) * Wo;
  const int64_t y_b = static_cast<int64_t>(Cout) * y_c;
  const int64_t w_o = static_cast<int64_t>(Cin) * kh * kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      T* yrow = y + b * y_b + co * y_c;
      const T* wbase = w + co * w_o;
      for (int64_t i = 0; i < y_c; ++i) yrow[i] = T(0);
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xc = x + b * x_b + ci * x_c;
        const T* wc = wbase + static_cast<int64_t>(ci) * kh * kw;
        for (int oh = 0; oh < Ho; ++oh) {
          T* yo = yrow + static_cast<int64_t>(oh) * Wo;
          for (int r = 0; r < kh; ++r) {
            const int ih = oh * stride - pad + r;
            if (ih < 0 || ih >= H) continue;
            const T* xrow = xc + static_cast<int64_t>(ih) * W;
            for (int s = 0; s < kw; ++s) {
              const T wv = wc[r * kw + s];
              const int base = -pad + s;
              int lo, hi;
              clamp_run(base, stride, W, Wo, lo, hi);
              // Branch-free over ow; contiguous at stride 1, so it vectorizes.
              if (stride == 1) {
                const T* xs = xrow + base;
                for (int ow = lo; ow < hi; ++ow) yo[ow] += wv * xs[ow];
              } else {
                for (int ow = lo; ow < hi; ++ow) yo[ow] += wv * xrow[ow * stride + base];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int B, int Cin, int H, int W,
                           int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  const int64_t x_c = static_cast<int64_t>(H) * W;
  const int64_t x_b = static_cast<int64_t>(Cin) * x_c;
  const int64_t y_c = static_cast<int64_t>(Ho) * Wo;
  const int64_t y_b = static_cast<int64_t>(Cout) * y_c;
  const int64_t w_o = static_cast<int64_t>(Cin) * kh * kw;

  // Each (b, ci) image plane is owned by one thread; within it the scatter
  // from gy runs in a fixed order, so results are deterministic.
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int ci = 0; ci < Cin; ++ci) {
      T* gxc = gx + b * x_b + ci * x_c;
      for (int co = 0; co < Cout; ++co) {
        const T* gyc = gy + b * y_b + co * y_c;
        const T* wc = w + co * w_o + static_cast<int64_t>(ci) * kh * kw;
        for (int oh = 0; oh < Ho; ++oh) {
          const T* gyrow = gyc + static_cast<int64_t>(oh) * Wo;
          for (int r = 0; r < kh; ++r) {
            const int ih = oh * stride - pad + r;
            if (ih < 0 || ih >= H) continue;
            T* gxrow = gxc + static_cast<int64_t>(ih) * W;
            for (int s = 0; s < kw; ++s) {
              const T wv = wc[r * kw + s];
              const int base = -pad + s;
              int lo, hi;
              clamp_run(base, stride, W, Wo, lo, hi);
              if (stride == 1) {
                T* gxs = gxrow + base;
                for (int ow = lo; ow < hi; ++ow) gxs[ow] += wv * gyrow[ow];
              } else {
                for (int ow = lo; ow < hi; ++ow) gxrow[ow * stride + base] += wv * gyrow[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int B, int Cin, int H, int W,
                            int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  const int64_t x_c = static_cast<int64_t>(H) * W;
  const int64_t x_b = static_cast<int64_t>(Cin) * x_c;
  const int64_t y_c = static_cast<int64_t>(Ho) * Wo;
  const int64_t y_b = static_cast<int64_t>(Cout) * y_c;
  const int64_t w_o = static_cast<int64_t>(Cin) * kh * kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < Cin; ++ci) {
      for (int r = 0; r < kh; ++r) {
        for (int s = 0; s < kw; ++s) {
          T acc = T(0);
          const int base = -pad + s;
          int lo, hi;
          clamp_run(base, stride, W, Wo, lo, hi);
          for (int b = 0; b < B; ++b) {
            const T* gyc = gy + b * y_b + co * y_c;
            const T* xc = x + b * x_b + ci * x_c;
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh * stride - pad + r;
              if (ih < 0 || ih >= H) continue;
              const T* xrow = xc + static_cast<int64_t>(ih) * W;
              const T* gyrow = gyc + static_cast<int64_t>(oh) * Wo;
              if (stride == 1) {
                const T* xs = xrow + base;
                for (int ow = lo; ow < hi; ++ow) acc += gyrow[ow] * xs[ow];
              } else {
                for (int ow = lo; ow < hi; ++ow) acc += gyrow[ow] * xrow[ow * stride + base];
              }
            }
          }
          gw[co * w_o + static_cast<int64_t>(ci) * kh * kw + r * kw + s] += acc;
        }
      }
    }
  }
}

template <typename T>
void l1_distances(const T* bank, const T* q, T* out, int64_t n_entries, int64_t dim) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_entries; ++i) {
    const T* row = bank + i * dim;
    T acc = T(0);
    for (int64_t j = 0; j < dim; ++j) acc += std::abs(row[j] - q[j]);
    out[i] = acc;
  }
}

template void conv2d_forward<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_forward<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_backward_input<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_backward_input<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_backward_weight<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_backward_weight<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
template void l1_distances<float>(const float*, const float*, float*, int64_t, int64_t);
template void l1_distances<double>(const double*, const double*, double*, int64_t, int64_t);

}  // namespace kernels
}  // namespace gz

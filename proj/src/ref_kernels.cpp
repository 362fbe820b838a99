#include "glyphzero/kernels.hpp"

#include <cmath>

// Naive serial loop nests. These exist as an independent route for the tests
// and as the baseline side of the benchmark; keep them obvious, not fast.

namespace gz {
namespace ref {

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int Cin, int H, int W,
                    int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T acc = T(0);
          for (int ci = 0; ci < Cin; ++ci)
            for (int r = 0; r < kh; ++r)
              for (int s = 0; s < kw; ++s) {
                int ih = oh * stride - pad + r;
                int iw = ow * stride - pad + s;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x[((static_cast<int64_t>(b) * Cin + ci) * H + ih) * W + iw] *
                       w[((static_cast<int64_t>(co) * Cin + ci) * kh + r) * kw + s];
              }
          y[((static_cast<int64_t>(b) * Cout + co) * Ho + oh) * Wo + ow] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int B, int Cin, int H, int W,
                           int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T g = gy[((static_cast<int64_t>(b) * Cout + co) * Ho + oh) * Wo + ow];
          for (int ci = 0; ci < Cin; ++ci)
            for (int r = 0; r < kh; ++r)
              for (int s = 0; s < kw; ++s) {
                int ih = oh * stride - pad + r;
                int iw = ow * stride - pad + s;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                gx[((static_cast<int64_t>(b) * Cin + ci) * H + ih) * W + iw] +=
                    g * w[((static_cast<int64_t>(co) * Cin + ci) * kh + r) * kw + s];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int B, int Cin, int H, int W,
                            int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T g = gy[((static_cast<int64_t>(b) * Cout + co) * Ho + oh) * Wo + ow];
          for (int ci = 0; ci < Cin; ++ci)
            for (int r = 0; r < kh; ++r)
              for (int s = 0; s < kw; ++s) {
                int ih = oh * stride - pad + r;
                int iw = ow * stride - pad + s;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                gw[((static_cast<int64_t>(co) * Cin + ci) * kh + r) * kw + s] +=
                    g * x[((static_cast<int64_t>(b) * Cin + ci) * H + ih) * W + iw];
              }
        }
}

template <typename T>
void l1_distances(const T* bank, const T* q, T* out, int64_t n_entries, int64_t dim) {
  for (int64_t i = 0; i < n_entries; ++i) {
    T acc = T(0);
    for (int64_t j = 0; j < dim; ++j) acc += std::abs(bank[i * dim + j] - q[j]);
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

}  // namespace ref
}  // namespace gz

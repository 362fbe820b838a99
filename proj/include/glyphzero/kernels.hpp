#pragma once

#include <cstdint>

namespace gz {

// OpenMP-parallel array kernels. Parallelism is always over independent
// output elements; the reduction feeding one element runs in a fixed serial
// order. Results are therefore bitwise reproducible at any thread count.
namespace kernels {

// y[B,Cout,Ho,Wo] = x[B,Cin,H,W] * w[Cout,Cin,kh,kw], zero padding.
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int Cin, int H, int W,
                    int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);

// gx += dconv/dx . gy  (gx must be pre-zeroed or hold an accumulator)
template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int B, int Cin, int H, int W,
                           int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);

// gw += dconv/dw . gy
template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int B, int Cin, int H, int W,
                            int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);

// out[i] = sum_j |bank[i*dim + j] - q[j]| for each of n_entries rows.
template <typename T>
void l1_distances(const T* bank, const T* q, T* out, int64_t n_entries, int64_t dim);

extern template void conv2d_forward<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_forward<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_input<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_input<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_weight<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_weight<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void l1_distances<float>(const float*, const float*, float*, int64_t, int64_t);
extern template void l1_distances<double>(const double*, const double*, double*, int64_t, int64_t);

}  // namespace kernels

// Plain serial reference implementations, kept for the tests and the
// benchmark target. Deliberately naive loop nests; do not optimize.
namespace ref {

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int Cin, int H, int W,
                    int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);
template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int B, int Cin, int H, int W,
                           int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);
template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int B, int Cin, int H, int W,
                            int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo);
template <typename T>
void l1_distances(const T* bank, const T* q, T* out, int64_t n_entries, int64_t dim);

extern template void conv2d_forward<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_forward<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_input<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_input<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_weight<float>(const float*, const float*, float*, int, int, int, int, int, int, int, int, int, int, int);
extern template void conv2d_backward_weight<double>(const double*, const double*, double*, int, int, int, int, int, int, int, int, int, int, int);
extern template void l1_distances<float>(const float*, const float*, float*, int64_t, int64_t);
extern template void l1_distances<double>(const double*, const double*, double*, int64_t, int64_t);

}  // namespace ref

}  // namespace gz

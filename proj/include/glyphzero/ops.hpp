#pragma once

#include <vector>

#include "glyphzero/tensor.hpp"

namespace gz {

// Differentiable operators. Each op validates shapes up front (errors name
// the offending shapes), computes the forward value, and registers a backward
// closure unless grad tracking is off or no input is tracked.

// x[B,Cin,H,W] * w[Cout,Cin,kh,kw] -> [B,Cout,Ho,Wo]; kernel sizes 1 or 3,
// stride 1 or 2, zero padding. No bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding);

// slope has one element (applied everywhere) or one per channel (dim 1 of x).
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope);

// Train mode normalizes with batch statistics (B >= 2 required) and updates
// the running stats in place by EMA; eval mode reads the running stats.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>& running_mean, std::vector<T>& running_var,
                     bool training, T momentum = T(0.1), T eps = T(1e-5));

// x[B,F] @ w[O,F]^T + b[O]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> abs_val(const Tensor<T>& x);

// log(max(x, floor)); zero gradient where the clamp is active. floor == 0
// gives the plain log.
template <typename T>
Tensor<T> log_clamped(const Tensor<T>& x, T floor = T(0));

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);

// [B,C,H,W] -> [B,C], summing over the spatial grid.
template <typename T>
Tensor<T> sum_spatial(const Tensor<T>& x);

// [B,...] -> [B, rest]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int k, int stride);

// Softmax + negative log likelihood at the label index, mean over the batch.
// Computed via the log-sum-exp form, which equals -log(softmax[y]) exactly.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

}  // namespace gz

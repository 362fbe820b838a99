#pragma once

#include <vector>

#include "glyphzero/tensor.hpp"

namespace gz {

// Per-category embedding centers. Plain buffers: they never join the
// gradient graph and move only through update_centers.
template <typename T>
struct Centers {
  int n_categories = 0;
  int c = 0, h = 0, w = 0;
  std::vector<T> data;  // [n_categories][c*h*w], row-major
  T alpha = T(0.5);

  int64_t dim() const { return static_cast<int64_t>(c) * h * w; }
  static Centers zeros(int n_categories, int c, int h, int w, T alpha = T(0.5));
};

struct LossWeights {
  double w_hpe = 1.0;
  double w_kcls_d = 0.01;
  double w_kcls_t = 0.01;
  double w_center = 0.003;
  double w_race = 1.0;
  bool use_hpe = true;
  bool use_kcls_d = true;
  bool use_kcls_t = true;
  bool use_center = true;
  bool use_race = true;

  void validate() const;  // non-negative weights, at least one term enabled
};

// Scalar graph nodes for each computed component; default-constructed (empty)
// when a term was not computed this step.
template <typename T>
struct LossTerms {
  Tensor<T> hpe, kcls_d, kcls_t, center, race;
};

template <typename T>
struct LossReport {
  double hpe = 0, kcls_d = 0, kcls_t = 0, center = 0, race = 0;
  double total = 0;
  Tensor<T> total_tensor;  // scalar; backward() entry point
};

// Half squared error summed over the C*H*W grid, averaged over the batch.
// Gradient reaches both embeddings.
template <typename T>
Tensor<T> loss_hpe(const Tensor<T>& a_d, const Tensor<T>& a_t);

// Plain softmax cross-entropy over category logits, batch mean. Serves both
// branches.
template <typename T>
Tensor<T> loss_kcls(const Tensor<T>& logits, const std::vector<int>& categories);

// Half squared distance of each embedding to its category center, batch
// mean. Centers enter as constants: gradient reaches a_t only.
template <typename T>
Tensor<T> loss_center(const Tensor<T>& a_t, const std::vector<int>& categories,
                      const Centers<T>& centers);

// C_c <- C_c - alpha * (sum_{i: y_i = c} (C_c - a_i)) / (1 + count_c) for
// each category present in the batch; others untouched. alpha in [0,1]
// (alpha 0 is the identity).
template <typename T>
void update_centers(Centers<T>& centers, const Tensor<T>& a_t,
                    const std::vector<int>& categories, T alpha);

// Aggregation loss over the radical map: per-position channel softmax,
// spatial accumulation, normalization by T = H*W, and cross-entropy against
// the normalized counts with the blank channel completing the distribution.
// radical_counts[b] has N-1 entries (no blank).
template <typename T>
Tensor<T> loss_race(const Tensor<T>& r_t, const std::vector<std::vector<int>>& radical_counts);

// Weighted sum of the enabled terms.
template <typename T>
LossReport<T> loss_total(const LossTerms<T>& terms, const LossWeights& w);

extern template struct Centers<float>;
extern template struct Centers<double>;

}  // namespace gz

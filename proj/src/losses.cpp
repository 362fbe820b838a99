#include "glyphzero/losses.hpp"

#include <stdexcept>
#include <string>

#include "glyphzero/ops.hpp"

namespace gz {

template <typename T>
Centers<T> Centers<T>::zeros(int n_categories, int c, int h, int w, T alpha) {
  if (n_categories < 1 || c < 1 || h < 1 || w < 1) {
    throw std::invalid_argument("Centers: non-positive dimension");
  }
  Centers<T> out;
  out.n_categories = n_categories;
  out.c = c;
  out.h = h;
  out.w = w;
  out.alpha = alpha;
  out.data.assign(static_cast<size_t>(n_categories) * c * h * w, T(0));
  return out;
}

void LossWeights::validate() const {
  if (w_hpe < 0 || w_kcls_d < 0 || w_kcls_t < 0 || w_center < 0 || w_race < 0) {
    throw std::invalid_argument("LossWeights: negative weight");
  }
  if (!use_hpe && !use_kcls_d && !use_kcls_t && !use_center && !use_race) {
    throw std::invalid_argument("LossWeights: all terms disabled");
  }
}

template <typename T>
Tensor<T> loss_hpe(const Tensor<T>& a_d, const Tensor<T>& a_t) {
  if (a_d.shape() != a_t.shape()) {
    throw std::invalid_argument("loss_hpe: shape mismatch " + shape_str(a_d.shape()) + " vs " +
                                shape_str(a_t.shape()));
  }
  if (a_d.shape().empty()) throw std::invalid_argument("loss_hpe: scalar input");
  const int B = a_d.shape()[0];
  return scale(sum_all(square(sub(a_d, a_t))), T(0.5) / static_cast<T>(B));
}

template <typename T>
Tensor<T> loss_kcls(const Tensor<T>& logits, const std::vector<int>& categories) {
  return cross_entropy(logits, categories);
}

namespace {

template <typename T>
void check_center_batch(const Tensor<T>& a_t, const std::vector<int>& categories,
                        const Centers<T>& centers, const char* op) {
  if (a_t.shape().size() != 4 || a_t.shape()[1] != centers.c || a_t.shape()[2] != centers.h ||
      a_t.shape()[3] != centers.w) {
    throw std::invalid_argument(std::string(op) + ": embeddings " + shape_str(a_t.shape()) +
                                " do not match centers [" + std::to_string(centers.c) + "," +
                                std::to_string(centers.h) + "," + std::to_string(centers.w) + "]");
  }
  if (static_cast<int>(categories.size()) != a_t.shape()[0]) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(categories.size()) +
                                " categories for batch of " + std::to_string(a_t.shape()[0]));
  }
  for (int y : categories) {
    if (y < 0 || y >= centers.n_categories) {
      throw std::invalid_argument(std::string(op) + ": no center for category " +
                                  std::to_string(y) + " (have " +
                                  std::to_string(centers.n_categories) + ")");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> loss_center(const Tensor<T>& a_t, const std::vector<int>& categories,
                      const Centers<T>& centers) {
  check_center_batch(a_t, categories, centers, "loss_center");
  const int B = a_t.shape()[0];
  const int64_t d = centers.dim();
  std::vector<T> cbatch(static_cast<size_t>(B) * d);
  for (int b = 0; b < B; ++b) {
    const T* src = centers.data.data() + static_cast<int64_t>(categories[b]) * d;
    std::copy(src, src + d, cbatch.begin() + static_cast<int64_t>(b) * d);
  }
  Tensor<T> cb(a_t.shape(), std::move(cbatch));  // constant leaf, no grad
  return scale(sum_all(square(sub(a_t, cb))), T(0.5) / static_cast<T>(B));
}

template <typename T>
void update_centers(Centers<T>& centers, const Tensor<T>& a_t,
                    const std::vector<int>& categories, T alpha) {
  check_center_batch(a_t, categories, centers, "update_centers");
  if (alpha < T(0) || alpha > T(1)) {
    throw std::invalid_argument("update_centers: alpha must lie in [0,1], got " +
                                std::to_string(static_cast<double>(alpha)));
  }
  const int B = a_t.shape()[0];
  const int64_t d = centers.dim();
  const T* a = a_t.data().data();

  std::vector<int> count(static_cast<size_t>(centers.n_categories), 0);
  for (int y : categories) ++count[static_cast<size_t>(y)];

  // Accumulate sum_{i: y_i = c} (C_c - a_i) per present category, then apply
  // one scaled step. Category iteration order is fixed (ascending).
  std::vector<T> delta(centers.data.size(), T(0));
  for (int b = 0; b < B; ++b) {
    const int y = categories[b];
    T* dst = delta.data() + static_cast<int64_t>(y) * d;
    const T* cc = centers.data.data() + static_cast<int64_t>(y) * d;
    const T* ai = a + static_cast<int64_t>(b) * d;
    for (int64_t i = 0; i < d; ++i) dst[i] += cc[i] - ai[i];
  }
  for (int y = 0; y < centers.n_categories; ++y) {
    if (count[static_cast<size_t>(y)] == 0) continue;
    const T step = alpha / static_cast<T>(1 + count[static_cast<size_t>(y)]);
    T* cc = centers.data.data() + static_cast<int64_t>(y) * d;
    const T* dl = delta.data() + static_cast<int64_t>(y) * d;
    for (int64_t i = 0; i < d; ++i) cc[i] -= step * dl[i];
  }
}

template <typename T>
Tensor<T> loss_race(const Tensor<T>& r_t, const std::vector<std::vector<int>>& radical_counts) {
  if (r_t.shape().size() != 4) {
    throw std::invalid_argument("loss_race: expected [B,N,H,W], got " + shape_str(r_t.shape()));
  }
  const int B = r_t.shape()[0], N = r_t.shape()[1];
  const int tgrid = r_t.shape()[2] * r_t.shape()[3];
  if (N < 2) throw std::invalid_argument("loss_race: need at least 2 channels (radicals + blank)");
  if (static_cast<int>(radical_counts.size()) != B) {
    throw std::invalid_argument("loss_race: " + std::to_string(radical_counts.size()) +
                                " count vectors for batch of " + std::to_string(B));
  }

  std::vector<T> lbar(static_cast<size_t>(B) * N);
  for (int b = 0; b < B; ++b) {
    const auto& counts = radical_counts[static_cast<size_t>(b)];
    if (static_cast<int>(counts.size()) != N - 1) {
      throw std::invalid_argument("loss_race: sample " + std::to_string(b) + " has " +
                                  std::to_string(counts.size()) + " counts, expected " +
                                  std::to_string(N - 1));
    }
    int total = 0;
    for (int v : counts) {
      if (v < 0) throw std::invalid_argument("loss_race: negative radical count");
      total += v;
    }
    if (total > tgrid) {
      throw std::invalid_argument("loss_race: counts sum to " + std::to_string(total) +
                                  " but the grid has only " + std::to_string(tgrid) +
                                  " positions (blank count would be negative)");
    }
    for (int k = 0; k < N - 1; ++k) {
      lbar[static_cast<size_t>(b) * N + k] = static_cast<T>(counts[static_cast<size_t>(k)]) / static_cast<T>(tgrid);
    }
    lbar[static_cast<size_t>(b) * N + (N - 1)] =
        static_cast<T>(tgrid - total) / static_cast<T>(tgrid);
  }
  Tensor<T> lbar_t({B, N}, std::move(lbar));  // constant

  Tensor<T> p = softmax(r_t, 1);
  Tensor<T> pbar = scale(sum_spatial(p), T(1) / static_cast<T>(tgrid));
  Tensor<T> logp = log_clamped(pbar, T(1e-12));
  return scale(sum_all(mul(lbar_t, logp)), T(-1) / static_cast<T>(B));
}

template <typename T>
LossReport<T> loss_total(const LossTerms<T>& terms, const LossWeights& w) {
  w.validate();
  LossReport<T> rep;
  Tensor<T> total;
  bool have = false;
  auto fold = [&](const Tensor<T>& term, double weight, bool enabled, double* out,
                  const char* name) {
    if (!enabled) return;
    if (term.numel() != 1) {
      throw std::invalid_argument(std::string("loss_total: enabled term '") + name +
                                  "' missing or non-scalar");
    }
    *out = static_cast<double>(term.item());
    Tensor<T> scaled = scale(term, static_cast<T>(weight));
    total = have ? add(total, scaled) : scaled;
    have = true;
  };
  fold(terms.hpe, w.w_hpe, w.use_hpe, &rep.hpe, "hpe");
  fold(terms.kcls_d, w.w_kcls_d, w.use_kcls_d, &rep.kcls_d, "kcls_d");
  fold(terms.kcls_t, w.w_kcls_t, w.use_kcls_t, &rep.kcls_t, "kcls_t");
  fold(terms.center, w.w_center, w.use_center, &rep.center, "center");
  fold(terms.race, w.w_race, w.use_race, &rep.race, "race");
  rep.total_tensor = total;
  rep.total = static_cast<double>(total.item());
  return rep;
}

#define GZ_INSTANTIATE_LOSSES(T)                                                         \
  template struct Centers<T>;                                                            \
  template Tensor<T> loss_hpe<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> loss_kcls<T>(const Tensor<T>&, const std::vector<int>&);            \
  template Tensor<T> loss_center<T>(const Tensor<T>&, const std::vector<int>&,           \
                                    const Centers<T>&);                                  \
  template void update_centers<T>(Centers<T>&, const Tensor<T>&, const std::vector<int>&, T); \
  template Tensor<T> loss_race<T>(const Tensor<T>&, const std::vector<std::vector<int>>&); \
  template LossReport<T> loss_total<T>(const LossTerms<T>&, const LossWeights&);

GZ_INSTANTIATE_LOSSES(float)
GZ_INSTANTIATE_LOSSES(double)

}  // namespace gz

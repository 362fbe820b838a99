#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "glyphzero/rng.hpp"
#include "glyphzero/tensor.hpp"

namespace gztest {

// Central finite differences in 64-bit mode. make_loss rebuilds the graph
// from the given leaves on every call and returns a scalar.
struct GradCheckResult {
  double max_rel_err = 0;
  double max_abs_err = 0;
};

inline double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

template <typename MakeLoss>
GradCheckResult gradcheck(const std::vector<gz::Tensor<double>*>& leaves, MakeLoss make_loss,
                          double h = 1e-5) {
  for (auto* t : leaves) t->zero_grad();
  make_loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto* t : leaves) analytic.push_back(t->grad());

  GradCheckResult r;
  for (size_t li = 0; li < leaves.size(); ++li) {
    std::vector<double>& data = leaves[li]->data();
    for (size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = make_loss().item();
      data[i] = keep - h;
      const double dn = make_loss().item();
      data[i] = keep;
      const double num = (up - dn) / (2 * h);
      r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic[li][i], num));
      r.max_abs_err = std::max(r.max_abs_err, std::fabs(analytic[li][i] - num));
    }
  }
  return r;
}

template <typename T>
gz::Tensor<T> random_tensor(const std::vector<int>& shape, uint64_t seed, double scale = 1.0,
                            double offset = 0.0) {
  gz::Tensor<T> t(shape);
  gz::RandomStream rng(seed);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * scale + offset);
  return t;
}

// Asserts fn throws and the message mentions every listed fragment.
template <typename Fn>
bool throws_containing(Fn fn, const std::vector<std::string>& fragments) {
  try {
    fn();
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    for (const auto& frag : fragments) {
      if (msg.find(frag) == std::string::npos) return false;
    }
    return true;
  }
  return false;
}

}  // namespace gztest

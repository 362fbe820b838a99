#include "glyphzero/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "glyphzero/kernels.hpp"

namespace gz {

namespace {

using std::int64_t;

template <typename T>
using NodeP = std::shared_ptr<detail::Node<T>>;

template <typename T>
Tensor<T> make_result(std::vector<int> shape, std::vector<T> value,
                      std::vector<NodeP<T>> parents,
                      std::function<void(detail::Node<T>&)> backprop) {
  Tensor<T> out(std::move(shape), std::move(value));
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (detail::grad_enabled() && any) {
    auto& n = *out.node();
    n.leaf = false;
    n.requires_grad = true;
    n.parents = std::move(parents);
    n.backprop = std::move(backprop);
  }
  return out;
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <typename T>
void check_4d(const char* op, const Tensor<T>& x) {
  if (x.shape().size() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected 4-d tensor, got " +
                                shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
  check_4d("conv2d", x);
  check_4d("conv2d", w);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int Cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != Cin) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(Cin) +
                                " != weight channels " + std::to_string(ws[1]) + " (input " +
                                shape_str(xs) + ", weight " + shape_str(ws) + ")");
  }
  if ((kh != 1 && kh != 3) || (kw != 1 && kw != 3)) {
    throw std::invalid_argument("conv2d: kernel extents must be 1 or 3, got weight " + shape_str(ws));
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
  const int Ho = (H + 2 * padding - kh) / stride + 1;
  const int Wo = (W + 2 * padding - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) {
    throw std::invalid_argument("conv2d: empty output for input " + shape_str(xs) + ", weight " +
                                shape_str(ws));
  }

  std::vector<T> y(static_cast<size_t>(B) * Cout * Ho * Wo);
  kernels::conv2d_forward(x.data().data(), w.data().data(), y.data(), B, Cin, H, W, Cout, kh, kw,
                          stride, padding, Ho, Wo);

  auto xn = x.node();
  auto wn = w.node();
  return make_result<T>(
      {B, Cout, Ho, Wo}, std::move(y), {xn, wn},
      [=](detail::Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& wp = *self.parents[1];
        if (xp.requires_grad) {
          xp.ensure_grad();
          kernels::conv2d_backward_input(self.grad.data(), wp.value.data(), xp.grad.data(), B, Cin,
                                         H, W, Cout, kh, kw, stride, padding, Ho, Wo);
        }
        if (wp.requires_grad) {
          wp.ensure_grad();
          kernels::conv2d_backward_weight(self.grad.data(), xp.value.data(), wp.grad.data(), B, Cin,
                                          H, W, Cout, kh, kw, stride, padding, Ho, Wo);
        }
      });
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  const int64_t n = x.numel();
  const int64_t ns = slope.numel();
  int64_t channels = 1, inner = n;
  if (ns != 1) {
    if (x.shape().size() < 2 || x.shape()[1] != static_cast<int>(ns)) {
      throw std::invalid_argument("prelu: slope " + shape_str(slope.shape()) +
                                  " does not match channels of input " + shape_str(x.shape()));
    }
    channels = ns;
    inner = n / (static_cast<int64_t>(x.shape()[0]) * channels);
  }
  const T* xd = x.data().data();
  const T* sd = slope.data().data();
  std::vector<T> y(n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const T a = ns == 1 ? sd[0] : sd[(i / inner) % channels];
    y[i] = xd[i] >= T(0) ? xd[i] : a * xd[i];
  }

  auto xn = x.node();
  auto sn = slope.node();
  return make_result<T>(
      x.shape(), std::move(y), {xn, sn},
      [=](detail::Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& sp = *self.parents[1];
        const T* g = self.grad.data();
        const T* xv = xp.value.data();
        const T* sv = sp.value.data();
        if (xp.requires_grad) {
          xp.ensure_grad();
          T* gx = xp.grad.data();
#pragma omp parallel for schedule(static)
          for (int64_t i = 0; i < n; ++i) {
            const T a = ns == 1 ? sv[0] : sv[(i / inner) % channels];
            gx[i] += g[i] * (xv[i] >= T(0) ? T(1) : a);
          }
        }
        if (sp.requires_grad) {
          sp.ensure_grad();
          T* gs = sp.grad.data();
          if (ns == 1) {
            T acc = T(0);
            for (int64_t i = 0; i < n; ++i)
              if (xv[i] < T(0)) acc += g[i] * xv[i];
            gs[0] += acc;
          } else {
#pragma omp parallel for schedule(static)
            for (int64_t c = 0; c < channels; ++c) {
              T acc = T(0);
              for (int64_t i = 0; i < n; ++i) {
                if ((i / inner) % channels == c && xv[i] < T(0)) acc += g[i] * xv[i];
              }
              gs[c] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                     T momentum, T eps) {
  check_4d("batch_norm", x);
  const auto& xs = x.shape();
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (gamma.numel() != C || beta.numel() != C) {
    throw std::invalid_argument("batch_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                                shape_str(beta.shape()) + " must have one entry per channel of " +
                                shape_str(xs));
  }
  if (static_cast<int>(running_mean.size()) != C || static_cast<int>(running_var.size()) != C) {
    throw std::invalid_argument("batch_norm: running stats size mismatch");
  }
  if (training && B < 2) {
    throw std::invalid_argument("batch_norm: train mode requires batch size >= 2, got " +
                                std::to_string(B));
  }

  const int64_t spatial = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(B) * spatial;
  const T* xd = x.data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();

  std::vector<T> mean(C), invstd(C);
  if (training) {
    // Biased variance; running stats track the same estimator.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      T s = T(0);
      for (int b = 0; b < B; ++b) {
        const T* p = xd + (static_cast<int64_t>(b) * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) s += p[i];
      }
      const T mu = s / static_cast<T>(m);
      T v = T(0);
      for (int b = 0; b < B; ++b) {
        const T* p = xd + (static_cast<int64_t>(b) * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          const T d = p[i] - mu;
          v += d * d;
        }
      }
      v /= static_cast<T>(m);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(v + eps);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * v;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      invstd[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  std::vector<T> xhat(static_cast<size_t>(x.numel()));
  std::vector<T> y(static_cast<size_t>(x.numel()));
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const int64_t off = (static_cast<int64_t>(b) * C + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        const T xh = (xd[off + i] - mean[c]) * invstd[c];
        xhat[off + i] = xh;
        y[off + i] = gd[c] * xh + bd[c];
      }
    }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(
      xs, std::move(y), {xn, gn, bn},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& gp = *self.parents[1];
        auto& bp = *self.parents[2];
        const T* g = self.grad.data();
        const T* gv = gp.value.data();

        if (gp.requires_grad) gp.ensure_grad();
        if (bp.requires_grad) bp.ensure_grad();
        if (xp.requires_grad) xp.ensure_grad();

#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (int b = 0; b < B; ++b) {
            const int64_t off = (static_cast<int64_t>(b) * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * xhat[off + i];
            }
          }
          if (gp.requires_grad) gp.grad[c] += sum_gx;
          if (bp.requires_grad) bp.grad[c] += sum_g;
          if (xp.requires_grad) {
            if (training) {
              const T mg = sum_g / static_cast<T>(m);
              const T mgx = sum_gx / static_cast<T>(m);
              for (int b = 0; b < B; ++b) {
                const int64_t off = (static_cast<int64_t>(b) * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                  xp.grad[off + i] +=
                      gv[c] * invstd[c] * (g[off + i] - mg - xhat[off + i] * mgx);
                }
              }
            } else {
              for (int b = 0; b < B; ++b) {
                const int64_t off = (static_cast<int64_t>(b) * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                  xp.grad[off + i] += gv[c] * invstd[c] * g[off + i];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1) {
    throw std::invalid_argument("linear: expected x[B,F], w[O,F], b[O]; got " +
                                shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                                shape_str(b.shape()));
  }
  const int B = x.shape()[0], F = x.shape()[1], O = w.shape()[0];
  if (w.shape()[1] != F || b.shape()[0] != O) {
    throw std::invalid_argument("linear: incompatible shapes x " + shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  std::vector<T> y(static_cast<size_t>(B) * O);
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < B; ++i) {
    for (int o = 0; o < O; ++o) {
      T acc = bd[o];
      const T* xr = xd + static_cast<int64_t>(i) * F;
      const T* wr = wd + static_cast<int64_t>(o) * F;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      y[static_cast<int64_t>(i) * O + o] = acc;
    }
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return make_result<T>(
      {B, O}, std::move(y), {xn, wn, bn},
      [=](detail::Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& wp = *self.parents[1];
        auto& bp = *self.parents[2];
        const T* g = self.grad.data();
        if (xp.requires_grad) {
          xp.ensure_grad();
          T* gx = xp.grad.data();
          const T* wd2 = wp.value.data();
#pragma omp parallel for collapse(2) schedule(static)
          for (int i = 0; i < B; ++i) {
            for (int f = 0; f < F; ++f) {
              T acc = T(0);
              for (int o = 0; o < O; ++o)
                acc += g[static_cast<int64_t>(i) * O + o] * wd2[static_cast<int64_t>(o) * F + f];
              gx[static_cast<int64_t>(i) * F + f] += acc;
            }
          }
        }
        if (wp.requires_grad) {
          wp.ensure_grad();
          T* gw = wp.grad.data();
          const T* xd2 = xp.value.data();
#pragma omp parallel for collapse(2) schedule(static)
          for (int o = 0; o < O; ++o) {
            for (int f = 0; f < F; ++f) {
              T acc = T(0);
              for (int i = 0; i < B; ++i)
                acc += g[static_cast<int64_t>(i) * O + o] * xd2[static_cast<int64_t>(i) * F + f];
              gw[static_cast<int64_t>(o) * F + f] += acc;
            }
          }
        }
        if (bp.requires_grad) {
          bp.ensure_grad();
          T* gb = bp.grad.data();
#pragma omp parallel for schedule(static)
          for (int o = 0; o < O; ++o) {
            T acc = T(0);
            for (int i = 0; i < B; ++i) acc += g[static_cast<int64_t>(i) * O + o];
            gb[o] += acc;
          }
        }
      });
}

namespace {

template <typename T, typename FwdFn, typename BwdA, typename BwdB>
Tensor<T> binary_elementwise(const char* name, const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd,
                             BwdA bwd_a, BwdB bwd_b) {
  check_same_shape(name, a, b);
  const int64_t n = a.numel();
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  std::vector<T> y(n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = fwd(ad[i], bd[i]);
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(a.shape(), std::move(y), {an, bn}, [=](detail::Node<T>& self) {
    auto& ap = *self.parents[0];
    auto& bp = *self.parents[1];
    const T* g = self.grad.data();
    const T* av = ap.value.data();
    const T* bv = bp.value.data();
    if (ap.requires_grad) {
      ap.ensure_grad();
      T* ga = ap.grad.data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bwd_a(av[i], bv[i]);
    }
    if (bp.requires_grad) {
      bp.ensure_grad();
      T* gb = bp.grad.data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * bwd_b(av[i], bv[i]);
    }
  });
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_elementwise(const Tensor<T>& x, FwdFn fwd, BwdFn bwd) {
  const int64_t n = x.numel();
  const T* xd = x.data().data();
  std::vector<T> y(n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = fwd(xd[i]);
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(y), {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T* g = self.grad.data();
    const T* xv = xp.value.data();
    T* gx = xp.grad.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * bwd(xv[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      "add", a, b, [](T u, T v) { return u + v; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      "sub", a, b, [](T u, T v) { return u - v; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      "mul", a, b, [](T u, T v) { return u * v; }, [](T, T v) { return v; },
      [](T u, T) { return u; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return unary_elementwise<T>(x, [c](T v) { return c * v; }, [c](T) { return c; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_elementwise<T>(x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Tensor<T> abs_val(const Tensor<T>& x) {
  return unary_elementwise<T>(
      x, [](T v) { return std::abs(v); },
      [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> log_clamped(const Tensor<T>& x, T floor) {
  return unary_elementwise<T>(
      x, [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T v) { return v > floor ? T(1) / v : (floor > T(0) ? T(0) : T(1) / v); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const auto& xs = x.shape();
  if (axis < 0 || axis >= static_cast<int>(xs.size())) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(xs));
  }
  const int n = xs[axis];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xs[i];
  for (size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];

  const T* xd = x.data().data();
  std::vector<T> y(static_cast<size_t>(x.numel()));
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      T mx = xd[base];
      for (int k = 1; k < n; ++k) mx = std::max(mx, xd[base + k * inner]);
      T z = T(0);
      for (int k = 0; k < n; ++k) {
        const T e = std::exp(xd[base + k * inner] - mx);
        y[base + k * inner] = e;
        z += e;
      }
      const T iz = T(1) / z;
      for (int k = 0; k < n; ++k) y[base + k * inner] *= iz;
    }
  }

  auto xn = x.node();
  return make_result<T>(xs, std::move(y), {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T* g = self.grad.data();
    const T* p = self.value.data();
    T* gx = xp.grad.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * n * inner + i;
        T dot = T(0);
        for (int k = 0; k < n; ++k) dot += g[base + k * inner] * p[base + k * inner];
        for (int k = 0; k < n; ++k) {
          gx[base + k * inner] += p[base + k * inner] * (g[base + k * inner] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const int64_t n = x.numel();
  const T* xd = x.data().data();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += xd[i];  // fixed order: memory order
  auto xn = x.node();
  return make_result<T>({1}, {acc}, {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T g = self.grad[0];
    T* gx = xp.grad.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  const int64_t n = x.numel();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  const T* xd = x.data().data();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += xd[i];
  acc /= static_cast<T>(n);
  auto xn = x.node();
  return make_result<T>({1}, {acc}, {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T g = self.grad[0] / static_cast<T>(n);
    T* gx = xp.grad.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> sum_spatial(const Tensor<T>& x) {
  check_4d("sum_spatial", x);
  const int B = x.shape()[0], C = x.shape()[1];
  const int64_t spatial = static_cast<int64_t>(x.shape()[2]) * x.shape()[3];
  const T* xd = x.data().data();
  std::vector<T> y(static_cast<size_t>(B) * C);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const T* p = xd + (static_cast<int64_t>(b) * C + c) * spatial;
      T acc = T(0);
      for (int64_t i = 0; i < spatial; ++i) acc += p[i];
      y[static_cast<int64_t>(b) * C + c] = acc;
    }
  }
  auto xn = x.node();
  return make_result<T>({B, C}, std::move(y), {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T* g = self.grad.data();
    T* gx = xp.grad.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const T gv = g[static_cast<int64_t>(b) * C + c];
        T* p = gx + (static_cast<int64_t>(b) * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) p[i] += gv;
      }
    }
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.shape().empty()) throw std::invalid_argument("flatten: scalar input");
  const int B = x.shape()[0];
  const int rest = static_cast<int>(x.numel() / B);
  auto xn = x.node();
  std::vector<T> y = x.data();
  return make_result<T>({B, rest}, std::move(y), {xn}, [](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const int64_t n = static_cast<int64_t>(self.grad.size());
    for (int64_t i = 0; i < n; ++i) xp.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int k, int stride) {
  check_4d("avg_pool2d", x);
  if (k <= 0 || stride <= 0) throw std::invalid_argument("avg_pool2d: k and stride must be positive");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (k > H || k > W) {
    throw std::invalid_argument("avg_pool2d: window " + std::to_string(k) +
                                " exceeds input " + shape_str(x.shape()));
  }
  const int Ho = (H - k) / stride + 1;
  const int Wo = (W - k) / stride + 1;
  const T* xd = x.data().data();
  const T inv = T(1) / static_cast<T>(k * k);
  std::vector<T> y(static_cast<size_t>(B) * C * Ho * Wo);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const T* xc = xd + (static_cast<int64_t>(b) * C + c) * H * W;
      T* yc = y.data() + (static_cast<int64_t>(b) * C + c) * Ho * Wo;
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          T acc = T(0);
          for (int r = 0; r < k; ++r)
            for (int s = 0; s < k; ++s)
              acc += xc[static_cast<int64_t>(oh * stride + r) * W + ow * stride + s];
          yc[static_cast<int64_t>(oh) * Wo + ow] = acc * inv;
        }
      }
    }
  }
  auto xn = x.node();
  return make_result<T>({B, C, Ho, Wo}, std::move(y), {xn}, [=](detail::Node<T>& self) {
    auto& xp = *self.parents[0];
    if (!xp.requires_grad) return;
    xp.ensure_grad();
    const T* g = self.grad.data();
    T* gx = xp.grad.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const T* gc = g + (static_cast<int64_t>(b) * C + c) * Ho * Wo;
        T* gxc = gx + (static_cast<int64_t>(b) * C + c) * H * W;
        for (int oh = 0; oh < Ho; ++oh) {
          for (int ow = 0; ow < Wo; ++ow) {
            const T gv = gc[static_cast<int64_t>(oh) * Wo + ow] * inv;
            for (int r = 0; r < k; ++r)
              for (int s = 0; s < k; ++s)
                gxc[static_cast<int64_t>(oh * stride + r) * W + ow * stride + s] += gv;
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2) {
    throw std::invalid_argument("cross_entropy: expected logits [B,n], got " +
                                shape_str(logits.shape()));
  }
  const int B = logits.shape()[0], n = logits.shape()[1];
  if (static_cast<int>(labels.size()) != B) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(B));
  }
  for (int b = 0; b < B; ++b) {
    if (labels[b] < 0 || labels[b] >= n) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[b]) +
                                  " out of range [0," + std::to_string(n) + ")");
    }
  }
  const T* z = logits.data().data();
  // Per-sample softmax kept for the backward pass.
  std::vector<T> probs(static_cast<size_t>(B) * n);
  T loss = T(0);
  for (int b = 0; b < B; ++b) {
    const T* row = z + static_cast<int64_t>(b) * n;
    T mx = row[0];
    for (int k = 1; k < n; ++k) mx = std::max(mx, row[k]);
    T sum = T(0);
    for (int k = 0; k < n; ++k) {
      const T e = std::exp(row[k] - mx);
      probs[static_cast<int64_t>(b) * n + k] = e;
      sum += e;
    }
    for (int k = 0; k < n; ++k) probs[static_cast<int64_t>(b) * n + k] /= sum;
    loss += mx + std::log(sum) - row[labels[b]];
  }
  loss /= static_cast<T>(B);

  auto ln = logits.node();
  return make_result<T>(
      {1}, {loss}, {ln},
      [=, probs = std::move(probs), labels = labels](detail::Node<T>& self) {
        auto& lp = *self.parents[0];
        if (!lp.requires_grad) return;
        lp.ensure_grad();
        const T g = self.grad[0] / static_cast<T>(B);
        T* gx = lp.grad.data();
#pragma omp parallel for schedule(static)
        for (int b = 0; b < B; ++b) {
          for (int k = 0; k < n; ++k) {
            const T onehot = (k == labels[b]) ? T(1) : T(0);
            gx[static_cast<int64_t>(b) * n + k] +=
                g * (probs[static_cast<int64_t>(b) * n + k] - onehot);
          }
        }
      });
}

#define GZ_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, int, int);                     \
  template Tensor<T> prelu<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                   std::vector<T>&, std::vector<T>&, bool, T, T);                 \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                               \
  template Tensor<T> square<T>(const Tensor<T>&);                                                 \
  template Tensor<T> abs_val<T>(const Tensor<T>&);                                                \
  template Tensor<T> log_clamped<T>(const Tensor<T>&, T);                                         \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                           \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean_all<T>(const Tensor<T>&);                                               \
  template Tensor<T> sum_spatial<T>(const Tensor<T>&);                                            \
  template Tensor<T> flatten<T>(const Tensor<T>&);                                                \
  template Tensor<T> avg_pool2d<T>(const Tensor<T>&, int, int);                                   \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<int>&);

GZ_INSTANTIATE_OPS(float)
GZ_INSTANTIATE_OPS(double)

}  // namespace gz

// Times the OpenMP kernels against the serial reference loops on
// training-shaped workloads and checks they agree.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyphzero/kernels.hpp"
#include "glyphzero/rng.hpp"

using gz::RandomStream;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
  RandomStream rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
  std::printf("%-28s %12s %12s %8s %12s\n", "kernel", "omp ms", "serial ms", "speedup",
              "max |diff|");

  {
    const int B = 16, Cin = 16, H = 32, W = 32, Cout = 32, k = 3, stride = 1, pad = 1;
    const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    auto x = random_vec(static_cast<size_t>(B) * Cin * H * W, 1);
    auto w = random_vec(static_cast<size_t>(Cout) * Cin * k * k, 2);
    std::vector<float> y1(static_cast<size_t>(B) * Cout * Ho * Wo), y2(y1.size());
    double a = time_ms(10, [&] {
      gz::kernels::conv2d_forward(x.data(), w.data(), y1.data(), B, Cin, H, W, Cout, k, k, stride,
                                  pad, Ho, Wo);
    });
    double b = time_ms(10, [&] {
      gz::ref::conv2d_forward(x.data(), w.data(), y2.data(), B, Cin, H, W, Cout, k, k, stride, pad,
                              Ho, Wo);
    });
    std::printf("%-28s %12.3f %12.3f %7.2fx %12.3g\n", "conv2d fwd 16x16x32x32", a, b, b / a,
                max_abs_diff(y1, y2));

    auto gy = random_vec(y1.size(), 3);
    std::vector<float> gx1(x.size(), 0), gx2(x.size(), 0);
    a = time_ms(10, [&] {
      std::fill(gx1.begin(), gx1.end(), 0.0f);
      gz::kernels::conv2d_backward_input(gy.data(), w.data(), gx1.data(), B, Cin, H, W, Cout, k, k,
                                         stride, pad, Ho, Wo);
    });
    b = time_ms(10, [&] {
      std::fill(gx2.begin(), gx2.end(), 0.0f);
      gz::ref::conv2d_backward_input(gy.data(), w.data(), gx2.data(), B, Cin, H, W, Cout, k, k,
                                     stride, pad, Ho, Wo);
    });
    std::printf("%-28s %12.3f %12.3f %7.2fx %12.3g\n", "conv2d bwd input", a, b, b / a,
                max_abs_diff(gx1, gx2));

    std::vector<float> gw1(w.size(), 0), gw2(w.size(), 0);
    a = time_ms(10, [&] {
      std::fill(gw1.begin(), gw1.end(), 0.0f);
      gz::kernels::conv2d_backward_weight(gy.data(), x.data(), gw1.data(), B, Cin, H, W, Cout, k,
                                          k, stride, pad, Ho, Wo);
    });
    b = time_ms(10, [&] {
      std::fill(gw2.begin(), gw2.end(), 0.0f);
      gz::ref::conv2d_backward_weight(gy.data(), x.data(), gw2.data(), B, Cin, H, W, Cout, k, k,
                                      stride, pad, Ho, Wo);
    });
    std::printf("%-28s %12.3f %12.3f %7.2fx %12.3g\n", "conv2d bwd weight", a, b, b / a,
                max_abs_diff(gw1, gw2));
  }

  {
    const int64_t n = 4096, dim = 1024;
    auto bank = random_vec(static_cast<size_t>(n * dim), 4);
    auto q = random_vec(static_cast<size_t>(dim), 5);
    std::vector<float> d1(static_cast<size_t>(n)), d2(d1.size());
    double a = time_ms(50, [&] { gz::kernels::l1_distances(bank.data(), q.data(), d1.data(), n, dim); });
    double b = time_ms(50, [&] { gz::ref::l1_distances(bank.data(), q.data(), d2.data(), n, dim); });
    std::printf("%-28s %12.3f %12.3f %7.2fx %12.3g\n", "l1_distances 4096x1024", a, b, b / a,
                max_abs_diff(d1, d2));
  }
  return 0;
}

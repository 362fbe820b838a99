#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glyphzero/losses.hpp"
#include "glyphzero/ops.hpp"
#include "glyphzero/rng.hpp"
#include "gradcheck.hpp"

using namespace gz;
using gztest::gradcheck;
using gztest::random_tensor;
using gztest::throws_containing;

namespace {

// Brute-force aggregation loss written as independent loops, sharing no code
// with the library implementation.
double race_oracle(const std::vector<double>& r, int B, int N, int H, int W,
                   const std::vector<std::vector<int>>& counts) {
  const int T = H * W;
  double total = 0;
  for (int b = 0; b < B; ++b) {
    std::vector<double> p(static_cast<size_t>(N), 0.0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double mx = -1e300;
        for (int k = 0; k < N; ++k) {
          const double v = r[((static_cast<size_t>(b) * N + k) * H + y) * W + x];
          mx = std::max(mx, v);
        }
        double z = 0;
        for (int k = 0; k < N; ++k) {
          const double v = r[((static_cast<size_t>(b) * N + k) * H + y) * W + x];
          z += std::exp(v - mx);
        }
        for (int k = 0; k < N; ++k) {
          const double v = r[((static_cast<size_t>(b) * N + k) * H + y) * W + x];
          p[static_cast<size_t>(k)] += std::exp(v - mx) / z;
        }
      }
    }
    int used = 0;
    for (int c : counts[static_cast<size_t>(b)]) used += c;
    double loss = 0;
    for (int k = 0; k < N; ++k) {
      const double l_k = k + 1 < N ? counts[static_cast<size_t>(b)][static_cast<size_t>(k)]
                                   : static_cast<double>(T - used);
      const double lbar = l_k / T;
      const double pbar = p[static_cast<size_t>(k)] / T;
      loss -= lbar * std::log(std::max(pbar, 1e-12));
    }
    total += loss;
  }
  return total / B;
}

}  // namespace

TEST_CASE("embedding alignment loss by hand") {
  Tensor<double> ad({1, 2, 1, 1}, {1, 2});
  Tensor<double> at({1, 2, 1, 1}, {0, 0});
  CHECK(loss_hpe(ad, at).item() == doctest::Approx(2.5));
  CHECK(loss_hpe(at, ad).item() == doctest::Approx(2.5));  // symmetric
  CHECK(loss_hpe(ad, ad).item() == 0.0);
  Tensor<double> wrong({1, 3, 1, 1}, {0, 0, 0});
  CHECK_THROWS(loss_hpe(ad, wrong));
}

TEST_CASE("alignment loss averages over the batch") {
  Tensor<double> ad({2, 2, 1, 1}, {1, 2, 1, 2});
  Tensor<double> at({2, 2, 1, 1}, {0, 0, 0, 0});
  CHECK(loss_hpe(ad, at).item() == doctest::Approx(2.5));
}

TEST_CASE("category loss hand values") {
  Tensor<double> even({1, 2}, {0, 0});
  CHECK(loss_kcls(even, {0}).item() == doctest::Approx(std::log(2.0)));
  Tensor<double> sat({1, 2}, {1000, 0});
  CHECK(loss_kcls(sat, {0}).item() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(throws_containing([&] { loss_kcls(even, {2}); }, {"2"}));
}

TEST_CASE("center loss hand values and constancy of centers") {
  Centers<double> cs = Centers<double>::zeros(2, 2, 1, 1);
  Tensor<double> a({1, 2, 1, 1}, {1, 0});
  CHECK(loss_center(a, {0}, cs).item() == doctest::Approx(0.5));

  // doubling the residual quadruples the loss
  Tensor<double> a2({1, 2, 1, 1}, {2, 0});
  CHECK(loss_center(a2, {0}, cs).item() == doctest::Approx(2.0));

  // embedding equal to its center: zero
  cs.data = {3, 4, 0, 0};
  Tensor<double> eq({1, 2, 1, 1}, {3, 4});
  CHECK(loss_center(eq, {0}, cs).item() == 0.0);

  CHECK_THROWS(loss_center(a, {5}, cs));
}

TEST_CASE("center update rule") {
  Centers<double> cs = Centers<double>::zeros(3, 1, 1, 2);
  cs.data = {1, 1, 5, 5, -2, 0};

  // fixed point: batch embedding equals the center
  Tensor<double> at({1, 1, 1, 2}, {5, 5});
  update_centers(cs, at, {1}, 1.0);
  CHECK(cs.data == std::vector<double>{1, 1, 5, 5, -2, 0});

  // midpoint step at alpha=1 with one sample
  Tensor<double> a({1, 1, 1, 2}, {3, 3});
  update_centers(cs, a, {0}, 1.0);
  CHECK(cs.data[0] == doctest::Approx(2.0));
  CHECK(cs.data[1] == doctest::Approx(2.0));
  // categories 1, 2 absent: untouched bit for bit
  CHECK(cs.data[2] == 5.0);
  CHECK(cs.data[3] == 5.0);
  CHECK(cs.data[4] == -2.0);
  CHECK(cs.data[5] == 0.0);

  // alpha 0 is the identity
  std::vector<double> before = cs.data;
  update_centers(cs, a, {0}, 0.0);
  CHECK(cs.data == before);
}

TEST_CASE("center update averages within a category") {
  Centers<double> cs = Centers<double>::zeros(1, 1, 1, 1);
  cs.data = {0.0};
  Tensor<double> a({2, 1, 1, 1}, {3.0, 9.0});
  // sum (C - a_i) = (0-3)+(0-9) = -12; /(1+2) = -4; C <- 0 - 1*(-4) = 4
  update_centers(cs, a, {0, 0}, 1.0);
  CHECK(cs.data[0] == doctest::Approx(4.0));
}

TEST_CASE("aggregation loss uniform hand value") {
  // 1x2 grid, 2 channels, all-zero logits -> per-position [0.5, 0.5]
  Tensor<double> r({1, 2, 1, 2}, {0, 0, 0, 0});
  CHECK(loss_race(r, {{1}}).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("aggregation loss attains the label entropy at a perfect match") {
  // logits chosen so aggregate p-bar equals l-bar exactly: each position
  // fully committed to one channel; 1 of 4 positions on channel 0.
  const double big = 50.0;
  Tensor<double> r({1, 3, 2, 2}, {big, 0, 0, 0,      // ch 0 wins at position 0
                                  0, big, 0, 0,      // ch 1 wins at position 1
                                  0, 0, big, big});  // blank elsewhere
  const double l0 = 0.25, l1 = 0.25, lb = 0.5;
  const double entropy = -(l0 * std::log(l0) + l1 * std::log(l1) + lb * std::log(lb));
  CHECK(loss_race(r, {{1, 1}}).item() == doctest::Approx(entropy).epsilon(1e-9));
}

TEST_CASE("aggregation loss rejects overfull counts") {
  Tensor<double> r({1, 3, 1, 2}, {0, 0, 0, 0, 0, 0});
  CHECK(throws_containing([&] { loss_race(r, {{2, 1}}); }, {"3", "2"}));
}

TEST_CASE("aggregation loss equals the brute-force oracle") {
  RandomStream rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int B = 1 + static_cast<int>(rng.uniform_int(3));
    const int N = 2 + static_cast<int>(rng.uniform_int(5));   // up to 6 channels
    const int H = 1 + static_cast<int>(rng.uniform_int(4));   // up to 4
    const int W = 1 + static_cast<int>(rng.uniform_int(4));
    const int T = H * W;
    Tensor<double> r({B, N, H, W});
    for (auto& v : r.data()) v = rng.normal() * 2.0;
    std::vector<std::vector<int>> counts(static_cast<size_t>(B));
    for (auto& row : counts) {
      row.assign(static_cast<size_t>(N - 1), 0);
      int budget = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(T) + 1));
      while (budget > 0) {
        row[static_cast<size_t>(rng.uniform_int(static_cast<uint64_t>(N - 1)))]++;
        --budget;
      }
    }
    const double got = loss_race(r, counts).item();
    const double want = race_oracle(r.data(), B, N, H, W, counts);
    CHECK(std::fabs(got - want) <= 1e-12);
  }
}

TEST_CASE("aggregate probabilities stay normalized inside the loss") {
  // any input: if the label is uniform over all channels, the loss is
  // bounded below by the entropy of that label; equality only at p-bar = l-bar
  RandomStream rng(5);
  Tensor<double> r({1, 4, 2, 2});
  for (auto& v : r.data()) v = rng.normal();
  // labels: one each for 3 radicals, 1 blank -> l-bar uniform over 4
  const double want_min = std::log(4.0);
  CHECK(loss_race(r, {{1, 1, 1}}).item() >= want_min - 1e-9);
}

TEST_CASE("loss gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    auto ad = random_tensor<double>({2, 3, 2, 2}, seed);
    auto at = random_tensor<double>({2, 3, 2, 2}, seed + 9);
    ad.set_requires_grad(true);
    at.set_requires_grad(true);
    CHECK(gradcheck({&ad, &at}, [&] { return loss_hpe(ad, at); }).max_rel_err <= 1e-5);

    auto logits = random_tensor<double>({3, 4}, seed + 17);
    logits.set_requires_grad(true);
    std::vector<int> cats = {0, static_cast<int>(seed % 4), 3};
    CHECK(gradcheck({&logits}, [&] { return loss_kcls(logits, cats); }).max_rel_err <= 1e-5);

    Centers<double> cs = Centers<double>::zeros(4, 3, 2, 2);
    RandomStream crng(seed + 31);
    for (auto& v : cs.data) v = crng.normal();
    CHECK(gradcheck({&at}, [&] { return loss_center(at, {1, 2}, cs); }).max_rel_err <= 1e-5);

    auto r = random_tensor<double>({2, 4, 2, 2}, seed + 43);
    r.set_requires_grad(true);
    std::vector<std::vector<int>> counts = {{1, 0, 2}, {0, 1, 1}};
    CHECK(gradcheck({&r}, [&] { return loss_race(r, counts); }).max_rel_err <= 1e-5);

    // weighted total through the report path
    CHECK(gradcheck({&ad, &at, &logits, &r},
                    [&] {
                      LossTerms<double> terms;
                      terms.hpe = loss_hpe(ad, at);
                      terms.kcls_d = loss_kcls(logits, cats);
                      terms.kcls_t = loss_kcls(logits, cats);
                      terms.center = loss_center(at, {1, 2}, cs);
                      terms.race = loss_race(r, counts);
                      return loss_total(terms, LossWeights{}).total_tensor;
                    })
              .max_rel_err <= 1e-5);
  }
}

TEST_CASE("weighted total arithmetic") {
  LossTerms<double> terms;
  terms.hpe = Tensor<double>({}, {2.0});
  terms.kcls_d = Tensor<double>({}, {1.0});
  terms.kcls_t = Tensor<double>({}, {1.0});
  terms.center = Tensor<double>({}, {10.0});
  terms.race = Tensor<double>({}, {0.5});
  LossReport<double> rep = loss_total(terms, LossWeights{});
  CHECK(rep.total == doctest::Approx(2.55).epsilon(1e-9));
  CHECK(rep.total_tensor.item() == doctest::Approx(2.55).epsilon(1e-6));
  CHECK(rep.hpe == 2.0);
  CHECK(rep.race == 0.5);

  LossWeights only_race;
  only_race.use_hpe = only_race.use_kcls_d = only_race.use_kcls_t = only_race.use_center = false;
  LossTerms<double> single;
  single.race = Tensor<double>({}, {0.7});
  CHECK(loss_total(single, only_race).total == doctest::Approx(0.7));

  // total tracks the weighted sum of enabled components
  LossReport<double> full = loss_total(terms, LossWeights{});
  const double recomputed = 1.0 * full.hpe + 0.01 * full.kcls_d + 0.01 * full.kcls_t +
                            0.003 * full.center + 1.0 * full.race;
  CHECK(std::fabs(full.total - recomputed) <= 1e-6 * std::max(1.0, std::fabs(recomputed)));
}

TEST_CASE("loss weights validate") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.w_hpe = -0.5;
  CHECK_THROWS(w.validate());
  LossWeights none;
  none.use_hpe = none.use_kcls_d = none.use_kcls_t = none.use_center = none.use_race = false;
  CHECK_THROWS(none.validate());
}

TEST_CASE("losses are non-negative on random inputs") {
  RandomStream rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> ad({2, 2, 2, 2}), at({2, 2, 2, 2});
    for (auto& v : ad.data()) v = rng.normal();
    for (auto& v : at.data()) v = rng.normal();
    CHECK(loss_hpe(ad, at).item() >= 0.0);

    Tensor<double> logits({2, 5});
    for (auto& v : logits.data()) v = rng.normal();
    CHECK(loss_kcls(logits, {1, 4}).item() >= 0.0);

    Tensor<double> r({2, 3, 2, 2});
    for (auto& v : r.data()) v = rng.normal();
    CHECK(loss_race(r, {{1, 1}, {0, 2}}).item() >= 0.0);
  }
}

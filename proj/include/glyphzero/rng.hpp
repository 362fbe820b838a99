#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gz {

// Deterministic PRNG (xoshiro256++) with all derived draws implemented here,
// so sequences never depend on the standard library build. Every source of
// randomness in the project flows through one of these streams.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed);

  uint64_t next_u64();
  // [0,1) with 53 bits of mantissa.
  double uniform();
  // [lo,hi)
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; the spare draw is cached.
  double normal();
  // [0,n); n must be > 0.
  uint64_t uniform_int(uint64_t n);
  bool coin() { return (next_u64() >> 63) != 0; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      T tmp = v[i - 1];
      v[i - 1] = v[j];
      v[j] = tmp;
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a root seed and a label, e.g.
// substream_seed(seed, "init") or substream_seed(seed, "augment.7.12").
// Stable across platforms and runs.
uint64_t substream_seed(uint64_t root, std::string_view name);

// FNV-1a over raw bytes; used for config and manifest digests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t basis = 1469598103934665603ull);

}  // namespace gz

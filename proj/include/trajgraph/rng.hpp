#pragma once
// Counter-style deterministic RNG. Every trajectory owns an independent
// stream derived from (global_seed, stream_id, index), so parallel batch
// generation is reproducible regardless of worker count.
#include <cstdint>
#include <cmath>

namespace trajgraph {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on (0,1); never returns 0 or 1, safe under log().
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  long uniform_int(long lo, long hi) {
    return lo + static_cast<long>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller; second value cached so draw order is well defined.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream ids keep train/validation/evaluation draws disjoint by construction.
enum : std::uint64_t {
  kStreamTrain = 0,
  kStreamVal = 1,
  kStreamEval = 2,
  kStreamProbe = 3,
};

inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t stream_id,
                                 std::uint64_t index) {
  std::uint64_t s = global_seed;
  std::uint64_t h = splitmix64(s);
  s = h ^ (stream_id * 0xd1342543de82ef95ULL + 1);
  h = splitmix64(s);
  s = h ^ (index * 0xaf251af3b0f025b5ULL + 1);
  return splitmix64(s);
}

inline Rng stream_rng(std::uint64_t global_seed, std::uint64_t stream_id, std::uint64_t index) {
  return Rng(derive_seed(global_seed, stream_id, index));
}

}  // namespace trajgraph

#pragma once
// Reproducible random streams. Every replicate gets its own stream derived
// from (master_seed, stream_id, salt), so results never depend on worker
// count or scheduling. Only transforms with fully specified output are used:
// std::mt19937_64 (bit-exact per the standard) plus hand-rolled uniform and
// Box-Muller mappings; std::*_distribution is avoided because its output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

namespace mlelab {

// SplitMix64 finalizer; dispersal quality is enough for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id,
                                 std::uint64_t salt) {
  std::uint64_t h = mix64(master_seed + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ (stream_id + 0xbf58476d1ce4e5b9ULL));
  h = mix64(h ^ (salt + 0x94d049bb133111ebULL));
  return h;
}

// One independent substream. Distinct (stream_id, salt) pairs under the same
// master seed behave as independent sources; identical keys replay exactly.
class SeededStream {
 public:
  SeededStream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t salt = 0)
      : master_seed_(master_seed),
        stream_id_(stream_id),
        gen_(derive_seed(master_seed, stream_id, salt)) {}

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Uniform on the open interval (0,1); never returns an endpoint, so
  // log(u) and tan(pi*(u-1/2)) stay finite.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare half of each pair is cached
  // inside this stream only, keeping replay exact per stream.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mlelab

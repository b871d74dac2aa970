#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rmas {

// Error taxonomy shared across the library. `kind` decides how callers map a
// failure onto process exit codes: config errors are usage mistakes, the rest
// are runtime failures.
enum class ErrorKind {
  dimension,   // shape or width mismatch
  index,       // out-of-range access
  capacity,    // sequence exceeds configured maximum
  degenerate,  // mathematically undefined input (zero norm, bad distribution)
  numeric,     // non-finite value produced
  config,      // invalid configuration or arguments
  io,          // filesystem failure
  format,      // malformed file content
};

struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

inline void require(bool cond, ErrorKind k, const std::string& msg) {
  if (!cond) fail(k, msg);
}

// splitmix64, used to derive independent seed streams from one base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d649fbb9b0a1c5ULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream + 0x51ed270b0f4aULL));
}

// Deterministic RNG. The generator is std::mt19937_64; the normal transform is
// pinned here (Box-Muller) so sampled weights are reproducible byte-for-byte
// regardless of how the standard library implements its distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // xorshift-multiply step of splitmix64; simple, fast, and fully pinned.
    return mix_seed(state_ += 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, ErrorKind::degenerate, "Rng::below requires n > 0");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t v;
    do { v = next_u64(); } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller. One value per call; the spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do { u1 = uniform(); } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit, used for file checksums and dataset partitioning.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rmas

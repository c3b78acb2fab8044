#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cgan/tensor.hpp"

namespace cgan {

// SplitMix64 finalizer: stateless avalanche mix for deriving independent
// seeds from (seed, index) pairs without touching any stream state.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ull));
}

// Deterministic RNG used everywhere in the project. Normal deviates come from
// Box-Muller without spare caching so the stream position is exactly two
// uniform draws per sample, which keeps serialized state round-trippable.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Inclusive integer range [lo, hi] via rejection-free modular mapping over
  // the full 64-bit state (bias is negligible for the small ranges used here,
  // but use Lemire-style rejection to stay exact).
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw std::runtime_error("rng: empty integer range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(gen_());  // full range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return lo + static_cast<int64_t>(x % span);
  }

  double normal() {
    // u1 in (0,1]: avoid log(0).
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <class T>
  void fill_normal(Tensor<T>& t, double stddev = 1.0) {
    for (auto& x : t.v) x = static_cast<T>(normal() * stddev);
  }

  template <class T>
  void fill_uniform(Tensor<T>& t, double a, double b) {
    for (auto& x : t.v) x = static_cast<T>(uniform(a, b));
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("rng: failed to restore state");
  }

  // Independent child stream: mixes the parent draw so sibling streams differ.
  Rng child(uint64_t tag) {
    uint64_t s = gen_() ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    return Rng(s);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cgan

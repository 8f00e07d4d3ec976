#ifndef TAGGER_RNG_HPP_
#define TAGGER_RNG_HPP_

#include <cstdint>

namespace tagger {

// xoshiro256** with splitmix64 seeding. Every random draw in the project goes
// through this generator so runs are bit-exact for a given seed; the standard
// library distributions are implementation-defined and never used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n); n >= 1.
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p);

  // Standard normal via Box-Muller with a cached spare.
  double gaussian();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tagger

#endif  // TAGGER_RNG_HPP_

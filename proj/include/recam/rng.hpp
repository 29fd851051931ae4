#pragma once

#include <cstdint>
#include <string_view>

namespace recam {

// Deterministic pseudorandom generator (splitmix64 core). All randomness in
// the project flows through this type so runs are bit-reproducible across
// platforms; std:: distributions are avoided on purpose because their output
// sequences are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();

  // Uniform integer in [0, n). Throws ContractError unless n is positive.
  int64_t uniform_int(int64_t n);

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();

  // Independent child generator keyed by name. Children derive from the
  // construction seed, not the current state, so the child stream does not
  // depend on how many draws the parent has made and parameter tensors can
  // be initialized in any order without changing their contents.
  Rng split(std::string_view name) const;

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a hash of a string, used for keyed splitting.
uint64_t hash_name(std::string_view name);

}  // namespace recam

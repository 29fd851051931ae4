#include "recam/rng.hpp"

#include <cmath>
#include <string>

#include "recam/errors.hpp"

namespace recam {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t hash_name(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  // Top 53 bits give a double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) {
    throw ContractError("uniform_int: bound must be positive, got " +
                        std::to_string(n));
  }
  // Rejection-free modulo is fine here: n is tiny compared to 2^64, so the
  // bias is far below anything observable at desk scale.
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  has_spare_ = true;
  return r * std::cos(kTwoPi * u2);
}

Rng Rng::split(std::string_view name) const {
  uint64_t child = seed_ ^ hash_name(name);
  // One scramble round so child streams of nearby parents decorrelate.
  splitmix64(child);
  return Rng(child);
}

}  // namespace recam

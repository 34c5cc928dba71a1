#include "g2l/rng.hpp"

#include <cmath>
#include <cstdio>

#include "g2l/errors.hpp"

namespace g2l {

double Rng::normal() {
  // Discard-the-spare Box-Muller: exactly two uniforms per call in the common
  // path, so checkpointed streams replay identically.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::string Rng::state_hex() const {
  char buf[4 * 16 + 4] = {};
  std::snprintf(buf, sizeof(buf), "%016llx:%016llx:%016llx:%016llx",
                static_cast<unsigned long long>(state_[0]),
                static_cast<unsigned long long>(state_[1]),
                static_cast<unsigned long long>(state_[2]),
                static_cast<unsigned long long>(state_[3]));
  return buf;
}

void Rng::restore_hex(const std::string& hex) {
  unsigned long long w[4] = {};
  if (std::sscanf(hex.c_str(), "%16llx:%16llx:%16llx:%16llx", &w[0], &w[1], &w[2], &w[3]) != 4) {
    throw ParseError("rng state: expected four ':'-separated 16-digit hex words, got '" + hex + "'");
  }
  for (int i = 0; i < 4; ++i) state_[i] = w[i];
  if (state_[0] == 0 && state_[1] == 0 && state_[2] == 0 && state_[3] == 0) {
    throw ParseError("rng state: all-zero state is invalid for xoshiro256++");
  }
}

}  // namespace g2l

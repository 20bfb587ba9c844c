#include "tavi/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "tavi/errors.hpp"

namespace tavi::numerics {

namespace {

// splitmix64 finalizer; full-period bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_label(std::string_view label) {
  // FNV-1a over the label bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(seed_ ^ mix64(counter_));
}

double RngStream::uniform() {
  // Top 53 bits give a double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw ConfigError("uniform_index: n must be positive");
  // Lemire's multiply-shift range reduction (bias is negligible at any n we
  // use, and the result is fully deterministic).
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::size_t>(m >> 64);
}

RngStream RngStream::derive(std::string_view label) const {
  return RngStream(mix64(seed_ ^ hash_label(label)));
}

}  // namespace tavi::numerics

#include "analysparse/rng.hpp"

#include <cmath>
#include <numbers>

namespace analysparse {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::Data: return "data";
    case Stream::Init: return "init";
    case Stream::Batch: return "batch";
    case Stream::Baseline: return "baseline";
    case Stream::Eval: return "eval";
    case Stream::Power: return "power";
  }
  return "unknown";
}

Rng::Rng(std::uint64_t seed, Stream stream)
    : key_(mix(mix(seed) ^ (static_cast<std::uint64_t>(stream) * kGolden))) {}

Rng Rng::derive(std::uint64_t index) const {
  return Rng(mix(key_ ^ mix(index + kGolden)));
}

std::uint64_t Rng::next_u64() {
  return mix(key_ + (++counter_) * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
  const unsigned __int128 product =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(product >> 64);
}

}  // namespace analysparse

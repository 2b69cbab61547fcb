#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace analysparse {

/// Purpose tag separating independent random streams drawn from one seed.
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Batch = 3,
  Baseline = 4,
  Eval = 5,
  Power = 6,
};

std::string_view stream_name(Stream s);

/// Counter-based generator: the n-th draw is a pure function of (key, n), so
/// identical (seed, stream) pairs replay identical sequences on any platform.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream);

  /// Independent child stream, e.g. one per batch item.
  Rng derive(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  std::uint64_t key() const noexcept { return key_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace analysparse

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "analysparse/rng.hpp"
#include "analysparse/tensor.hpp"

namespace analysparse {

enum class AmplitudeMode {
  Fixed,    // levels alternate 0, 10, 0, ...
  Uniform,  // each level iid U[0, 10]
};

std::string to_string(AmplitudeMode mode);
AmplitudeMode parse_amplitude_mode(const std::string& text);

struct DataConfig {
  std::size_t p = 64;
  std::size_t L = 0;
  std::size_t n_jumps = 4;
  AmplitudeMode amp_mode = AmplitudeMode::Fixed;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct SignalPair {
  Tensor w;
  Tensor y;

  friend bool operator==(const SignalPair&, const SignalPair&) = default;
};

struct Dataset {
  DataConfig config;
  std::vector<SignalPair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Piecewise-constant ground truth with exactly n_jumps jumps placed
/// uniformly without replacement at positions 1..p-1.
Tensor gen_signal(const DataConfig& cfg, Rng& rng);

/// y = w + sigma * N(0, I).
Tensor add_noise(const Tensor& w, double sigma, Rng& rng);

/// p x p circulant first-difference operator: column c holds -1 at row c and
/// +1 at row (c + 1) mod p.
Tensor make_dtv(std::size_t p);

/// `split` selects an independent sub-stream (0 = train, 1 = validation, ...).
Dataset gen_dataset(const DataConfig& cfg, std::uint64_t split = 0);

/// Binary layout, little-endian: "ADSL", u16 version = 1, u64 L, u64 p,
/// f64 sigma, then L records of p doubles w followed by p doubles y. A
/// sibling "<path>.cfg" carries the full DataConfig as key=value lines.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path config_sidecar_path(const std::filesystem::path& dataset_path);
std::string data_config_text(const DataConfig& cfg);

inline constexpr char kDatasetMagic[4] = {'A', 'D', 'S', 'L'};
inline constexpr std::uint16_t kDatasetVersion = 1;

}  // namespace analysparse

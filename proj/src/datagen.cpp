#include "analysparse/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "analysparse/config.hpp"
#include "analysparse/errors.hpp"

namespace analysparse {

std::string to_string(AmplitudeMode mode) {
  return mode == AmplitudeMode::Fixed ? "fixed-0-10" : "uniform-0-10";
}

AmplitudeMode parse_amplitude_mode(const std::string& text) {
  if (text == "fixed-0-10" || text == "fixed") return AmplitudeMode::Fixed;
  if (text == "uniform-0-10" || text == "uniform") return AmplitudeMode::Uniform;
  throw ConfigError("unknown amplitude mode '" + text + "'");
}

void DataConfig::validate() const {
  if (p < 1) throw ConfigError("data.p must be positive");
  if (n_jumps >= p) throw ConfigError("data.n_jumps must be smaller than data.p");
  if (!(sigma >= 0.0)) throw ConfigError("data.sigma must be non-negative");
}

Tensor gen_signal(const DataConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t p = cfg.p;

  // Partial Fisher-Yates over {1, ..., p-1}.
  std::vector<std::size_t> positions(p - 1);
  for (std::size_t i = 0; i < p - 1; ++i) positions[i] = i + 1;
  for (std::size_t i = 0; i < cfg.n_jumps; ++i) {
    const std::size_t j = i + rng.uniform_index(positions.size() - i);
    std::swap(positions[i], positions[j]);
  }
  positions.resize(cfg.n_jumps);
  std::sort(positions.begin(), positions.end());

  std::vector<double> levels(cfg.n_jumps + 1);
  if (cfg.amp_mode == AmplitudeMode::Fixed) {
    for (std::size_t s = 0; s < levels.size(); ++s) levels[s] = (s % 2 == 0) ? 0.0 : 10.0;
  } else {
    for (std::size_t s = 0; s < levels.size(); ++s) {
      do {
        levels[s] = 10.0 * rng.uniform();
      } while (s > 0 && levels[s] == levels[s - 1]);
    }
  }

  Tensor w(p, 1);
  std::size_t segment = 0;
  for (std::size_t i = 0; i < p; ++i) {
    if (segment < positions.size() && positions[segment] == i) ++segment;
    w[i] = levels[segment];
  }
  return w;
}

Tensor add_noise(const Tensor& w, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  Tensor y = w;
  for (auto& v : y.values()) v += sigma * rng.normal();
  return y;
}

Tensor make_dtv(std::size_t p) {
  if (p < 2) throw DimensionError("make_dtv: p must be at least 2");
  Tensor D(p, p);
  for (std::size_t c = 0; c < p; ++c) {
    D(c, c) = -1.0;
    D((c + 1) % p, c) = 1.0;
  }
  return D;
}

Dataset gen_dataset(const DataConfig& cfg, std::uint64_t split) {
  cfg.validate();
  Rng rng = Rng(cfg.seed, Stream::Data).derive(split);
  Dataset d;
  d.config = cfg;
  d.pairs.reserve(cfg.L);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    Tensor w = gen_signal(cfg, rng);
    Tensor y = add_noise(w, cfg.sigma, rng);
    d.pairs.push_back({std::move(w), std::move(y)});
  }
  return d;
}

std::filesystem::path config_sidecar_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".cfg";
  return p;
}

std::string data_config_text(const DataConfig& cfg) {
  KeyValues kv;
  kv.set("p", std::to_string(cfg.p));
  kv.set("L", std::to_string(cfg.L));
  kv.set("n_jumps", std::to_string(cfg.n_jumps));
  kv.set("amp_mode", to_string(cfg.amp_mode));
  kv.set("sigma", format_double(cfg.sigma));
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("dtv_convention", "circulant");
  return kv.to_text();
}

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xFF));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated dataset: expected ") + what, pos_);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  const std::size_t p = d.config.p;
  std::vector<unsigned char> out;
  out.reserve(30 + d.pairs.size() * 2 * p * 8);
  out.insert(out.end(), std::begin(kDatasetMagic), std::end(kDatasetMagic));
  put_u16(out, kDatasetVersion);
  put_u64(out, d.pairs.size());
  put_u64(out, p);
  put_f64(out, d.config.sigma);
  for (const auto& pair : d.pairs) {
    if (pair.w.size() != p || pair.y.size() != p) throw DimensionError("save_dataset: signal length differs from p");
    for (double v : pair.w.values()) put_f64(out, v);
    for (double v : pair.y.values()) put_f64(out, v);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("failed writing " + path.string());

  std::ofstream side(config_sidecar_path(path), std::ios::trunc);
  DataConfig cfg = d.config;
  cfg.L = d.pairs.size();
  side << data_config_text(cfg);
  if (!side) throw Error("failed writing config sidecar for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open dataset " + path.string(), 0);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kDatasetMagic, 4) != 0) throw FormatError("bad magic", 0);
  r.skip(4);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::uint64_t L = r.u64("pair count");
  const std::size_t p_at = r.offset();
  const std::uint64_t p = r.u64("signal length");
  const double sigma = r.f64("sigma");
  if (p == 0 && L > 0) throw FormatError("zero signal length", p_at);
  const std::size_t remaining = bytes.size() - r.offset();
  if (p != 0 && L > remaining / (2 * 8 * p)) {
    throw FormatError("truncated dataset: " + std::to_string(L) + " records of length " +
                          std::to_string(p) + " do not fit",
                      bytes.size());
  }

  Dataset d;
  d.config.p = p;
  d.config.L = L;
  d.config.sigma = sigma;
  const auto side = config_sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const KeyValues kv = KeyValues::load(side);
    d.config.n_jumps = kv.get_u64("n_jumps", d.config.n_jumps);
    d.config.amp_mode = parse_amplitude_mode(kv.get_string("amp_mode", "fixed-0-10"));
    d.config.seed = kv.get_u64("seed", 0);
  }
  d.pairs.reserve(L);
  for (std::uint64_t l = 0; l < L; ++l) {
    Tensor w(p, 1);
    Tensor y(p, 1);
    for (auto& v : w.values()) v = r.f64("record");
    for (auto& v : y.values()) v = r.f64("record");
    d.pairs.push_back({std::move(w), std::move(y)});
  }
  if (r.offset() != bytes.size()) throw FormatError("trailing bytes after records", r.offset());
  return d;
}

}  // namespace analysparse

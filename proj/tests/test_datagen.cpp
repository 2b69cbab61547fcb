#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "analysparse/datagen.hpp"
#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

using namespace analysparse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "analysparse_test_datagen";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

std::size_t jumps(const Tensor& w) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) n += w[i + 1] != w[i];
  return n;
}

DataConfig config(std::size_t p, std::size_t L, double sigma, AmplitudeMode mode = AmplitudeMode::Fixed) {
  DataConfig c;
  c.p = p;
  c.L = L;
  c.sigma = sigma;
  c.amp_mode = mode;
  c.seed = 99;
  return c;
}

}  // namespace

TEST_CASE("make_dtv") {
  CHECK(make_dtv(3) == Tensor::matrix({{-1, 0, 1}, {1, -1, 0}, {0, 1, -1}}));
  const Tensor d = make_dtv(9);
  for (std::size_t c = 0; c < 9; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 9; ++r) s += d(r, c);
    CHECK(s == 0.0);
  }
  CHECK(is_zero(matvec_t(d, Tensor(9, 1, 4.2))));
}

TEST_CASE("fixed-mode signals") {
  DataConfig c = config(32, 0, 0.0);
  Rng rng(1, Stream::Data);
  for (int i = 0; i < 200; ++i) {
    const Tensor w = gen_signal(c, rng);
    CHECK(jumps(w) == 4);
    CHECK(w[0] == 0.0);
    for (double v : w.values()) CHECK((v == 0.0 || v == 10.0));
    // Circulant TV coefficients: the four jumps, plus the wrap when the ends differ.
    const Tensor coeffs = matvec_t(make_dtv(32), w);
    std::size_t nnz = 0;
    for (double v : coeffs.values()) nnz += v != 0.0;
    CHECK(nnz == 4 + (w[0] != w[31] ? 1 : 0));
  }
  c.n_jumps = 0;
  CHECK(gen_signal(c, rng) == Tensor(32, 1));
}

TEST_CASE("uniform-mode signals") {
  const DataConfig c = config(16, 0, 0.0, AmplitudeMode::Uniform);
  Rng rng(2, Stream::Data);
  double sum = 0.0;
  std::size_t segments = 0;
  for (int i = 0; i < 10000; ++i) {
    const Tensor w = gen_signal(c, rng);
    REQUIRE(jumps(w) == 4);
    sum += w[0];
    ++segments;
    for (std::size_t k = 1; k < 16; ++k) {
      REQUIRE(w[k] >= 0.0);
      REQUIRE(w[k] <= 10.0);
      if (w[k] != w[k - 1]) {
        sum += w[k];
        ++segments;
      }
    }
  }
  CHECK(std::abs(sum / segments - 5.0) < 0.2);
}

TEST_CASE("jump positions are uniform over 1..p-1") {
  const DataConfig c = config(32, 0, 0.0);
  Rng rng(3, Stream::Data);
  const int n = 10000;
  std::vector<int> count(32, 0);
  for (int i = 0; i < n; ++i) {
    const Tensor w = gen_signal(c, rng);
    for (std::size_t k = 1; k < 32; ++k) count[k] += w[k] != w[k - 1];
  }
  const double q = 4.0 / 31.0;
  const double se = std::sqrt(n * q * (1 - q));
  CHECK(count[0] == 0);
  for (std::size_t k = 1; k < 32; ++k) CHECK(std::abs(count[k] - n * q) < 3.0 * se + 1.0);
}

TEST_CASE("noise") {
  Rng rng(4, Stream::Data);
  const Tensor w = Tensor(8, 1, 3.0);
  CHECK(add_noise(w, 0.0, rng) == w);

  const double sigma = 1.7;
  const int draws = 100000 / 8;
  double ss = 0.0;
  std::vector<double> cov(8 * 8, 0.0);
  for (int i = 0; i < draws; ++i) {
    const Tensor e = sub(add_noise(w, sigma, rng), w);
    for (std::size_t a = 0; a < 8; ++a) {
      ss += e[a] * e[a];
      for (std::size_t b = 0; b < 8; ++b) cov[a * 8 + b] += e[a] * e[b];
    }
  }
  CHECK(std::abs(ss / (draws * 8.0) / (sigma * sigma) - 1.0) < 0.05);
  // Off-diagonal sample covariances within 3 standard errors of zero.
  const double se = sigma * sigma / std::sqrt(static_cast<double>(draws));
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a + 1; b < 8; ++b) CHECK(std::abs(cov[a * 8 + b] / draws) < 3.0 * se);

  Rng r1(5, Stream::Data), r2(5, Stream::Data);
  CHECK(add_noise(w, 1.0, r1) == add_noise(w, 1.0, r2));
}

TEST_CASE("gen_dataset is deterministic and splits are independent") {
  const DataConfig c = config(8, 5, 0.5);
  const Dataset a = gen_dataset(c, 0), b = gen_dataset(c, 0), v = gen_dataset(c, 1);
  CHECK(a == b);
  CHECK(a.size() == 5);
  CHECK_FALSE(a.pairs[0] == v.pairs[0]);
  for (const auto& pr : a.pairs) CHECK(jumps(pr.w) == 4);
}

TEST_CASE("save/load round trip") {
  for (std::size_t L : {std::size_t{0}, std::size_t{7}}) {
    const Dataset d = gen_dataset(config(8, L, 1.25, AmplitudeMode::Uniform), 0);
    const fs::path path = scratch("rt_" + std::to_string(L) + ".adsl");
    save_dataset(d, path);
    const Dataset back = load_dataset(path);
    CHECK(back == d);
    CHECK(fs::file_size(path) == 30 + L * 2 * 8 * 8);
    CHECK(fs::exists(config_sidecar_path(path)));
  }
}

TEST_CASE("binary layout is little-endian as documented") {
  DataConfig c = config(2, 1, 0.5);
  c.n_jumps = 1;
  const Dataset d = gen_dataset(c, 0);
  const fs::path path = scratch("layout.adsl");
  save_dataset(d, path);
  const auto b = read_bytes(path);
  REQUIRE(b.size() == 30 + 32);
  CHECK(std::string(b.begin(), b.begin() + 4) == "ADSL");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 1);   // L = 1
  CHECK(b[14] == 2);  // p = 2
  // sigma = 0.5 = 0x3FE0000000000000
  CHECK(static_cast<unsigned char>(b[29]) == 0x3F);
  CHECK(static_cast<unsigned char>(b[28]) == 0xE0);
}

TEST_CASE("corrupt files raise format errors with offsets") {
  DataConfig c = config(4, 3, 1.0);
  c.n_jumps = 2;
  const Dataset d = gen_dataset(c, 0);
  const fs::path good = scratch("good.adsl");
  save_dataset(d, good);
  const auto bytes = read_bytes(good);

  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    write_bytes(scratch("magic.adsl"), b);
    try {
      load_dataset(scratch("magic.adsl"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("bad version") {
    auto b = bytes;
    b[4] = 7;
    write_bytes(scratch("version.adsl"), b);
    try {
      load_dataset(scratch("version.adsl"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("truncated") {
    auto b = bytes;
    b.resize(b.size() - 5);
    write_bytes(scratch("trunc.adsl"), b);
    CHECK_THROWS_AS(load_dataset(scratch("trunc.adsl")), FormatError);
    b.resize(10);
    write_bytes(scratch("trunc2.adsl"), b);
    CHECK_THROWS_AS(load_dataset(scratch("trunc2.adsl")), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto b = bytes;
    b.push_back(0);
    write_bytes(scratch("trail.adsl"), b);
    CHECK_THROWS_AS(load_dataset(scratch("trail.adsl")), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset(scratch("nope.adsl")), FormatError); }
}

TEST_CASE("config validation") {
  DataConfig c = config(4, 1, 0.0);
  c.n_jumps = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = config(4, 1, -1.0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_amplitude_mode("uniform-0-10") == AmplitudeMode::Uniform);
  CHECK_THROWS_AS(parse_amplitude_mode("gaussian"), ConfigError);
}

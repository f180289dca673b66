#include <cmath>
#include <cstdio>
#include <fstream>

#include "cvc/entropy.hpp"
#include "cvc/rangecoder.hpp"
#include "doctest.h"

using namespace cvc;

namespace {

SymbolPlane gaussian_plane(uint64_t seed, size_t count) {
  Rng rng(seed);
  const GaussianCdfBank& bank = cdf_bank();
  SymbolPlane plane;
  plane.symbols.reserve(count);
  plane.scale_idx.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const double sigma = std::exp(rng.uniform(std::log(0.15), std::log(8.0)));
    plane.scale_idx.push_back(uint16_t(bank.index_for_sigma(sigma)));
    plane.symbols.push_back(int32_t(std::llround(rng.normal() * sigma)));
  }
  return plane;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("range coder: raw bit round trip") {
  RangeEncoder enc;
  Rng rng(40);
  std::vector<uint32_t> values;
  for (int i = 0; i < 1000; ++i) {
    int bits = 1 + int(rng.next_u64() % 16);
    uint32_t v = uint32_t(rng.next_u64()) & ((1u << bits) - 1);
    values.push_back((uint32_t(bits) << 16) | v);
    enc.encode_raw(v, bits);
  }
  auto bytes = enc.finish();
  RangeDecoder dec(bytes.data(), bytes.size());
  for (uint32_t packed : values) {
    int bits = int(packed >> 16);
    CHECK(dec.decode_raw(bits) == (packed & 0xFFFFu));
  }
}

TEST_CASE("range coder: empty message is at most 8 bytes and round-trips") {
  RangeEncoder enc;
  auto bytes = enc.finish();
  CHECK(bytes.size() <= 8);
  RangeDecoder dec(bytes.data(), bytes.size());  // constructible; nothing to decode
  (void)dec;
}

TEST_CASE("symbol coding: lossless round trip on 10k random symbols") {
  SymbolPlane plane = gaussian_plane(41, 10000);
  const GaussianCdfBank& bank = cdf_bank();
  auto bytes = encode_symbols(plane, bank);
  auto decoded = decode_symbols(bytes.data(), bytes.size(), plane.scale_idx, bank);
  REQUIRE(decoded.size() == plane.symbols.size());
  for (size_t i = 0; i < decoded.size(); ++i) CHECK(decoded[i] == plane.symbols[i]);
}

TEST_CASE("symbol coding: escape path round-trips outliers") {
  const GaussianCdfBank& bank = cdf_bank();
  SymbolPlane plane;
  plane.symbols = {0, 5000, -30000, 30000, -3, 900};
  plane.scale_idx.assign(plane.symbols.size(), uint16_t(bank.index_for_sigma(0.2)));
  auto bytes = encode_symbols(plane, bank);
  auto decoded = decode_symbols(bytes.data(), bytes.size(), plane.scale_idx, bank);
  for (size_t i = 0; i < decoded.size(); ++i) CHECK(decoded[i] == plane.symbols[i]);
}

TEST_CASE("symbol coding: measured bytes within 2% + 32 B of the rate estimate") {
  const GaussianCdfBank& bank = cdf_bank();
  for (uint64_t seed : {42ull, 43ull, 44ull}) {
    SymbolPlane plane = gaussian_plane(seed, 4096 + 2048);
    std::vector<double> sigmas(plane.symbols.size());
    for (size_t i = 0; i < sigmas.size(); ++i) sigmas[i] = bank.sigma(plane.scale_idx[i]);
    const double est_bits = estimate_rate_bits(plane.symbols, sigmas);
    auto bytes = encode_symbols(plane, bank);
    const double measured = double(bytes.size());
    CHECK(measured <= est_bits / 8.0 * 1.02 + 32.0);
    CHECK(measured >= est_bits / 8.0);
  }
}

TEST_CASE("symbol coding: estimate matches direct summation") {
  SymbolPlane plane = gaussian_plane(45, 512);
  const GaussianCdfBank& bank = cdf_bank();
  std::vector<double> sigmas(plane.symbols.size());
  for (size_t i = 0; i < sigmas.size(); ++i) sigmas[i] = bank.sigma(plane.scale_idx[i]);
  double direct = 0.0;
  for (size_t i = 0; i < plane.symbols.size(); ++i) {
    auto phi = [](double t) { return 0.5 * (1.0 + std::erf(t / std::sqrt(2.0))); };
    double p = phi((plane.symbols[i] + 0.5) / sigmas[i]) - phi((plane.symbols[i] - 0.5) / sigmas[i]);
    direct -= std::log2(std::max(p, std::pow(2.0, -15)));
  }
  CHECK(estimate_rate_bits(plane.symbols, sigmas) == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("symbol coding: analytic single-symbol costs") {
  // A symbol with probability 1/2 costs one bit; probability ~1 costs ~0.
  std::vector<int32_t> sym = {0};
  // p(0) = Phi(0.5/s) - Phi(-0.5/s) = 0.5 at s = 0.5 / z(0.75).
  const double s_half = 0.5 / 0.6744897501960817;
  CHECK(estimate_rate_bits(sym, {s_half}) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(estimate_rate_bits(sym, {0.11}) == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("symbol coding: truncated stream raises a decode error") {
  SymbolPlane plane = gaussian_plane(46, 2000);
  const GaussianCdfBank& bank = cdf_bank();
  auto bytes = encode_symbols(plane, bank);
  CHECK_THROWS_AS((void)decode_symbols(bytes.data(), bytes.size() / 2, plane.scale_idx, bank),
                  BitstreamError);
}

TEST_CASE("symbol coding: corruption and wrong tables hit the checksum") {
  SymbolPlane plane = gaussian_plane(47, 2000);
  const GaussianCdfBank& bank = cdf_bank();
  auto bytes = encode_symbols(plane, bank);

  auto corrupted = bytes;
  corrupted[corrupted.size() / 3] ^= 0x40;
  CHECK_THROWS_AS((void)decode_symbols(corrupted.data(), corrupted.size(), plane.scale_idx, bank),
                  BitstreamError);

  auto wrong_idx = plane.scale_idx;
  for (auto& s : wrong_idx) s = uint16_t((s + 60) % GaussianCdfBank::kScales);
  CHECK_THROWS_AS((void)decode_symbols(bytes.data(), bytes.size(), wrong_idx, bank), BitstreamError);
}

TEST_CASE("golden range coder vectors decode bit-exactly") {
  const std::string dir = std::string(CVC_SOURCE_DIR) + "/tests/golden";
  SymbolPlane plane = gaussian_plane(4242, 3000);
  const GaussianCdfBank& bank = cdf_bank();
  auto bytes = encode_symbols(plane, bank);

  auto golden = read_file(dir + "/rangecoder_3000.bin");
  REQUIRE(golden.size() == bytes.size());
  CHECK(std::equal(golden.begin(), golden.end(), bytes.begin()));

  auto decoded = decode_symbols(golden.data(), golden.size(), plane.scale_idx, bank);
  for (size_t i = 0; i < decoded.size(); ++i) CHECK(decoded[i] == plane.symbols[i]);
}

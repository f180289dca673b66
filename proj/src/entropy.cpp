#include "cvc/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "cvc/rangecoder.hpp"

namespace cvc {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

void append_crc(std::vector<uint8_t>& payload, const std::vector<int32_t>& symbols) {
  std::vector<uint8_t> bytes;
  bytes.reserve(symbols.size() * 4);
  for (int32_t s : symbols) {
    uint32_t u = uint32_t(s);
    bytes.push_back(uint8_t(u));
    bytes.push_back(uint8_t(u >> 8));
    bytes.push_back(uint8_t(u >> 16));
    bytes.push_back(uint8_t(u >> 24));
  }
  const uint32_t crc = crc32(bytes.data(), bytes.size());
  payload.push_back(uint8_t(crc));
  payload.push_back(uint8_t(crc >> 8));
  payload.push_back(uint8_t(crc >> 16));
  payload.push_back(uint8_t(crc >> 24));
}

uint32_t symbols_crc(const std::vector<int32_t>& symbols) {
  std::vector<uint8_t> bytes;
  bytes.reserve(symbols.size() * 4);
  for (int32_t s : symbols) {
    uint32_t u = uint32_t(s);
    bytes.push_back(uint8_t(u));
    bytes.push_back(uint8_t(u >> 8));
    bytes.push_back(uint8_t(u >> 16));
    bytes.push_back(uint8_t(u >> 24));
  }
  return crc32(bytes.data(), bytes.size());
}

}  // namespace

GaussianCdfBank::GaussianCdfBank() {
  sigmas_.resize(kScales);
  tables_.resize(kScales);
  const double ratio = std::pow(kSigmaMax / kSigmaMin, 1.0 / double(kScales - 1));
  double s = kSigmaMin;
  for (int i = 0; i < kScales; ++i, s *= ratio) {
    sigmas_[size_t(i)] = s;
    Table& t = tables_[size_t(i)];
    t.radius = std::clamp(int(std::ceil(7.0 * s)), 2, 250);
    const int bins = 2 * t.radius + 2;  // symbols + escape

    // Continuous masses; the escape bin absorbs both tails.
    std::vector<double> pmf(size_t(bins), 0.0);
    double tail = 0.0;
    for (int b = 0; b < bins - 1; ++b) {
      const int sym = b - t.radius;
      pmf[size_t(b)] = normal_cdf((sym + 0.5) / s) - normal_cdf((sym - 0.5) / s);
      tail += pmf[size_t(b)];
    }
    pmf[size_t(bins - 1)] = std::max(1.0 - tail, 1e-12);

    // Deterministic 16-bit quantization with a floor of 1 per bin.
    std::vector<int64_t> freq(size_t(bins), 0);
    int64_t total = 0;
    for (int b = 0; b < bins; ++b) {
      freq[size_t(b)] = std::max<int64_t>(1, int64_t(std::llround(pmf[size_t(b)] * 65536.0)));
      total += freq[size_t(b)];
    }
    while (total != 65536) {
      int best = 0;
      for (int b = 1; b < bins; ++b)
        if (freq[size_t(b)] > freq[size_t(best)]) best = b;
      if (total > 65536) {
        --freq[size_t(best)];
        --total;
      } else {
        ++freq[size_t(best)];
        ++total;
      }
    }
    t.cum.resize(size_t(bins + 1));
    t.cum[0] = 0;
    for (int b = 0; b < bins; ++b) t.cum[size_t(b + 1)] = t.cum[size_t(b)] + uint32_t(freq[size_t(b)]);
  }
}

int GaussianCdfBank::index_for_sigma(double sigma) const {
  if (sigma <= sigmas_.front()) return 0;
  if (sigma >= sigmas_.back()) return kScales - 1;
  auto it = std::lower_bound(sigmas_.begin(), sigmas_.end(), sigma);
  return int(it - sigmas_.begin());
}

const GaussianCdfBank& cdf_bank() {
  static const GaussianCdfBank bank;
  return bank;
}

std::vector<uint8_t> encode_symbols(const SymbolPlane& plane, const GaussianCdfBank& bank) {
  check_contract(plane.symbols.size() == plane.scale_idx.size(),
                 "encode_symbols: symbol/scale length mismatch");
  RangeEncoder rc;
  for (size_t i = 0; i < plane.symbols.size(); ++i) {
    const auto& t = bank.table(plane.scale_idx[i]);
    const int32_t s = plane.symbols[i];
    const int bins = 2 * t.radius + 2;
    if (s >= -t.radius && s <= t.radius) {
      const int b = int(s) + t.radius;
      rc.encode(t.cum[size_t(b)], t.cum[size_t(b + 1)]);
    } else {
      check_contract(s >= -30000 && s <= 30000, "encode_symbols: symbol out of escape range");
      rc.encode(t.cum[size_t(bins - 1)], t.cum[size_t(bins)]);
      rc.encode_raw(uint32_t(s + GaussianCdfBank::kEscapeBias), 16);
    }
  }
  std::vector<uint8_t> payload = rc.finish();
  append_crc(payload, plane.symbols);
  return payload;
}

std::vector<int32_t> decode_symbols(const uint8_t* data, size_t size,
                                    const std::vector<uint16_t>& scale_idx,
                                    const GaussianCdfBank& bank) {
  if (size < 4) throw BitstreamError("symbol substream shorter than its checksum");
  RangeDecoder rc(data, size - 4);
  std::vector<int32_t> symbols(scale_idx.size());
  for (size_t i = 0; i < scale_idx.size(); ++i) {
    const auto& t = bank.table(scale_idx[i]);
    const int bins = 2 * t.radius + 2;
    const uint32_t target = rc.decode_target();
    // Binary search for the bin containing the target.
    int lo = 0, hi = bins - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (t.cum[size_t(mid)] <= target)
        lo = mid;
      else
        hi = mid - 1;
    }
    rc.advance(t.cum[size_t(lo)], t.cum[size_t(lo + 1)]);
    if (lo == bins - 1) {
      symbols[i] = int32_t(rc.decode_raw(16)) - GaussianCdfBank::kEscapeBias;
    } else {
      symbols[i] = lo - t.radius;
    }
  }
  const uint32_t stored = uint32_t(data[size - 4]) | (uint32_t(data[size - 3]) << 8) |
                          (uint32_t(data[size - 2]) << 16) | (uint32_t(data[size - 1]) << 24);
  if (symbols_crc(symbols) != stored)
    throw BitstreamError("symbol checksum mismatch (corrupt stream or wrong model)");
  return symbols;
}

double estimate_rate_bits(const std::vector<int32_t>& symbols, const std::vector<double>& sigmas) {
  check_contract(symbols.size() == sigmas.size(), "estimate_rate: length mismatch");
  constexpr double kProbFloor = 0x1.0p-15;
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const double s = sigmas[i];
    const double p = normal_cdf((symbols[i] + 0.5) / s) - normal_cdf((symbols[i] - 0.5) / s);
    bits -= std::log2(std::max(p, kProbFloor));
  }
  return bits;
}

int32_t quantize_symbol(double value, double mu) {
  const double r = std::round(value - mu);
  return int32_t(std::clamp(r, -30000.0, 30000.0));
}

std::vector<uint16_t> scale_indices_from_sigma(const Tensor& sigma) {
  const GaussianCdfBank& bank = cdf_bank();
  std::vector<uint16_t> idx(size_t(sigma.numel()));
  for (int64_t i = 0; i < sigma.numel(); ++i)
    idx[size_t(i)] = uint16_t(bank.index_for_sigma(sigma.v[size_t(i)]));
  return idx;
}

}  // namespace cvc

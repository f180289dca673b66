#include "cvc/rangecoder.hpp"

namespace cvc {

namespace {
constexpr uint32_t kTopValue = 1u << 24;
}

void RangeEncoder::shift_low() {
  if (uint32_t(low_) < 0xFF000000u || uint32_t(low_ >> 32) != 0) {
    uint8_t carry = uint8_t(low_ >> 32);
    uint8_t byte = cache_;
    do {
      out_.push_back(uint8_t(byte + carry));
      byte = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = uint8_t(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFull) << 8;  // the byte above went into cache/output
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t cum_hi) {
  check_contract(cum_lo < cum_hi && cum_hi <= kTotal, "RangeEncoder: bad cumulative interval");
  const uint32_t r = range_ >> kTotalBits;
  low_ += uint64_t(r) * cum_lo;
  range_ = r * (cum_hi - cum_lo);
  while (range_ < kTopValue) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_raw(uint32_t value, int bits) {
  check_contract(bits > 0 && bits <= 16, "RangeEncoder: raw bits must be in [1,16]");
  // Split into byte chunks so range/total never underflows.
  while (bits > 8) {
    bits -= 8;
    const uint32_t chunk = (value >> bits) & 0xFFu;
    const uint32_t r = range_ >> 8;
    low_ += uint64_t(r) * chunk;
    range_ = r;
    while (range_ < kTopValue) {
      range_ <<= 8;
      shift_low();
    }
  }
  const uint32_t mask = (1u << bits) - 1;
  const uint32_t chunk = value & mask;
  const uint32_t r = range_ >> bits;
  low_ += uint64_t(r) * chunk;
  range_ = r;
  while (range_ < kTopValue) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | read_byte();
}

uint8_t RangeDecoder::read_byte() {
  if (pos_ >= size_) throw BitstreamError("range decoder: truncated stream");
  return data_[pos_++];
}

uint32_t RangeDecoder::decode_target() {
  const uint32_t r = range_ >> RangeEncoder::kTotalBits;
  uint32_t t = code_ / r;
  return t >= RangeEncoder::kTotal ? RangeEncoder::kTotal - 1 : t;
}

void RangeDecoder::advance(uint32_t cum_lo, uint32_t cum_hi) {
  const uint32_t r = range_ >> RangeEncoder::kTotalBits;
  code_ -= r * cum_lo;
  range_ = r * (cum_hi - cum_lo);
  while (range_ < kTopValue) {
    range_ <<= 8;
    code_ = (code_ << 8) | read_byte();
  }
}

uint32_t RangeDecoder::decode_raw(int bits) {
  check_contract(bits > 0 && bits <= 16, "RangeDecoder: raw bits must be in [1,16]");
  uint32_t value = 0;
  int remaining = bits;
  while (remaining > 8) {
    remaining -= 8;
    const uint32_t r = range_ >> 8;
    uint32_t chunk = code_ / r;
    if (chunk > 0xFF) chunk = 0xFF;
    code_ -= r * chunk;
    range_ = r;
    while (range_ < kTopValue) {
      range_ <<= 8;
      code_ = (code_ << 8) | read_byte();
    }
    value |= chunk << remaining;
  }
  const uint32_t r = range_ >> remaining;
  uint32_t chunk = code_ / r;
  const uint32_t mask = (1u << remaining) - 1;
  if (chunk > mask) chunk = mask;
  code_ -= r * chunk;
  range_ = r;
  while (range_ < kTopValue) {
    range_ <<= 8;
    code_ = (code_ << 8) | read_byte();
  }
  value |= chunk;
  return value;
}

}  // namespace cvc

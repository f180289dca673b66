#ifndef CVC_RANGECODER_HPP
#define CVC_RANGECODER_HPP

#include <cstdint>
#include <vector>

#include "cvc/common.hpp"

namespace cvc {

// Byte-oriented carry-aware range coder (the classic LZMA construction).
// Integer-only state transitions, so encoder and decoder are bit-exact across
// platforms. Frequencies are expressed against a fixed 16-bit total.
//
// Stream format: the first flushed byte is always 0 (cache priming), followed
// by the coded payload; finish() emits 5 tail bytes. An empty message is
// exactly 5 bytes.
class RangeEncoder {
 public:
  static constexpr uint32_t kTotalBits = 16;
  static constexpr uint32_t kTotal = 1u << kTotalBits;

  // Encode a symbol occupying [cum_lo, cum_hi) of the 16-bit cumulative scale.
  void encode(uint32_t cum_lo, uint32_t cum_hi);
  // Encode `bits` raw bits (uniform), most significant first. bits <= 16.
  void encode_raw(uint32_t value, int bits);

  std::vector<uint8_t> finish();

 private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size);

  // Current cumulative position in [0, kTotal).
  uint32_t decode_target();
  // Consume the symbol spanning [cum_lo, cum_hi).
  void advance(uint32_t cum_lo, uint32_t cum_hi);
  uint32_t decode_raw(int bits);

 private:
  uint8_t read_byte();

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

}  // namespace cvc

#endif

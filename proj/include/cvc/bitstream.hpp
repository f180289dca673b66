#ifndef CVC_BITSTREAM_HPP
#define CVC_BITSTREAM_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cvc/common.hpp"

namespace cvc {

// All multi-byte integers in the bitstream are big-endian.
class ByteWriter {
 public:
  void u8(uint8_t v) { bytes.push_back(v); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void raw(const std::vector<uint8_t>& data) { bytes.insert(bytes.end(), data.begin(), data.end()); }

  std::vector<uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  std::vector<uint8_t> raw(size_t n);
  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

enum class FrameType : uint8_t { Intra = 0, Inter = 1 };

// One coded frame: fixed header followed by the four substreams in order
// flow, offset, hyper, frame. Substream lengths are 4-byte big-endian; the
// header also carries the frame dims, lambda index and the architecture hash
// a decoder must match.
struct FrameRecord {
  FrameType type = FrameType::Intra;
  std::array<std::vector<uint8_t>, 4> streams;  // flow, offset, hyper, frame

  size_t total_stream_bytes() const {
    return streams[0].size() + streams[1].size() + streams[2].size() + streams[3].size();
  }
};

inline constexpr size_t kFrameHeaderBytes = 4 + 1 + 1 + 2 + 2 + 1 + 8 + 4 * 4;

void write_frame_record(ByteWriter& out, const FrameRecord& rec, uint16_t width, uint16_t height,
                        uint8_t lambda_index, uint64_t config_hash);

// Validates magic/version/dims/lambda/hash; throws BitstreamError on any
// mismatch or truncation.
FrameRecord read_frame_record(ByteReader& in, uint16_t width, uint16_t height,
                              uint8_t lambda_index, uint64_t config_hash);

struct SequenceHeader {
  uint16_t width = 0, height = 0;  // original (pre-padding) dims
  uint8_t lambda_index = 0;
  uint16_t intra_period = 0;
  uint32_t frame_count = 0;
  uint64_t config_hash = 0;
};

void write_sequence_header(ByteWriter& out, const SequenceHeader& h);
SequenceHeader read_sequence_header(ByteReader& in);

}  // namespace cvc

#endif

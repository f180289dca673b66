#include "cvc/bitstream.hpp"

namespace cvc {

namespace {
constexpr uint8_t kVersion = 1;
const char kFrameMagic[4] = {'C', 'V', 'C', 'F'};
const char kSeqMagic[4] = {'C', 'V', 'C', 'S'};
}  // namespace

void ByteWriter::u16(uint16_t v) {
  bytes.push_back(uint8_t(v >> 8));
  bytes.push_back(uint8_t(v));
}

void ByteWriter::u32(uint32_t v) {
  bytes.push_back(uint8_t(v >> 24));
  bytes.push_back(uint8_t(v >> 16));
  bytes.push_back(uint8_t(v >> 8));
  bytes.push_back(uint8_t(v));
}

void ByteWriter::u64(uint64_t v) {
  u32(uint32_t(v >> 32));
  u32(uint32_t(v));
}

uint8_t ByteReader::u8() {
  if (pos_ + 1 > size_) throw BitstreamError("bitstream truncated");
  return data_[pos_++];
}

uint16_t ByteReader::u16() {
  uint16_t hi = u8();
  return uint16_t((hi << 8) | u8());
}

uint32_t ByteReader::u32() {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
  return v;
}

uint64_t ByteReader::u64() {
  uint64_t v = uint64_t(u32()) << 32;
  return v | u32();
}

std::vector<uint8_t> ByteReader::raw(size_t n) {
  if (pos_ + n > size_) throw BitstreamError("bitstream truncated");
  std::vector<uint8_t> out(data_ + pos_, data_ + pos_ + n);
  pos_ += n;
  return out;
}

void write_frame_record(ByteWriter& out, const FrameRecord& rec, uint16_t width, uint16_t height,
                        uint8_t lambda_index, uint64_t config_hash) {
  for (char c : kFrameMagic) out.u8(uint8_t(c));
  out.u8(kVersion);
  out.u8(uint8_t(rec.type));
  out.u16(width);
  out.u16(height);
  out.u8(lambda_index);
  out.u64(config_hash);
  for (const auto& s : rec.streams) out.u32(uint32_t(s.size()));
  for (const auto& s : rec.streams) out.raw(s);
}

FrameRecord read_frame_record(ByteReader& in, uint16_t width, uint16_t height,
                              uint8_t lambda_index, uint64_t config_hash) {
  for (char c : kFrameMagic)
    if (in.u8() != uint8_t(c)) throw BitstreamError("bad frame magic");
  if (in.u8() != kVersion) throw BitstreamError("unsupported bitstream version");
  FrameRecord rec;
  const uint8_t type = in.u8();
  if (type > 1) throw BitstreamError("bad frame type");
  rec.type = FrameType(type);
  if (in.u16() != width || in.u16() != height)
    throw BitstreamError("frame dims disagree with sequence header");
  if (in.u8() != lambda_index) throw BitstreamError("lambda index disagrees with sequence header");
  if (in.u64() != config_hash)
    throw BitstreamError("config hash mismatch: bitstream was produced by a different model");
  std::array<uint32_t, 4> lens{};
  for (auto& l : lens) l = in.u32();
  for (int i = 0; i < 4; ++i) rec.streams[size_t(i)] = in.raw(lens[size_t(i)]);
  return rec;
}

void write_sequence_header(ByteWriter& out, const SequenceHeader& h) {
  for (char c : kSeqMagic) out.u8(uint8_t(c));
  out.u8(kVersion);
  out.u64(h.config_hash);
  out.u16(h.width);
  out.u16(h.height);
  out.u8(h.lambda_index);
  out.u16(h.intra_period);
  out.u32(h.frame_count);
}

SequenceHeader read_sequence_header(ByteReader& in) {
  for (char c : kSeqMagic)
    if (in.u8() != uint8_t(c)) throw BitstreamError("bad sequence magic");
  if (in.u8() != kVersion) throw BitstreamError("unsupported bitstream version");
  SequenceHeader h;
  h.config_hash = in.u64();
  h.width = in.u16();
  h.height = in.u16();
  h.lambda_index = in.u8();
  h.intra_period = in.u16();
  h.frame_count = in.u32();
  return h;
}

}  // namespace cvc

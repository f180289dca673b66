#ifndef CVC_ENTROPY_HPP
#define CVC_ENTROPY_HPP

#include <cstdint>
#include <vector>

#include "cvc/common.hpp"
#include "cvc/tensor.hpp"

namespace cvc {

// Quantized latent plane ready for entropy coding: integer symbols (already
// mean-removed) with a per-element index into the shared scale table.
struct SymbolPlane {
  std::vector<int32_t> symbols;
  std::vector<uint16_t> scale_idx;
};

// Bank of quantized Gaussian CDFs over a geometric grid of scales. Tables are
// built once, deterministically, from the zero-mean Gaussian integrated over
// integer bins:
//   support   [-radius(sigma), +radius(sigma)], radius = clamp(ceil(7*sigma), 2, 250)
//   bins      one per integer symbol plus one trailing escape bin
//   mass      16-bit total, every bin at least 1
// Symbols outside the support are coded via the escape bin followed by the
// value + 32768 as 16 raw bits (symbols are clamped to +/-30000 upstream).
class GaussianCdfBank {
 public:
  static constexpr int kScales = 256;
  static constexpr double kSigmaMin = 0.11;
  static constexpr double kSigmaMax = 64.0;
  static constexpr int32_t kEscapeBias = 32768;

  struct Table {
    int radius = 0;
    std::vector<uint32_t> cum;  // size 2*radius+3; escape bin is the last
  };

  GaussianCdfBank();

  // Smallest table index whose sigma is >= the requested one.
  int index_for_sigma(double sigma) const;
  double sigma(int idx) const { return sigmas_[size_t(idx)]; }
  const Table& table(int idx) const { return tables_[size_t(idx)]; }

 private:
  std::vector<double> sigmas_;
  std::vector<Table> tables_;
};

const GaussianCdfBank& cdf_bank();  // shared immutable instance

// Range-code a symbol plane. The payload is followed by a 4-byte CRC of the
// symbol values, so decoding with wrong model parameters or corrupted bytes
// fails loudly rather than returning garbage.
std::vector<uint8_t> encode_symbols(const SymbolPlane& plane, const GaussianCdfBank& bank);

// Inverse; scale indices must be reproduced exactly by the caller.
std::vector<int32_t> decode_symbols(const uint8_t* data, size_t size,
                                    const std::vector<uint16_t>& scale_idx,
                                    const GaussianCdfBank& bank);

// Ideal code length under the continuous Gaussian bin-integral model with the
// 2^-15 probability floor; the real coder stays within a small overhead of it.
double estimate_rate_bits(const std::vector<int32_t>& symbols, const std::vector<double>& sigmas);

// Helpers shared by the codec paths: mean-removed quantization of a latent.
int32_t quantize_symbol(double value, double mu);

// Per-element scale indices for a sigma plane (same mapping the encoder-side
// bottleneck applies).
std::vector<uint16_t> scale_indices_from_sigma(const Tensor& sigma);

}  // namespace cvc

#endif

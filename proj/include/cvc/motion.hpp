#ifndef CVC_MOTION_HPP
#define CVC_MOTION_HPP

#include <array>
#include <optional>

#include "cvc/config.hpp"
#include "cvc/entropy.hpp"
#include "cvc/nn.hpp"

namespace cvc {

// Coarse-to-fine optical flow over a 3-level image pyramid. Each level warps
// the reference by the upsampled coarse flow and predicts a residual with a
// small conv stack. Trained from scratch together with the rest of the model.
class FlowEstimator {
 public:
  FlowEstimator() = default;
  FlowEstimator(ParamStore& ps, const std::string& prefix);

  Var operator()(const Var& frame, const Var& reference) const;

 private:
  struct Level {
    Conv2d c1, c2, c3, c4, c5;
  };
  std::array<Level, 3> levels_;
};

// How a latent bottleneck is traversed.
enum class CodingMode {
  Train,  // quantization surrogate + differentiable rate
  Code,   // integer symbols, ready for range coding
};

struct LatentResult {
  Var y_hat;            // quantized latent (mean + symbols, or STE surrogate)
  Var bits;             // differentiable rate estimate (Train mode)
  double est_bits = 0;  // plain rate estimate (Code mode)
  SymbolPlane plane;    // Code mode only
};

// Mean-removed quantization against a Gaussian model; shared by every coded
// latent in the codec. mu/sigma must already be elementwise (same shape as y).
LatentResult bottleneck_gaussian(const Var& y, const Var& mu, const Var& sigma, CodingMode mode,
                                 QuantMode quant, Rng* rng);

// Convolutional autoencoder with a learned per-channel Gaussian prior over the
// 4x-downsampled latent. Used for the flow field and for each coded offset
// field. Decode from symbols alone reproduces the encoder-side reconstruction
// bit-exactly.
class FactorizedCodec {
 public:
  FactorizedCodec() = default;
  // zero_final zero-initializes the last decoder conv so an untrained codec
  // reconstructs exact zeros (neutral start for coded offsets).
  FactorizedCodec(ParamStore& ps, const std::string& prefix, int in_channels, int latent_channels,
                  int hidden = 48, bool zero_final = false);

  struct Result {
    Var recon;
    LatentResult latent;
  };

  // Full round trip (encode, quantize, decode).
  Result forward(const Var& x, CodingMode mode, QuantMode quant, Rng* rng) const;

  // Decode-side path from symbols (shapes: latent at in dims / 4).
  Var decode(const SymbolPlane& plane, int latent_h, int latent_w) const;

  // Scale indices of the factorized prior, replicated over a latent plane.
  std::vector<uint16_t> scale_indices(int latent_h, int latent_w) const;
  int latent_channels() const { return latent_channels_; }

  Var prior_mu(Shape latent_shape) const;
  Var prior_sigma(Shape latent_shape) const;

 private:
  Var encode(const Var& x) const;
  Var decode_latent(const Var& y_hat) const;

  Conv2d e1_, e2_, e3_;
  Upconv2x d1_, d3_;
  Conv2d d2_, d4_;
  Parameter* prior_mu_ = nullptr;
  Parameter* prior_logs_ = nullptr;
  int latent_channels_ = 0;
};

// v̂ at scales 0/1/2; level l+1 = flow_downsample(level l, 2).
std::array<Var, 3> build_flow_pyramid(const Var& flow);

}  // namespace cvc

#endif

#ifndef CVC_CODEC_HPP
#define CVC_CODEC_HPP

#include "cvc/enhance.hpp"

namespace cvc {

// Hyperprior over a latent y: a small stride-2 hyper-encoder produces z
// (coded under a learned per-channel factorized Gaussian), and the
// hyper-decoder maps the quantized z to elementwise (mu, sigma) for y.
// Sigmas are floored at 0.11 via softplus.
class HyperCodec {
 public:
  HyperCodec() = default;
  HyperCodec(ParamStore& ps, const std::string& prefix, int latent_channels, int hyper_channels);

  struct Params {
    Var mu, sigma;
  };
  struct Result {
    LatentResult z;
    Params params;
  };

  Result forward(const Var& y, CodingMode mode, QuantMode quant, Rng* rng) const;
  Params params_from_z(const Var& z_hat) const;
  Var z_hat_from_symbols(const SymbolPlane& plane, int zh, int zw) const;
  std::vector<uint16_t> z_scale_indices(int zh, int zw) const;
  int hyper_channels() const { return hyper_channels_; }

 private:
  Conv2d he1_, he2_;
  Upconv2x hd1_, hd2_;
  Conv2d hd3_;
  Parameter* prior_mu_ = nullptr;
  Parameter* prior_logs_ = nullptr;
  int latent_channels_ = 0;
  int hyper_channels_ = 0;
};

// Conditional frame encoder: 4 stride-2 stages with the fused contexts
// concatenated at the matching resolutions.
class ContextualEncoder {
 public:
  ContextualEncoder() = default;
  ContextualEncoder(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg);

  Var operator()(const Var& frame, const std::array<Var, 3>& ctx) const;

 private:
  Conv2d s1_, s2_, s3_, s4_;
};

// Mirrored decoder; emits the reconstructed frame and the full-resolution
// feature propagated to the next frame.
class ContextualDecoder {
 public:
  ContextualDecoder() = default;
  ContextualDecoder(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg);

  struct Out {
    Var frame;  // unclamped
    Var feature;
  };
  Out operator()(const Var& y_hat, const std::array<Var, 3>& ctx) const;

 private:
  Upconv2x d1_, d2_, d3_, d4_;
  Conv2d c2_, c3_, c4_, feat_, recon_;
};

// Intra codec: plain autoencoder + hyperprior producing both a reconstruction
// and the initial propagated feature.
class IntraCodec {
 public:
  IntraCodec() = default;
  IntraCodec(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg);

  struct TrainOut {
    Var recon;  // clamped to [0,1]
    Var feature;
    Var bits_frame, bits_hyper;
  };
  TrainOut forward_train(const Var& frame, QuantMode quant, Rng* rng) const;

  struct CodeOut {
    Tensor recon, feature;
    SymbolPlane y_plane, z_plane;
    double est_bits_y = 0, est_bits_z = 0;
  };
  CodeOut encode(const Tensor& frame) const;
  struct DecOut {
    Tensor recon, feature;
  };
  DecOut decode(const SymbolPlane& y_plane, const SymbolPlane& z_plane, int padded_h,
                int padded_w) const;

  const HyperCodec& hyper() const { return hyper_; }

 private:
  Var encode_latent(const Var& frame) const;
  ContextualDecoder::Out decode_latent(const Var& y_hat) const;

  Conv2d e1_, e2_, e3_, e4_;
  HyperCodec hyper_;
  Upconv2x d1_, d2_, d3_, d4_;
  Conv2d c1_, feat_, recon_;
};

}  // namespace cvc

#endif

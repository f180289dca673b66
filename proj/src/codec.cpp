#include "cvc/codec.hpp"

#include <cmath>

namespace cvc {

HyperCodec::HyperCodec(ParamStore& ps, const std::string& prefix, int latent_channels,
                       int hyper_channels)
    : latent_channels_(latent_channels), hyper_channels_(hyper_channels) {
  he1_ = Conv2d(ps, prefix + ".he1", latent_channels, hyper_channels, 3, 2, 1);
  he2_ = Conv2d(ps, prefix + ".he2", hyper_channels, hyper_channels, 3, 2, 1);
  hd1_ = Upconv2x(ps, prefix + ".hd1", hyper_channels, hyper_channels);
  hd2_ = Upconv2x(ps, prefix + ".hd2", hyper_channels, latent_channels);
  hd3_ = Conv2d(ps, prefix + ".hd3", latent_channels, 2 * latent_channels, 3, 1, 1);
  prior_mu_ = ps.create(prefix + ".prior.mu", Shape{1, hyper_channels, 1, 1}, Init::Zero);
  prior_logs_ = ps.create(prefix + ".prior.logs", Shape{1, hyper_channels, 1, 1}, Init::Constant, 0.5);
}

HyperCodec::Params HyperCodec::params_from_z(const Var& z_hat) const {
  Var h = leaky_relu(hd1_(z_hat));
  h = leaky_relu(hd2_(h));
  Var raw = hd3_(h);
  Params p;
  p.mu = slice_c(raw, 0, latent_channels_);
  p.sigma = add_scalar(softplus(slice_c(raw, latent_channels_, 2 * latent_channels_)),
                       GaussianCdfBank::kSigmaMin);
  return p;
}

HyperCodec::Result HyperCodec::forward(const Var& y, CodingMode mode, QuantMode quant,
                                       Rng* rng) const {
  Var z = he2_(leaky_relu(he1_(y)));
  const Shape zs = z->val.shape;
  Result r;
  Var mu = expand_c(prior_mu_->node, zs);
  Var sigma = expand_c(add_scalar(softplus(prior_logs_->node), GaussianCdfBank::kSigmaMin), zs);
  r.z = bottleneck_gaussian(z, mu, sigma, mode, quant, rng);
  r.params = params_from_z(r.z.y_hat);
  return r;
}

Var HyperCodec::z_hat_from_symbols(const SymbolPlane& plane, int zh, int zw) const {
  const Shape zs{1, hyper_channels_, zh, zw};
  check_contract(int64_t(plane.symbols.size()) == zs.numel(),
                 "hyper decode: symbol count mismatch");
  Tensor z_hat(zs);
  const int64_t p = int64_t(zh) * zw;
  for (int c = 0; c < hyper_channels_; ++c) {
    const double mu = prior_mu_->value().v[size_t(c)];
    for (int64_t i = 0; i < p; ++i)
      z_hat.v[size_t(c * p + i)] = mu + double(plane.symbols[size_t(c * p + i)]);
  }
  return make_leaf(std::move(z_hat));
}

std::vector<uint16_t> HyperCodec::z_scale_indices(int zh, int zw) const {
  const GaussianCdfBank& bank = cdf_bank();
  std::vector<uint16_t> idx(size_t(hyper_channels_) * zh * zw);
  const int64_t p = int64_t(zh) * zw;
  for (int c = 0; c < hyper_channels_; ++c) {
    const double raw = prior_logs_->value().v[size_t(c)];
    const double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
    std::fill_n(idx.begin() + c * p, p, uint16_t(bank.index_for_sigma(sp + GaussianCdfBank::kSigmaMin)));
  }
  return idx;
}

ContextualEncoder::ContextualEncoder(ParamStore& ps, const std::string& prefix,
                                     const CodecConfig& cfg) {
  s1_ = Conv2d(ps, prefix + ".s1", 3 + cfg.c0, cfg.c1, 3, 2, 1);
  s2_ = Conv2d(ps, prefix + ".s2", cfg.c1 + cfg.c1, cfg.c2, 3, 2, 1);
  s3_ = Conv2d(ps, prefix + ".s3", cfg.c2 + cfg.c2, cfg.latent_channels, 3, 2, 1);
  s4_ = Conv2d(ps, prefix + ".s4", cfg.latent_channels, cfg.latent_channels, 3, 2, 1);
}

Var ContextualEncoder::operator()(const Var& frame, const std::array<Var, 3>& ctx) const {
  const Shape s = frame->val.shape;
  check_contract(s.h % 64 == 0 && s.w % 64 == 0, "contextual encoder: frame must be padded");
  Var h = leaky_relu(s1_(concat_c({frame, ctx[0]})));
  h = leaky_relu(s2_(concat_c({h, ctx[1]})));
  h = leaky_relu(s3_(concat_c({h, ctx[2]})));
  return s4_(h);
}

ContextualDecoder::ContextualDecoder(ParamStore& ps, const std::string& prefix,
                                     const CodecConfig& cfg) {
  d1_ = Upconv2x(ps, prefix + ".d1", cfg.latent_channels, cfg.latent_channels);
  d2_ = Upconv2x(ps, prefix + ".d2", cfg.latent_channels, cfg.c2);
  c2_ = Conv2d(ps, prefix + ".c2", cfg.c2 + cfg.c2, cfg.c2, 3, 1, 1);
  d3_ = Upconv2x(ps, prefix + ".d3", cfg.c2, cfg.c1);
  c3_ = Conv2d(ps, prefix + ".c3", cfg.c1 + cfg.c1, cfg.c1, 3, 1, 1);
  d4_ = Upconv2x(ps, prefix + ".d4", cfg.c1, cfg.c0);
  c4_ = Conv2d(ps, prefix + ".c4", cfg.c0 + cfg.c0, cfg.c0, 3, 1, 1);
  feat_ = Conv2d(ps, prefix + ".feat", cfg.c0, cfg.c0, 3, 1, 1);
  recon_ = Conv2d(ps, prefix + ".recon", cfg.c0, 3, 3, 1, 1);
}

ContextualDecoder::Out ContextualDecoder::operator()(const Var& y_hat,
                                                     const std::array<Var, 3>& ctx) const {
  Var h = leaky_relu(d1_(y_hat));
  h = leaky_relu(d2_(h));
  h = leaky_relu(c2_(concat_c({h, ctx[2]})));
  h = leaky_relu(d3_(h));
  h = leaky_relu(c3_(concat_c({h, ctx[1]})));
  h = leaky_relu(d4_(h));
  h = leaky_relu(c4_(concat_c({h, ctx[0]})));
  Out out;
  out.feature = feat_(h);
  out.frame = recon_(leaky_relu(out.feature));
  return out;
}

IntraCodec::IntraCodec(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg) {
  e1_ = Conv2d(ps, prefix + ".e1", 3, cfg.c1, 3, 2, 1);
  e2_ = Conv2d(ps, prefix + ".e2", cfg.c1, cfg.c1, 3, 2, 1);
  e3_ = Conv2d(ps, prefix + ".e3", cfg.c1, cfg.c2, 3, 2, 1);
  e4_ = Conv2d(ps, prefix + ".e4", cfg.c2, cfg.latent_channels, 3, 2, 1);
  hyper_ = HyperCodec(ps, prefix + ".hyper", cfg.latent_channels, cfg.hyper_channels);
  d1_ = Upconv2x(ps, prefix + ".d1", cfg.latent_channels, cfg.c2);
  c1_ = Conv2d(ps, prefix + ".c1", cfg.c2, cfg.c2, 3, 1, 1);
  d2_ = Upconv2x(ps, prefix + ".d2", cfg.c2, cfg.c1);
  d3_ = Upconv2x(ps, prefix + ".d3", cfg.c1, cfg.c0);
  d4_ = Upconv2x(ps, prefix + ".d4", cfg.c0, cfg.c0);
  feat_ = Conv2d(ps, prefix + ".feat", cfg.c0, cfg.c0, 3, 1, 1);
  recon_ = Conv2d(ps, prefix + ".recon", cfg.c0, 3, 3, 1, 1);
}

Var IntraCodec::encode_latent(const Var& frame) const {
  Var h = leaky_relu(e1_(frame));
  h = leaky_relu(e2_(h));
  h = leaky_relu(e3_(h));
  return e4_(h);
}

ContextualDecoder::Out IntraCodec::decode_latent(const Var& y_hat) const {
  Var h = leaky_relu(d1_(y_hat));
  h = leaky_relu(c1_(h));
  h = leaky_relu(d2_(h));
  h = leaky_relu(d3_(h));
  h = leaky_relu(d4_(h));
  ContextualDecoder::Out out;
  out.feature = feat_(h);
  out.frame = recon_(leaky_relu(out.feature));
  return out;
}

IntraCodec::TrainOut IntraCodec::forward_train(const Var& frame, QuantMode quant, Rng* rng) const {
  Var y = encode_latent(frame);
  HyperCodec::Result hr = hyper_.forward(y, CodingMode::Train, quant, rng);
  LatentResult yr = bottleneck_gaussian(y, hr.params.mu, hr.params.sigma, CodingMode::Train, quant, rng);
  auto dec = decode_latent(yr.y_hat);
  TrainOut out;
  out.recon = clamp(dec.frame, 0.0, 1.0);
  out.feature = dec.feature;
  out.bits_frame = yr.bits;
  out.bits_hyper = hr.z.bits;
  return out;
}

IntraCodec::CodeOut IntraCodec::encode(const Tensor& frame) const {
  NoGradGuard ng;
  Var x = make_leaf(frame);
  Var y = encode_latent(x);
  HyperCodec::Result hr = hyper_.forward(y, CodingMode::Code, QuantMode::Round, nullptr);
  LatentResult yr =
      bottleneck_gaussian(y, hr.params.mu, hr.params.sigma, CodingMode::Code, QuantMode::Round, nullptr);
  auto dec = decode_latent(yr.y_hat);
  CodeOut out;
  out.recon = clamp(dec.frame, 0.0, 1.0)->val;
  out.feature = dec.feature->val;
  out.y_plane = std::move(yr.plane);
  out.z_plane = std::move(hr.z.plane);
  out.est_bits_y = yr.est_bits;
  out.est_bits_z = hr.z.est_bits;
  return out;
}

IntraCodec::DecOut IntraCodec::decode(const SymbolPlane& y_plane, const SymbolPlane& z_plane,
                                      int padded_h, int padded_w) const {
  NoGradGuard ng;
  Var z_hat = hyper_.z_hat_from_symbols(z_plane, padded_h / 64, padded_w / 64);
  HyperCodec::Params params = hyper_.params_from_z(z_hat);
  const Shape ys = params.mu->val.shape;
  check_contract(int64_t(y_plane.symbols.size()) == ys.numel(), "intra decode: y symbol count");
  Tensor y_hat(ys);
  for (int64_t i = 0; i < ys.numel(); ++i)
    y_hat.v[size_t(i)] = params.mu->val.v[size_t(i)] + double(y_plane.symbols[size_t(i)]);
  auto dec = decode_latent(make_leaf(std::move(y_hat)));
  return DecOut{clamp(dec.frame, 0.0, 1.0)->val, dec.feature->val};
}

}  // namespace cvc

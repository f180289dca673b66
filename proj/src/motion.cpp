#include "cvc/motion.hpp"

#include <cmath>

namespace cvc {

namespace {

// Fixed 3x3 binomial low-pass applied before pyramid downsampling; plain
// average pooling aliases fine texture into the coarse matching levels.
Var binomial_blur(const Var& x) {
  const int c = x->val.shape.c;
  Tensor k(Shape{c, 1, 3, 3});
  const double w[3] = {0.25, 0.5, 0.25};
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) k.at(cc, 0, i, j) = w[i] * w[j];
  return dwconv2d(replicate_pad(x, 1, 1, 1, 1), make_leaf(std::move(k)), nullptr, 0);
}

Var pyr_down(const Var& x) { return avg_pool(binomial_blur(x), 2); }

// Matching costs against integer displacement hypotheses in [-2, 2]^2:
// mean absolute difference per hypothesis, 25 channels. Gives the residual
// predictor direct correspondence evidence instead of raw pixels only.
Var cost_volume(const Var& cur, const Var& warped_ref) {
  const Shape s = cur->val.shape;
  std::vector<Var> costs;
  costs.reserve(25);
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      Tensor d(Shape{s.n, 2, s.h, s.w});
      const int64_t plane = int64_t(s.h) * s.w;
      for (int64_t i = 0; i < plane; ++i) {
        d.v[size_t(i)] = dx;
        d.v[size_t(plane + i)] = dy;
      }
      Var shifted = bilinear_warp(warped_ref, make_leaf(std::move(d)));
      costs.push_back(channel_mean_map(abs_op(sub(cur, shifted))));
    }
  return concat_c(costs);
}

}  // namespace

FlowEstimator::FlowEstimator(ParamStore& ps, const std::string& prefix) {
  for (int l = 0; l < 3; ++l) {
    const std::string base = prefix + ".level" + std::to_string(l);
    // Input: frame (3) + warped reference (3) + difference (3) + coarse
    // flow (2) + cost volume (25).
    levels_[size_t(l)].c1 = Conv2d(ps, base + ".c1", 36, 32, 3, 1, 1);
    levels_[size_t(l)].c2 = Conv2d(ps, base + ".c2", 32, 32, 3, 1, 1);
    levels_[size_t(l)].c3 = Conv2d(ps, base + ".c3", 32, 32, 3, 1, 1);
    levels_[size_t(l)].c4 = Conv2d(ps, base + ".c4", 32, 16, 3, 1, 1);
    levels_[size_t(l)].c5 = Conv2d(ps, base + ".c5", 16, 2, 3, 1, 1, Init::Zero);
  }
}

Var FlowEstimator::operator()(const Var& frame, const Var& reference) const {
  const Shape s = frame->val.shape;
  check_contract(s == reference->val.shape, "estimate_flow: frame dims differ");
  check_contract(s.h % 4 == 0 && s.w % 4 == 0, "estimate_flow: dims must be divisible by 4");

  std::array<Var, 3> cur{frame, nullptr, nullptr};
  std::array<Var, 3> ref{reference, nullptr, nullptr};
  for (int l = 1; l < 3; ++l) {
    cur[size_t(l)] = pyr_down(cur[size_t(l - 1)]);
    ref[size_t(l)] = pyr_down(ref[size_t(l - 1)]);
  }

  Var flow;  // starts at zero at the coarsest level
  for (int l = 2; l >= 0; --l) {
    const Shape ls = cur[size_t(l)]->val.shape;
    Var up = flow ? scale(upsample_bilinear(flow, 2), 2.0)
                  : make_leaf(Tensor::zeros({ls.n, 2, ls.h, ls.w}));
    Var warped = bilinear_warp(ref[size_t(l)], up);
    Var h = concat_c({cur[size_t(l)], warped, sub(cur[size_t(l)], warped), up,
                      cost_volume(cur[size_t(l)], warped)});
    const Level& lv = levels_[size_t(l)];
    h = leaky_relu(lv.c1(h));
    h = leaky_relu(lv.c2(h));
    h = leaky_relu(lv.c3(h));
    h = leaky_relu(lv.c4(h));
    flow = add(up, lv.c5(h));
  }
  return flow;
}

LatentResult bottleneck_gaussian(const Var& y, const Var& mu, const Var& sigma, CodingMode mode,
                                 QuantMode quant, Rng* rng) {
  LatentResult r;
  if (mode == CodingMode::Train) {
    r.y_hat = add(mu, quantize_ste(sub(y, mu), quant, rng));
    r.bits = gaussian_bits(r.y_hat, mu, sigma);
    return r;
  }
  const int64_t n = y->val.numel();
  const GaussianCdfBank& bank = cdf_bank();
  r.plane.symbols.resize(size_t(n));
  r.plane.scale_idx.resize(size_t(n));
  Tensor y_hat(y->val.shape);
  std::vector<double> sigmas(size_t(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const int32_t s = quantize_symbol(y->val.v[size_t(i)], mu->val.v[size_t(i)]);
    r.plane.symbols[size_t(i)] = s;
    r.plane.scale_idx[size_t(i)] = uint16_t(bank.index_for_sigma(sigma->val.v[size_t(i)]));
    sigmas[size_t(i)] = sigma->val.v[size_t(i)];
    y_hat.v[size_t(i)] = mu->val.v[size_t(i)] + double(s);
  }
  r.est_bits = estimate_rate_bits(r.plane.symbols, sigmas);
  r.y_hat = make_leaf(std::move(y_hat));
  return r;
}

FactorizedCodec::FactorizedCodec(ParamStore& ps, const std::string& prefix, int in_channels,
                                 int latent_channels, int hidden, bool zero_final)
    : latent_channels_(latent_channels) {
  e1_ = Conv2d(ps, prefix + ".e1", in_channels, hidden, 3, 2, 1);
  e2_ = Conv2d(ps, prefix + ".e2", hidden, hidden, 3, 1, 1);
  e3_ = Conv2d(ps, prefix + ".e3", hidden, latent_channels, 3, 2, 1);
  d1_ = Upconv2x(ps, prefix + ".d1", latent_channels, hidden);
  d2_ = Conv2d(ps, prefix + ".d2", hidden, hidden, 3, 1, 1);
  d3_ = Upconv2x(ps, prefix + ".d3", hidden, hidden);
  d4_ = Conv2d(ps, prefix + ".d4", hidden, in_channels, 3, 1, 1,
               zero_final ? Init::Zero : Init::HeNormal);
  prior_mu_ = ps.create(prefix + ".prior.mu", Shape{1, latent_channels, 1, 1}, Init::Zero);
  prior_logs_ = ps.create(prefix + ".prior.logs", Shape{1, latent_channels, 1, 1}, Init::Constant, 0.5);
}

Var FactorizedCodec::encode(const Var& x) const {
  Var h = leaky_relu(e1_(x));
  h = leaky_relu(e2_(h));
  return e3_(h);
}

Var FactorizedCodec::decode_latent(const Var& y_hat) const {
  Var h = leaky_relu(d1_(y_hat));
  h = leaky_relu(d2_(h));
  h = leaky_relu(d3_(h));
  return d4_(h);
}

Var FactorizedCodec::prior_mu(Shape latent_shape) const {
  return expand_c(prior_mu_->node, latent_shape);
}

Var FactorizedCodec::prior_sigma(Shape latent_shape) const {
  return expand_c(add_scalar(softplus(prior_logs_->node), GaussianCdfBank::kSigmaMin), latent_shape);
}

FactorizedCodec::Result FactorizedCodec::forward(const Var& x, CodingMode mode, QuantMode quant,
                                                 Rng* rng) const {
  const Shape xs = x->val.shape;
  check_contract(xs.h % 4 == 0 && xs.w % 4 == 0, "FactorizedCodec: dims must be divisible by 4");
  Var y = encode(x);
  const Shape ys = y->val.shape;
  Result r;
  r.latent = bottleneck_gaussian(y, prior_mu(ys), prior_sigma(ys), mode, quant, rng);
  r.recon = decode_latent(r.latent.y_hat);
  return r;
}

Var FactorizedCodec::decode(const SymbolPlane& plane, int latent_h, int latent_w) const {
  const Shape ys{1, latent_channels_, latent_h, latent_w};
  check_contract(int64_t(plane.symbols.size()) == ys.numel(),
                 "FactorizedCodec::decode: symbol count does not match latent dims");
  Tensor y_hat(ys);
  const int64_t plane_sz = int64_t(latent_h) * latent_w;
  for (int c = 0; c < latent_channels_; ++c) {
    const double mu = prior_mu_->value().v[size_t(c)];
    for (int64_t i = 0; i < plane_sz; ++i)
      y_hat.v[size_t(c * plane_sz + i)] = mu + double(plane.symbols[size_t(c * plane_sz + i)]);
  }
  return decode_latent(make_leaf(std::move(y_hat)));
}

std::vector<uint16_t> FactorizedCodec::scale_indices(int latent_h, int latent_w) const {
  const GaussianCdfBank& bank = cdf_bank();
  std::vector<uint16_t> idx(size_t(latent_channels_) * latent_h * latent_w);
  const int64_t plane_sz = int64_t(latent_h) * latent_w;
  for (int c = 0; c < latent_channels_; ++c) {
    const double raw = prior_logs_->value().v[size_t(c)];
    const double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
    const uint16_t i = uint16_t(bank.index_for_sigma(sp + GaussianCdfBank::kSigmaMin));
    std::fill_n(idx.begin() + c * plane_sz, plane_sz, i);
  }
  return idx;
}

std::array<Var, 3> build_flow_pyramid(const Var& flow) {
  std::array<Var, 3> pyr;
  pyr[0] = flow;
  pyr[1] = flow_downsample(pyr[0], 2);
  pyr[2] = flow_downsample(pyr[1], 2);
  return pyr;
}

}  // namespace cvc

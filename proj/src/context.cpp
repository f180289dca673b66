#include "cvc/context.hpp"

namespace cvc {

FeatureNets::FeatureNets(ParamStore& ps, const std::string& prefix, int c0, int c1, int c2) {
  cur1_ = Conv2d(ps, prefix + ".cur1", 3, c0, 3, 1, 1);
  cur2_ = Conv2d(ps, prefix + ".cur2", c0, c0, 3, 1, 1);
  ref_refine_ = Conv2d(ps, prefix + ".ref_refine", c0, c0, 3, 1, 1);
  down1_ = Conv2d(ps, prefix + ".down1", c0, c1, 3, 2, 1);
  down2_ = Conv2d(ps, prefix + ".down2", c1, c2, 3, 2, 1);
}

Var FeatureNets::current_feature(const Var& frame) const {
  return cur2_(leaky_relu(cur1_(frame)));
}

FeaturePyramid FeatureNets::reference_pyramid(const Var& propagated_feature) const {
  return pyramid_from(add(propagated_feature, ref_refine_(leaky_relu(propagated_feature))));
}

FeaturePyramid FeatureNets::pyramid_from(const Var& f0) const {
  FeaturePyramid p;
  p.f[0] = f0;
  p.f[1] = leaky_relu(down1_(f0));
  p.f[2] = leaky_relu(down2_(p.f[1]));
  return p;
}

OffsetBranch::OffsetBranch(ParamStore& ps, const std::string& prefix, int feat_channels,
                           int offset_channels, int latent_channels) {
  const int in = 2 * feat_channels + 2;
  c1_ = Conv2d(ps, prefix + ".est1", in, 64, 3, 2, 1);
  c2_ = Conv2d(ps, prefix + ".est2", 64, 64, 3, 1, 1);
  c3_ = Conv2d(ps, prefix + ".est3", 64, offset_channels, 3, 1, 1, Init::Zero);
  codec_ = FactorizedCodec(ps, prefix + ".codec", offset_channels, latent_channels, 48,
                           /*zero_final=*/true);
}

Var OffsetBranch::estimate(const Var& f_cur, const Var& f_ref_aligned, const Var& flow) const {
  Var h = concat_c({f_cur, f_ref_aligned, flow});
  h = leaky_relu(c1_(h));
  h = leaky_relu(c2_(h));
  return c3_(h);
}

void init_deform_identity(Parameter* weight, int kernel, uint64_t seed) {
  Tensor& w = weight->value();
  Rng rng(seed ^ fnv1a64(weight->name));
  const int center = (kernel * kernel) / 2;
  const int fan_in = w.shape.c * kernel * kernel;
  const double noise = 0.05 * std::sqrt(2.0 / double(fan_in));
  for (auto& v : w.v) v = noise * rng.normal();
  for (int c = 0; c < std::min(w.shape.n, w.shape.c); ++c)
    w.at(c, c, center / kernel, center % kernel) += 1.0;
}

HybridContextGen::HybridContextGen(ParamStore& ps, const std::string& prefix,
                                   const CodecConfig& cfg) {
  const std::array<int, 3> ch{cfg.c0, cfg.c1, cfg.c2};
  for (int l = 0; l < 3; ++l) {
    if (!cfg.ablation.scale_uses_offsets(l)) continue;
    const std::string base = prefix + ".scale" + std::to_string(l);
    weight_[size_t(l)] = ps.create(base + ".w",
                                   Shape{ch[size_t(l)], ch[size_t(l)], cfg.deform.kernel,
                                         cfg.deform.kernel},
                                   Init::Zero);
    init_deform_identity(weight_[size_t(l)], cfg.deform.kernel, cfg.seed);
    bias_[size_t(l)] = ps.create(base + ".b", Shape{1, ch[size_t(l)], 1, 1}, Init::Zero);
  }
}

std::array<Var, 3> HybridContextGen::generate(const AblationConfig& ab, const FeaturePyramid& ref,
                                              const std::array<Var, 3>& flows,
                                              const std::array<Var, 3>& offsets,
                                              const DeformKernelSpec& spec,
                                              GenCounters* counters) const {
  std::array<Var, 3> ctx;
  for (int l = 0; l < 3; ++l) {
    switch (ab.gen[size_t(l)]) {
      case GenStrategy::Flow:
        ctx[size_t(l)] = bilinear_warp(ref.f[size_t(l)], flows[size_t(l)]);
        if (counters) ++counters->warp[size_t(l)];
        break;
      case GenStrategy::Fgdc:
        if (!offsets[size_t(l)] || !weight_[size_t(l)])
          throw ConfigError("FGDC at scale " + std::to_string(l) +
                            " requested without a configured offset stream");
        ctx[size_t(l)] = deform_sample(ref.f[size_t(l)], flows[size_t(l)], offsets[size_t(l)],
                                       weight_[size_t(l)]->node, bias_[size_t(l)]->node, spec);
        if (counters) ++counters->fgdc[size_t(l)];
        break;
      case GenStrategy::Dc:
        if (!offsets[size_t(l)] || !weight_[size_t(l)])
          throw ConfigError("DC at scale " + std::to_string(l) +
                            " requested without a configured offset stream");
        ctx[size_t(l)] = deform_sample(ref.f[size_t(l)], nullptr, offsets[size_t(l)],
                                       weight_[size_t(l)]->node, bias_[size_t(l)]->node, spec);
        if (counters) ++counters->dc[size_t(l)];
        break;
    }
  }
  return ctx;
}

}  // namespace cvc

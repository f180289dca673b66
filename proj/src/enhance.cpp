#include "cvc/enhance.hpp"

namespace cvc {

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int channels,
                                         int heads, int ffn_expansion)
    : heads_(heads), ffn_hidden_(channels * ffn_expansion) {
  auto ln = [&](const std::string& name, Parameter** g, Parameter** b) {
    *g = ps.create(prefix + name + ".g", Shape{1, channels, 1, 1}, Init::One);
    *b = ps.create(prefix + name + ".b", Shape{1, channels, 1, 1}, Init::Zero);
  };
  ln(".ln_x", &ln_x_g_, &ln_x_b_);
  ln(".ln_r", &ln_r_g_, &ln_r_b_);
  ln(".ln_f", &ln_f_g_, &ln_f_b_);
  q_proj_ = Conv2d(ps, prefix + ".q", channels, channels, 1, 1, 0);
  k_proj_ = Conv2d(ps, prefix + ".k", channels, channels, 1, 1, 0);
  v_proj_ = Conv2d(ps, prefix + ".v", channels, channels, 1, 1, 0);
  q_dw_ = DwConv2d(ps, prefix + ".q_dw", channels, 3);
  k_dw_ = DwConv2d(ps, prefix + ".k_dw", channels, 3);
  v_dw_ = DwConv2d(ps, prefix + ".v_dw", channels, 3);
  out_proj_ = Conv2d(ps, prefix + ".out", channels, channels, 1, 1, 0);
  tau_ = ps.create(prefix + ".tau", Shape{1, heads, 1, 1}, Init::One);
  ffn_in_ = Conv2d(ps, prefix + ".ffn_in", channels, 2 * ffn_hidden_, 1, 1, 0);
  ffn_dw_ = DwConv2d(ps, prefix + ".ffn_dw", 2 * ffn_hidden_, 3);
  ffn_out_ = Conv2d(ps, prefix + ".ffn_out", ffn_hidden_, channels, 1, 1, 0);
}

Var CrossAttentionBlock::operator()(const Var& x, const Var& reference) const {
  check_contract(x->val.shape == reference->val.shape, "cross-attention: dim mismatch");
  Var xn = layer_norm_c(x, ln_x_g_->node, ln_x_b_->node);
  Var rn = layer_norm_c(reference, ln_r_g_->node, ln_r_b_->node);
  Var q = q_dw_(q_proj_(xn));
  Var k = k_dw_(k_proj_(rn));
  Var v = v_dw_(v_proj_(rn));
  Var attended = channel_cross_attention(q, k, v, tau_->node, heads_);
  Var y = add(x, out_proj_(attended));

  Var h = ffn_dw_(ffn_in_(layer_norm_c(y, ln_f_g_->node, ln_f_b_->node)));
  Var gated = mul(gelu(slice_c(h, 0, ffn_hidden_)), slice_c(h, ffn_hidden_, 2 * ffn_hidden_));
  return add(y, ffn_out_(gated));
}

FusionCbam::FusionCbam(ParamStore& ps, const std::string& prefix, int channels) {
  const int cat = 2 * channels;
  mlp1_ = Conv2d(ps, prefix + ".mlp1", cat, cat / 4, 1, 1, 0);
  mlp2_ = Conv2d(ps, prefix + ".mlp2", cat / 4, cat, 1, 1, 0);
  spatial_ = Conv2d(ps, prefix + ".spatial", 2, 1, 7, 1, 3);
  out_ = Conv2d(ps, prefix + ".out", cat, channels, 3, 1, 1);
}

Var FusionCbam::channel_gate(const Var& x) const {
  Var avg = mlp2_(relu(mlp1_(global_avg_pool(x))));
  Var mx = mlp2_(relu(mlp1_(global_max_pool(x))));
  return sigmoid(add(avg, mx));
}

Var FusionCbam::spatial_gate(const Var& x) const {
  return sigmoid(spatial_(concat_c({channel_mean_map(x), channel_max_map(x)})));
}

Var FusionCbam::operator()(const Var& local, const Var& global, bool bypass_gates) const {
  Var x = concat_c({local, global});
  if (!bypass_gates) {
    x = mul_channel(x, channel_gate(x));
    x = mul_map(x, spatial_gate(x));
  }
  return out_(x);
}

ContextEnhancer::ContextEnhancer(ParamStore& ps, const std::string& prefix,
                                 const CodecConfig& cfg) {
  const std::array<int, 3> ch{cfg.c0, cfg.c1, cfg.c2};
  const int oc = cfg.deform.offset_channels();
  // Offset-net input widths per scale: quarter sees (C, F, flow); half adds
  // the upsampled quarter offsets; original swaps the flow for the decoded
  // generation offsets.
  const std::array<int, 3> widths{2 * ch[0] + 2 * oc, 2 * ch[1] + 2 + oc, 2 * ch[2] + 2};
  for (int l = 0; l < 3; ++l) {
    if (!cfg.ablation.enhance_local[size_t(l)]) continue;
    const std::string base = prefix + ".local" + std::to_string(l);
    ScaleNet& net = local_[size_t(l)];
    net.p1 = Conv2d(ps, base + ".p1", widths[size_t(l)], 48, 1, 1, 0);
    net.p2 = Conv2d(ps, base + ".p2", 48, 48, 3, 1, 1);
    net.p3 = Conv2d(ps, base + ".p3", 48, oc, 1, 1, 0, Init::Zero);
    net.weight = ps.create(base + ".dw",
                           Shape{ch[size_t(l)], ch[size_t(l)], cfg.deform.kernel, cfg.deform.kernel},
                           Init::Zero);
    init_deform_identity(net.weight, cfg.deform.kernel, cfg.seed);
    net.bias = ps.create(base + ".db", Shape{1, ch[size_t(l)], 1, 1}, Init::Zero);
    net.present = true;
  }
  if (cfg.ablation.cross_attention) {
    has_attention_ = true;
    attention_.reserve(size_t(cfg.attention_blocks));
    for (int b = 0; b < cfg.attention_blocks; ++b)
      attention_.emplace_back(ps, prefix + ".attn" + std::to_string(b), cfg.c2,
                              cfg.attention_heads, cfg.ffn_expansion);
    fusion_ = FusionCbam(ps, prefix + ".fusion", cfg.c2);
  }
  up2_ = Upconv2x(ps, prefix + ".up2", cfg.c2, cfg.c1);
  fuse1_ = Conv2d(ps, prefix + ".fuse1", 2 * cfg.c1, cfg.c1, 3, 1, 1);
  up1_ = Upconv2x(ps, prefix + ".up1", cfg.c1, cfg.c0);
  fuse0_ = Conv2d(ps, prefix + ".fuse0", 2 * cfg.c0, cfg.c0, 3, 1, 1);
}

EnhanceResult ContextEnhancer::run(const AblationConfig& ab, const std::array<Var, 3>& generated,
                                   const FeaturePyramid& ref, const std::array<Var, 3>& flows,
                                   const Var& decoded_offsets0, const DeformKernelSpec& spec,
                                   std::vector<int>* order_log, bool bypass_fusion_gates) const {
  EnhanceResult r;
  r.local = generated;
  const int oc = spec.offset_channels();

  // Smallest scale first; each finer scale is guided by the coarser offsets.
  Var o2, o1;
  if (ab.enhance_local[2] && local_[2].present) {
    const ScaleNet& net = local_[2];
    Var in = concat_c({generated[2], ref.f[2], flows[2]});
    o2 = net.p3(leaky_relu(net.p2(leaky_relu(net.p1(in)))));
    r.local[2] = deform_sample(ref.f[2], flows[2], o2, net.weight->node, net.bias->node, spec);
    if (order_log) order_log->push_back(2);
  }
  if (ab.enhance_local[1] && local_[1].present) {
    const ScaleNet& net = local_[1];
    const Shape s1 = generated[1]->val.shape;
    Var guide = o2 ? offset_upsample(o2, 2, spec.displacement_channels())
                   : make_leaf(Tensor::zeros({s1.n, oc, s1.h, s1.w}));
    Var in = concat_c({generated[1], ref.f[1], flows[1], guide});
    o1 = net.p3(leaky_relu(net.p2(leaky_relu(net.p1(in)))));
    r.local[1] = deform_sample(ref.f[1], flows[1], o1, net.weight->node, net.bias->node, spec);
    if (order_log) order_log->push_back(1);
  }
  if (ab.enhance_local[0] && local_[0].present) {
    const ScaleNet& net = local_[0];
    const Shape s0 = generated[0]->val.shape;
    Var guide = o1 ? offset_upsample(o1, 2, spec.displacement_channels())
                   : make_leaf(Tensor::zeros({s0.n, oc, s0.h, s0.w}));
    Var obar = decoded_offsets0 ? decoded_offsets0 : make_leaf(Tensor::zeros({s0.n, oc, s0.h, s0.w}));
    Var in = concat_c({generated[0], ref.f[0], obar, guide});
    Var o0 = net.p3(leaky_relu(net.p2(leaky_relu(net.p1(in)))));
    // Base displacement: decoded flow plus the mean tap displacement of the
    // coded offsets when the generation path produced them.
    Var base = decoded_offsets0
                   ? add(flows[0], offset_mean_displacement(decoded_offsets0, spec.groups, spec.taps()))
                   : flows[0];
    r.local[0] = deform_sample(ref.f[0], base, o0, net.weight->node, net.bias->node, spec);
    if (order_log) order_log->push_back(0);
  }

  r.fused2 = r.local[2];
  if (ab.cross_attention && has_attention_) {
    Var g = generated[2];
    for (const auto& block : attention_) g = block(g, ref.f[2]);
    r.global2 = g;
    r.fused2 = fusion_(r.local[2], r.global2, bypass_fusion_gates);
  }

  r.final_[2] = r.fused2;
  r.final_[1] = fuse1_(concat_c({r.local[1], up2_(r.fused2)}));
  r.final_[0] = fuse0_(concat_c({r.local[0], up1_(r.final_[1])}));
  return r;
}

}  // namespace cvc

#include <cstring>
#include <sstream>

#include "cvc/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using namespace cvc::testutil;

namespace {

// Small but structurally complete model for module tests.
CodecConfig tiny_config(char preset = 'J') {
  CodecConfig cfg;
  cfg.c0 = 8;
  cfg.c1 = 12;
  cfg.c2 = 16;
  cfg.latent_channels = 16;
  cfg.hyper_channels = 8;
  cfg.flow_latent_channels = 8;
  cfg.offset_latent_channels = 8;
  cfg.deform = DeformKernelSpec{.kernel = 3, .groups = 2, .modulated = true};
  cfg.attention_heads = 2;
  cfg.attention_blocks = 2;
  cfg.ablation = ablation_preset(preset);
  cfg.seed = 11;
  return cfg;
}

Tensor random_frame(uint64_t seed, int h, int w) {
  Rng rng(seed);
  return rng.uniform_tensor({1, 3, h, w}, 0.05, 0.95);
}

}  // namespace

TEST_CASE("flow estimator: zero for identical frames at init, correct shape") {
  CodecConfig cfg = tiny_config();
  CodecModel m(cfg);
  NoGradGuard ng;
  Var x = make_leaf(random_frame(1, 64, 64));
  Var flow = m.flow_net(x, x);
  CHECK(flow->val.shape == Shape{1, 2, 64, 64});
  CHECK(flow->val.abs_max() == 0.0);  // zero-initialized residual heads
  Var other = m.flow_net(x, make_leaf(random_frame(2, 64, 64)));
  CHECK(other->val.all_finite());
}

TEST_CASE("flow codec: deterministic round trip, decode from symbols matches") {
  CodecConfig cfg = tiny_config();
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(3);
  Var v = make_leaf(rng.uniform_tensor({1, 2, 64, 64}, -3, 3));
  auto r1 = m.flow_codec.forward(v, CodingMode::Code, QuantMode::Round, nullptr);
  auto r2 = m.flow_codec.forward(v, CodingMode::Code, QuantMode::Round, nullptr);
  CHECK(max_abs_diff(r1.recon->val, r2.recon->val) == 0.0);
  CHECK(r1.latent.est_bits >= 0.0);

  Var dec = m.flow_codec.decode(r1.latent.plane, 16, 16);
  CHECK(max_abs_diff(dec->val, r1.recon->val) == 0.0);

  // Bitstream round trip of the plane itself.
  auto bytes = encode_symbols(r1.latent.plane, cdf_bank());
  auto symbols = decode_symbols(bytes.data(), bytes.size(), r1.latent.plane.scale_idx, cdf_bank());
  CHECK(symbols == r1.latent.plane.symbols);
}

TEST_CASE("flow pyramid: construction invariant and constant-field scaling") {
  NoGradGuard ng;
  Tensor f(Shape{1, 2, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      f.at(0, 0, y, x) = 8.0;
      f.at(0, 1, y, x) = 8.0;
    }
  auto pyr = build_flow_pyramid(make_leaf(f));
  CHECK(pyr[1]->val.at(0, 0, 3, 3) == doctest::Approx(4.0));
  CHECK(pyr[2]->val.at(0, 1, 2, 2) == doctest::Approx(2.0));

  Rng rng(4);
  auto rnd = build_flow_pyramid(make_leaf(rng.uniform_tensor({1, 2, 64, 64}, -5, 5)));
  Var again = flow_downsample(rnd[1], 2);
  CHECK(max_abs_diff(again->val, rnd[2]->val) == 0.0);
}

TEST_CASE("reference pyramid shapes follow the channel config") {
  CodecConfig cfg;  // default desk-scale channels 48/64/96
  cfg.seed = 5;
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(6);
  Var f = make_leaf(rng.uniform_tensor({1, 48, 64, 64}, -1, 1));
  FeaturePyramid p = m.feat.reference_pyramid(f);
  CHECK(p.f[0]->val.shape == Shape{1, 48, 64, 64});
  CHECK(p.f[1]->val.shape == Shape{1, 64, 32, 32});
  CHECK(p.f[2]->val.shape == Shape{1, 96, 16, 16});
  for (auto& v : p.f) CHECK(v->val.all_finite());

  FeaturePyramid p2 = m.feat.reference_pyramid(f);
  for (int l = 0; l < 3; ++l) CHECK(max_abs_diff(p.f[size_t(l)]->val, p2.f[size_t(l)]->val) == 0.0);
}

TEST_CASE("offset branch: zero estimate and zero decoded offsets at init") {
  CodecConfig cfg = tiny_config('D');
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(7);
  Var fc = make_leaf(rng.uniform_tensor({1, 8, 32, 32}, -1, 1));
  Var fr = make_leaf(rng.uniform_tensor({1, 8, 32, 32}, -1, 1));
  Var fl = make_leaf(rng.uniform_tensor({1, 2, 32, 32}, -1, 1));
  Var o = m.offset[0]->estimate(fc, fr, fl);
  CHECK(o->val.shape == Shape{1, cfg.deform.offset_channels(), 16, 16});
  CHECK(o->val.abs_max() == 0.0);

  auto res = m.offset[0]->codec().forward(o, CodingMode::Code, QuantMode::Round, nullptr);
  CHECK(res.recon->val.abs_max() == 0.0);
}

TEST_CASE("offset estimator gradients reach all three inputs") {
  CodecConfig cfg = tiny_config('D');
  CodecModel m(cfg);
  // The final conv starts at zero (neutral offsets), which would zero the
  // input grads; perturb it so reachability is observable.
  Parameter* w3 = m.ps.find("offset0.est3.w");
  REQUIRE(w3 != nullptr);
  Rng wrng(88);
  for (auto& v : w3->value().v) v = 0.05 * wrng.normal();

  Rng rng(8);
  Var fc = make_leaf(rng.uniform_tensor({1, 8, 8, 8}, -1, 1));
  Var fr = make_leaf(rng.uniform_tensor({1, 8, 8, 8}, -1, 1));
  Var fl = make_leaf(rng.uniform_tensor({1, 2, 8, 8}, -0.5, 0.5));
  Tensor proj = rng.uniform_tensor({1, cfg.deform.offset_channels(), 4, 4}, -1, 1);
  auto loss = [&] { return project(m.offset[0]->estimate(fc, fr, fl), proj); };
  CHECK(grad_check(loss, {fc, fr, fl}) < 1e-3);
  for (Var in : {fc, fr, fl}) {
    REQUIRE(in->grad_ready);
    double gmax = 0.0;
    for (double g : in->grad.v) gmax = std::max(gmax, std::fabs(g));
    CHECK(gmax > 0.0);
  }
}

TEST_CASE("hybrid generation: dispatch counters are exhaustive and exclusive") {
  for (char preset : {'A', 'D', 'F'}) {
    CodecConfig cfg = tiny_config(preset);
    CodecModel m(cfg);
    NoGradGuard ng;
    Rng rng(9);
    Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1));
    FeaturePyramid ref = m.feat.reference_pyramid(f);
    auto flows = build_flow_pyramid(make_leaf(rng.uniform_tensor({1, 2, 64, 64}, -2, 2)));
    std::array<Var, 3> offsets;
    for (int l = 0; l < 3; ++l)
      if (cfg.ablation.scale_uses_offsets(l)) {
        const Shape fs = ref.f[size_t(l)]->val.shape;
        offsets[size_t(l)] =
            make_leaf(rng.uniform_tensor({1, cfg.deform.offset_channels(), fs.h, fs.w}, -0.2, 0.2));
      }
    GenCounters counters;
    auto ctx = m.gen.generate(cfg.ablation, ref, flows, offsets, cfg.deform, &counters);
    for (int l = 0; l < 3; ++l) {
      CHECK(ctx[size_t(l)]->val.shape == ref.f[size_t(l)]->val.shape);
      const int total = counters.warp[size_t(l)] + counters.fgdc[size_t(l)] + counters.dc[size_t(l)];
      CHECK(total == 1);
      switch (cfg.ablation.gen[size_t(l)]) {
        case GenStrategy::Flow: CHECK(counters.warp[size_t(l)] == 1); break;
        case GenStrategy::Fgdc: CHECK(counters.fgdc[size_t(l)] == 1); break;
        case GenStrategy::Dc: CHECK(counters.dc[size_t(l)] == 1); break;
      }
    }
  }
}

TEST_CASE("hybrid generation: preset A equals per-level warping exactly") {
  CodecConfig cfg = tiny_config('A');
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(10);
  Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1));
  FeaturePyramid ref = m.feat.reference_pyramid(f);
  auto flows = build_flow_pyramid(make_leaf(rng.uniform_tensor({1, 2, 64, 64}, -2, 2)));
  auto ctx = m.gen.generate(cfg.ablation, ref, flows, {}, cfg.deform);
  for (int l = 0; l < 3; ++l) {
    Var expect = bilinear_warp(ref.f[size_t(l)], flows[size_t(l)]);
    CHECK(max_abs_diff(ctx[size_t(l)]->val, expect->val) == 0.0);
  }
}

TEST_CASE("hybrid generation: neutral offsets + identity kernels reduce to flow warp") {
  CodecConfig cfg = tiny_config('D');
  CodecModel m(cfg);
  NoGradGuard ng;
  // Overwrite the scale-0 deformable kernel with an exact identity.
  Parameter* w = m.ps.find("genctx.scale0.w");
  REQUIRE(w != nullptr);
  for (auto& v : w->value().v) v = 0.0;
  for (int c = 0; c < cfg.c0; ++c) w->value().at(c, c, 1, 1) = 1.0;

  Rng rng(11);
  Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1));
  FeaturePyramid ref = m.feat.reference_pyramid(f);
  auto flows = build_flow_pyramid(make_leaf(rng.uniform_tensor({1, 2, 64, 64}, -2, 2)));
  std::array<Var, 3> offsets;
  offsets[0] = make_leaf(Tensor::zeros({1, cfg.deform.offset_channels(), 64, 64}));
  auto ctx = m.gen.generate(cfg.ablation, ref, flows, offsets, cfg.deform);
  Var expect = bilinear_warp(ref.f[0], flows[0]);
  CHECK(max_abs_diff(ctx[0]->val, expect->val) <= 1e-5);
}

TEST_CASE("hybrid generation: FGDC without an offset stream is a configuration error") {
  CodecConfig cfg = tiny_config('D');
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(12);
  Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1));
  FeaturePyramid ref = m.feat.reference_pyramid(f);
  auto flows = build_flow_pyramid(make_leaf(Tensor::zeros({1, 2, 64, 64})));
  CHECK_THROWS_AS((void)m.gen.generate(cfg.ablation, ref, flows, {}, cfg.deform), ConfigError);
}

TEST_CASE("local enhancement: zero-init neutrality and progressive order") {
  CodecConfig cfg = tiny_config('J');
  CodecModel m(cfg);
  NoGradGuard ng;
  Rng rng(13);
  Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1));
  FeaturePyramid ref = m.feat.reference_pyramid(f);
  auto flows = build_flow_pyramid(make_leaf(safe_flow(rng, {1, 2, 64, 64}, 1.5)));
  std::array<Var, 3> gen_offsets;
  gen_offsets[0] = make_leaf(Tensor::zeros({1, cfg.deform.offset_channels(), 64, 64}));
  GenCounters counters;
  auto generated = m.gen.generate(cfg.ablation, ref, flows, gen_offsets, cfg.deform, &counters);

  // Make every enhancement deform kernel an exact identity; offset nets are
  // zero-init so the result must equal plain flow warping of the reference.
  for (int l = 0; l < 3; ++l) {
    Parameter* w = m.ps.find("enhance.local" + std::to_string(l) + ".dw");
    REQUIRE(w != nullptr);
    const int c = ref.f[size_t(l)]->val.shape.c;
    for (auto& v : w->value().v) v = 0.0;
    for (int cc = 0; cc < c; ++cc) w->value().at(cc, cc, 1, 1) = 1.0;
  }
  std::vector<int> order;
  EnhanceResult enh = m.enhancer.run(cfg.ablation, generated, ref, flows, gen_offsets[0],
                                     cfg.deform, &order);
  CHECK(order == std::vector<int>{2, 1, 0});
  for (int l = 0; l < 3; ++l) {
    Var expect = bilinear_warp(ref.f[size_t(l)], flows[size_t(l)]);
    CHECK(max_abs_diff(enh.local[size_t(l)]->val, expect->val) <= 1e-5);
  }
  for (int l = 0; l < 3; ++l)
    CHECK(enh.final_[size_t(l)]->val.shape == ref.f[size_t(l)]->val.shape);
}

TEST_CASE("cross-attention block and fusion gates: gradients on tiny inputs") {
  ParamStore ps(21);
  CrossAttentionBlock block(ps, "blk", 8, 2, 2);
  Rng rng(22);
  Var x = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
  Var r = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
  Tensor proj = rng.uniform_tensor({1, 8, 4, 4}, -1, 1);
  auto loss = [&] { return project(block(x, r), proj); };
  CHECK(grad_check(loss, {x, r}) < 1e-3);

  FusionCbam fusion(ps, "fuse", 8);
  Var a = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
  Var b = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
  Tensor proj2 = rng.uniform_tensor({1, 8, 4, 4}, -1, 1);
  auto loss2 = [&] { return project(fusion(a, b), proj2); };
  CHECK(grad_check(loss2, {a, b}) < 1e-3);
}

TEST_CASE("fusion: gate ranges and bypass hook") {
  ParamStore ps(23);
  FusionCbam fusion(ps, "fuse", 8);
  Rng rng(24);
  Var a = make_leaf(rng.uniform_tensor({1, 8, 6, 6}, -2, 2));
  Var b = make_leaf(rng.uniform_tensor({1, 8, 6, 6}, -2, 2));
  NoGradGuard ng;
  Var x = concat_c({a, b});
  Var cg = fusion.channel_gate(x);
  Var sg = fusion.spatial_gate(x);
  for (double v : cg->val.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : sg->val.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // Bypassed gates: output is the final conv of the raw concatenation.
  Var bypassed = fusion(a, b, true);
  Parameter* w = ps.find("fuse.out.w");
  Parameter* bb = ps.find("fuse.out.b");
  Var expect = conv2d(x, w->node, bb->node, 1, 1);
  CHECK(max_abs_diff(bypassed->val, expect->val) == 0.0);
  CHECK(bypassed->val.shape == a->val.shape);
}

TEST_CASE("enhancement is bit-identical across model instances (zero-bitrate parity)") {
  CodecConfig cfg = tiny_config('J');
  CodecModel m1(cfg);
  std::stringstream blob;
  m1.ps.save(blob);
  CodecModel m2(cfg);
  m2.ps.load(blob);

  NoGradGuard ng;
  Rng rng(25);
  Tensor feature = rng.uniform_tensor({1, 8, 64, 64}, -1, 1);
  Tensor flow = rng.uniform_tensor({1, 2, 64, 64}, -2, 2);
  Tensor offs = rng.uniform_tensor({1, cfg.deform.offset_channels(), 64, 64}, -0.3, 0.3);

  auto run = [&](CodecModel& m) {
    FeaturePyramid ref = m.feat.reference_pyramid(make_leaf(feature));
    auto flows = build_flow_pyramid(make_leaf(flow));
    std::array<Var, 3> off;
    off[0] = make_leaf(offs);
    return m.build_contexts(ref, flows, off);
  };
  auto c1 = run(m1);
  auto c2 = run(m2);
  for (int l = 0; l < 3; ++l) {
    const Tensor& t1 = c1.final_[size_t(l)]->val;
    const Tensor& t2 = c2.final_[size_t(l)]->val;
    REQUIRE(t1.numel() == t2.numel());
    CHECK(std::memcmp(t1.data(), t2.data(), size_t(t1.numel()) * sizeof(double)) == 0);
  }
}

TEST_CASE("hierarchical fusion: gradient flows from final contexts back to the quarter scale") {
  CodecConfig cfg = tiny_config('J');
  CodecModel m(cfg);
  Rng rng(26);
  Var f = make_leaf(rng.uniform_tensor({1, 8, 64, 64}, -1, 1), true);
  FeaturePyramid ref = m.feat.reference_pyramid(f);
  auto flows = build_flow_pyramid(make_leaf(Tensor::zeros({1, 2, 64, 64})));
  std::array<Var, 3> off;
  off[0] = make_leaf(Tensor::zeros({1, cfg.deform.offset_channels(), 64, 64}));
  auto ctx = m.build_contexts(ref, flows, off);
  backward(sum(ctx.final_[0]));
  CHECK(f->grad_ready);
  double gmax = 0.0;
  for (double g : f->grad.v) gmax = std::max(gmax, std::fabs(g));
  CHECK(gmax > 0.0);
}

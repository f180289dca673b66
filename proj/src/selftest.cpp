#include "cvc/selftest.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

#include "cvc/bdrate.hpp"
#include "cvc/eval.hpp"
#include "cvc/metrics.hpp"

namespace cvc {

namespace {

CodecConfig small_config(char preset) {
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
  cfg.seed = 97;
  return cfg;
}

bool approx(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

}  // namespace

int run_selftest(std::ostream& out) {
  int failures = 0;
  auto check = [&](const char* name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string detail;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      detail = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS" : "FAIL") << "  " << name << detail << "\n";
    if (!ok) ++failures;
  };

  check("warp: zero flow is identity", [] {
    Rng rng(1);
    Tensor x = rng.uniform_tensor({1, 3, 9, 9}, -1, 1);
    NoGradGuard ng;
    Var warped = bilinear_warp(make_leaf(x), make_leaf(Tensor::zeros({1, 2, 9, 9})));
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::fabs(warped->val.v[size_t(i)] - x.v[size_t(i)]) > 1e-6) return false;
    return true;
  });

  check("deform: identity kernel degenerates to flow warp", [] {
    Rng rng(2);
    DeformKernelSpec spec{.kernel = 1, .groups = 1, .modulated = true};
    Tensor x = rng.uniform_tensor({1, 4, 8, 8}, -1, 1);
    Tensor flow = rng.uniform_tensor({1, 2, 8, 8}, -2, 2);
    Tensor w(Shape{4, 4, 1, 1});
    for (int c = 0; c < 4; ++c) w.at(c, c, 0, 0) = 1.0;
    NoGradGuard ng;
    Var a = deform_sample(make_leaf(x), make_leaf(flow),
                          make_leaf(Tensor::zeros({1, spec.offset_channels(), 8, 8})), make_leaf(w),
                          nullptr, spec);
    Var b = bilinear_warp(make_leaf(x), make_leaf(flow));
    for (int64_t i = 0; i < a->val.numel(); ++i)
      if (std::fabs(a->val.v[size_t(i)] - b->val.v[size_t(i)]) > 1e-5) return false;
    return true;
  });

  check("quantize: rounding convention and STE gradient", [] {
    Tensor y(Shape{1, 1, 1, 3});
    y.v = {0.4, 0.6, -1.5};
    Var v = make_leaf(y, true);
    Var q = quantize_ste(v, QuantMode::Round);
    backward(sum(q));
    if (q->val.v[0] != 0.0 || q->val.v[1] != 1.0 || q->val.v[2] != -2.0) return false;
    for (double g : v->grad.v)
      if (g != 1.0) return false;
    return true;
  });

  check("range coder: 1000-symbol round trip", [] {
    Rng rng(3);
    const GaussianCdfBank& bank = cdf_bank();
    SymbolPlane plane;
    for (int i = 0; i < 1000; ++i) {
      const double sigma = std::exp(rng.uniform(std::log(0.2), std::log(4.0)));
      plane.scale_idx.push_back(uint16_t(bank.index_for_sigma(sigma)));
      plane.symbols.push_back(int32_t(std::llround(rng.normal() * sigma)));
    }
    auto bytes = encode_symbols(plane, bank);
    auto back = decode_symbols(bytes.data(), bytes.size(), plane.scale_idx, bank);
    return back == plane.symbols;
  });

  check("range coder: measured bytes within 2% + 32 B of the estimate", [] {
    Rng rng(4);
    const GaussianCdfBank& bank = cdf_bank();
    SymbolPlane plane;
    std::vector<double> sigmas;
    for (int i = 0; i < 4096; ++i) {
      const double sigma = std::exp(rng.uniform(std::log(0.2), std::log(6.0)));
      plane.scale_idx.push_back(uint16_t(bank.index_for_sigma(sigma)));
      sigmas.push_back(bank.sigma(plane.scale_idx.back()));
      plane.symbols.push_back(int32_t(std::llround(rng.normal() * sigma)));
    }
    const double est = estimate_rate_bits(plane.symbols, sigmas);
    auto bytes = encode_symbols(plane, bank);
    return double(bytes.size()) <= est / 8.0 * 1.02 + 32.0 && double(bytes.size()) >= est / 8.0;
  });

  check("rate estimate: symbol with p=1/2 costs one bit", [] {
    const double s_half = 0.5 / 0.6744897501960817;
    return approx(estimate_rate_bits({0}, {s_half}), 1.0, 1e-9);
  });

  check("psnr: uniform 0.1 difference is exactly 20 dB", [] {
    Tensor a = Tensor::full({1, 3, 8, 8}, 0.4);
    Tensor b = Tensor::full({1, 3, 8, 8}, 0.5);
    return approx(psnr(a, b), 20.0, 1e-12);
  });

  check("bd_rate: identity 0%, rate doubling +100%", [] {
    std::vector<RDCurvePoint> anchor = {{0.1, 30}, {0.2, 32}, {0.4, 34}, {0.8, 36}};
    std::vector<RDCurvePoint> doubled = anchor;
    for (auto& p : doubled) p.rate *= 2.0;
    return approx(bd_rate_percent(anchor, anchor), 0.0, 1e-9) &&
           approx(bd_rate_percent(anchor, doubled), 100.0, 0.1);
  });

  check("synthetic clip: ground-truth flow reproduces the next frame (>40 dB)", [] {
    SyntheticClip clip =
        generate_synthetic_clip(MotionFamily::Elastic, SynthParams{3, 48, 48, 2.0}, 5);
    NoGradGuard ng;
    for (size_t t = 1; t < clip.frames.size(); ++t) {
      Var warped = bilinear_warp(make_leaf(clip.frames[t - 1]), make_leaf(clip.flows[t - 1]));
      if (psnr(warped->val, clip.frames[t]) <= 40.0) return false;
    }
    return true;
  });

  check("closed loop: intra + inter decode match the encoder bit for bit", [] {
    CodecModel m(small_config('J'));
    SyntheticClip clip =
        generate_synthetic_clip(MotionFamily::Elastic, SynthParams{3, 64, 64, 2.0}, 6);
    auto intra = m.encode_intra_frame(m.pad_frame(clip.frames[0]));
    auto intra_dec = m.decode_intra_frame(intra.record, 64, 64);
    if (std::memcmp(intra.recon.data(), intra_dec.recon.data(),
                    size_t(intra.recon.numel()) * sizeof(double)) != 0)
      return false;
    CodecState state{intra.recon, intra.feature, 0};
    auto enc = m.encode_inter_frame(m.pad_frame(clip.frames[1]), state);
    auto dec = m.decode_inter_frame(enc.record, state);
    return std::memcmp(enc.recon.data(), dec.recon.data(),
                       size_t(enc.recon.numel()) * sizeof(double)) == 0;
  });

  check("preset A codes a zero-length offset substream", [] {
    CodecModel m(small_config('A'));
    SyntheticClip clip =
        generate_synthetic_clip(MotionFamily::Translate, SynthParams{2, 64, 64, 2.0}, 7);
    auto intra = m.encode_intra_frame(m.pad_frame(clip.frames[0]));
    CodecState state{intra.recon, intra.feature, 0};
    auto enc = m.encode_inter_frame(m.pad_frame(clip.frames[1]), state);
    return enc.record.streams[1].empty();
  });

  check("enhancement parity across model instances", [] {
    CodecConfig cfg = small_config('J');
    CodecModel m1(cfg);
    std::stringstream blob;
    m1.ps.save(blob);
    CodecModel m2(cfg);
    m2.ps.load(blob);
    NoGradGuard ng;
    Rng rng(8);
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
    for (int l = 0; l < 3; ++l)
      if (std::memcmp(c1.final_[size_t(l)]->val.data(), c2.final_[size_t(l)]->val.data(),
                      size_t(c1.final_[size_t(l)]->val.numel()) * sizeof(double)) != 0)
        return false;
    return true;
  });

  if (failures)
    out << "selftest: " << failures << " check(s) failed\n";
  else
    out << "selftest: all checks passed\n";
  return failures;
}

}  // namespace cvc

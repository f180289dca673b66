// Acceptance suite: one line per criterion, nonzero exit if a hard criterion
// fails. Criterion 7 is directional and reported rather than asserted.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "cvc/bdrate.hpp"
#include "cvc/eval.hpp"
#include "cvc/metrics.hpp"
#include "test_util.hpp"

using namespace cvc;
using namespace cvc::testutil;

namespace {

struct CriterionResult {
  int id = 0;
  bool hard = true;
  bool pass = false;
  std::string detail;
};

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

CodecConfig small_config(char preset, uint64_t seed = 5) {
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
  cfg.seed = seed;
  return cfg;
}

// Scalar reference sampler shared by the criterion-1 oracles.
double ref_sample(const Tensor& x, int c, double u, double v) {
  const int w = x.shape.w, h = x.shape.h;
  u = std::min(std::max(u, 0.0), double(w - 1));
  v = std::min(std::max(v, 0.0), double(h - 1));
  const int x0 = int(std::floor(u)), y0 = int(std::floor(v));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double wx = u - x0, wy = v - y0;
  return (1 - wy) * ((1 - wx) * x.at(0, c, y0, x0) + wx * x.at(0, c, y0, x1)) +
         wy * ((1 - wx) * x.at(0, c, y1, x0) + wx * x.at(0, c, y1, x1));
}

CriterionResult criterion1_operator_oracles() {
  CriterionResult r{1};
  std::ostringstream msg;
  bool ok = true;

  {  // identity
    Rng rng(1);
    Tensor x = rng.uniform_tensor({1, 3, 8, 8}, -1, 1);
    NoGradGuard ng;
    Var w = bilinear_warp(make_leaf(x), make_leaf(Tensor::zeros({1, 2, 8, 8})));
    ok = ok && max_abs_diff(w->val, x) <= 1e-6;
  }
  {  // integer shift
    Rng rng(2);
    Tensor base = rng.uniform_tensor({1, 1, 8, 8}, 0, 1);
    Tensor shifted(base.shape);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) shifted.at(0, 0, y, x) = base.at(0, 0, y, std::max(x - 2, 0));
    Tensor flow(Shape{1, 2, 8, 8});
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) flow.at(0, 0, y, x) = 2.0;
    NoGradGuard ng;
    Var w = bilinear_warp(make_leaf(shifted), make_leaf(flow));
    for (int y = 0; y < 8 && ok; ++y)
      for (int x = 0; x < 6; ++x)
        if (w->val.at(0, 0, y, x) != base.at(0, 0, y, x)) {
          ok = false;
          break;
        }
  }
  {  // fractional-shift hand oracle
    Tensor row(Shape{1, 1, 1, 4});
    row.v = {0, 1, 0, 0};
    Tensor flow(Shape{1, 2, 1, 4});
    for (int x = 0; x < 4; ++x) flow.at(0, 0, 0, x) = 0.5;
    NoGradGuard ng;
    Var w = bilinear_warp(make_leaf(row), make_leaf(flow));
    const double expect[4] = {0.5, 0.5, 0.0, 0.0};
    for (int x = 0; x < 4; ++x) ok = ok && std::fabs(w->val.v[size_t(x)] - expect[x]) <= 1e-12;
  }
  {  // deform brute force on 4x4
    Rng rng(3);
    DeformKernelSpec spec{.kernel = 3, .groups = 2, .modulated = true};
    Tensor x = rng.uniform_tensor({1, 2, 4, 4}, -1, 1);
    Tensor base = rng.uniform_tensor({1, 2, 4, 4}, -1.5, 1.5);
    Tensor res = rng.uniform_tensor({1, spec.offset_channels(), 4, 4}, -1, 1);
    Tensor wt = rng.uniform_tensor({3, 2, 3, 3}, -1, 1);
    NoGradGuard ng;
    Var out = deform_sample(make_leaf(x), make_leaf(base), make_leaf(res), make_leaf(wt), nullptr,
                            spec);
    const int kk = 9, half = 1;
    double worst = 0.0;
    for (int oc = 0; oc < 3; ++oc)
      for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
          double acc = 0.0;
          for (int ic = 0; ic < 2; ++ic) {
            const int g = ic;  // one channel per group here
            for (int t = 0; t < kk; ++t) {
              const double u = xx + (t % 3 - half) + base.at(0, 0, y, xx) +
                               res.at(0, 2 * (g * kk + t), y, xx);
              const double v = y + (t / 3 - half) + base.at(0, 1, y, xx) +
                               res.at(0, 2 * (g * kk + t) + 1, y, xx);
              const double pre = res.at(0, spec.displacement_channels() + g * kk + t, y, xx);
              const double m = 2.0 / (1.0 + std::exp(-pre));
              acc += wt.at(oc, ic, t / 3, t % 3) * m * ref_sample(x, ic, u, v);
            }
          }
          worst = std::max(worst, std::fabs(acc - out->val.at(0, oc, y, xx)));
        }
    ok = ok && worst <= 1e-5;
    msg << "deform-vs-reference max err " << worst;
  }
  {  // FGDC degeneracy to flow warp
    Rng rng(4);
    DeformKernelSpec spec{.kernel = 3, .groups = 2, .modulated = true};
    Tensor x = rng.uniform_tensor({1, 4, 6, 6}, -1, 1);
    Tensor flow = rng.uniform_tensor({1, 2, 6, 6}, -2, 2);
    Tensor wt(Shape{4, 4, 3, 3});
    for (int c = 0; c < 4; ++c) wt.at(c, c, 1, 1) = 1.0;
    NoGradGuard ng;
    Var a = deform_sample(make_leaf(x), make_leaf(flow),
                          make_leaf(Tensor::zeros({1, spec.offset_channels(), 6, 6})),
                          make_leaf(wt), nullptr, spec);
    Var b = bilinear_warp(make_leaf(x), make_leaf(flow));
    ok = ok && max_abs_diff(a->val, b->val) <= 1e-5;
  }
  r.pass = ok;
  r.detail = msg.str();
  return r;
}

CriterionResult criterion2_gradients() {
  CriterionResult r{2};
  std::ostringstream msg;
  bool ok = true;
  Rng rng(20);

  {  // warp
    Var x = make_leaf(rng.uniform_tensor({1, 2, 5, 5}, -1, 1));
    Var flow = make_leaf(safe_flow(rng, {1, 2, 5, 5}, 1.4));
    Tensor proj = rng.uniform_tensor({1, 2, 5, 5}, -1, 1);
    double e = grad_check([&] { return project(bilinear_warp(x, flow), proj); }, {x, flow});
    msg << "warp " << e;
    ok = ok && e < 1e-3;
  }
  {  // deform
    DeformKernelSpec spec{.kernel = 3, .groups = 1, .modulated = true};
    Var x = make_leaf(rng.uniform_tensor({1, 2, 5, 5}, -1, 1));
    Var base = make_leaf(safe_flow(rng, {1, 2, 5, 5}, 0.9));
    Tensor res = rng.uniform_tensor({1, spec.offset_channels(), 5, 5}, -0.2, 0.2);
    Var residual = make_leaf(res);
    Var wt = make_leaf(rng.uniform_tensor({2, 2, 3, 3}, -0.5, 0.5));
    Tensor proj = rng.uniform_tensor({1, 2, 5, 5}, -1, 1);
    double e = grad_check(
        [&] { return project(deform_sample(x, base, residual, wt, nullptr, spec), proj); },
        {x, base, residual, wt});
    msg << " deform " << e;
    ok = ok && e < 1e-3;
  }
  {  // cross-attention block
    ParamStore ps(21);
    CrossAttentionBlock block(ps, "blk", 8, 2, 2);
    Var x = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
    Var ref = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
    Tensor proj = rng.uniform_tensor({1, 8, 4, 4}, -1, 1);
    double e = grad_check([&] { return project(block(x, ref), proj); }, {x, ref});
    msg << " attention " << e;
    ok = ok && e < 1e-3;
  }
  {  // gated feed-forward
    ParamStore ps(22);
    Conv2d in(ps, "in", 8, 32, 1, 1, 0);
    DwConv2d dw(ps, "dw", 32, 3);
    Conv2d out(ps, "out", 16, 8, 1, 1, 0);
    Var x = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
    Tensor proj = rng.uniform_tensor({1, 8, 4, 4}, -1, 1);
    auto gdfn = [&] {
      Var h = dw(in(x));
      Var gated = mul(gelu(slice_c(h, 0, 16)), slice_c(h, 16, 32));
      return project(out(gated), proj);
    };
    double e = grad_check(gdfn, {x});
    msg << " gdfn " << e;
    ok = ok && e < 1e-3;
  }
  {  // fusion gates
    ParamStore ps(23);
    FusionCbam fusion(ps, "fuse", 8);
    Var a = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
    Var b = make_leaf(rng.uniform_tensor({1, 8, 4, 4}, -1, 1));
    Tensor proj = rng.uniform_tensor({1, 8, 4, 4}, -1, 1);
    double e = grad_check([&] { return project(fusion(a, b), proj); }, {a, b});
    msg << " fusion " << e;
    ok = ok && e < 1e-3;
  }
  r.pass = ok;
  r.detail = msg.str();
  return r;
}

CriterionResult criterion3_entropy(const CodecModel* trained, const SyntheticClip* clip) {
  CriterionResult r{3};
  std::ostringstream msg;
  bool ok = true;
  const GaussianCdfBank& bank = cdf_bank();

  {  // 10k lossless round trip
    Rng rng(30);
    SymbolPlane plane;
    for (int i = 0; i < 10000; ++i) {
      const double sigma = std::exp(rng.uniform(std::log(0.15), std::log(8.0)));
      plane.scale_idx.push_back(uint16_t(bank.index_for_sigma(sigma)));
      plane.symbols.push_back(int32_t(std::llround(rng.normal() * sigma)));
    }
    auto bytes = encode_symbols(plane, bank);
    auto back = decode_symbols(bytes.data(), bytes.size(), plane.scale_idx, bank);
    ok = ok && back == plane.symbols;
    auto corrupted = bytes;
    corrupted[corrupted.size() / 2] ^= 0x20;
    bool threw = false;
    try {
      (void)decode_symbols(corrupted.data(), corrupted.size(), plane.scale_idx, bank);
    } catch (const BitstreamError&) {
      threw = true;
    }
    ok = ok && threw;
  }
  {  // golden vectors
    Rng rng(4242);
    SymbolPlane plane;
    for (size_t i = 0; i < 3000; ++i) {
      const double sigma = std::exp(rng.uniform(std::log(0.15), std::log(8.0)));
      plane.scale_idx.push_back(uint16_t(bank.index_for_sigma(sigma)));
      plane.symbols.push_back(int32_t(std::llround(rng.normal() * sigma)));
    }
    auto bytes = encode_symbols(plane, bank);
    auto golden = read_binary_file(std::string(CVC_SOURCE_DIR) + "/tests/golden/rangecoder_3000.bin");
    ok = ok && golden == bytes;
    auto decoded = decode_symbols(golden.data(), golden.size(), plane.scale_idx, bank);
    ok = ok && decoded == plane.symbols;
    if (golden != bytes) msg << " golden-mismatch";
  }
  if (trained && clip) {  // measured-vs-estimated rate on trained flow latents
    NoGradGuard ng;
    Var cur = make_leaf(trained->pad_frame(clip->frames[1]));
    Var prev = make_leaf(trained->pad_frame(clip->frames[0]));
    Var flow = trained->flow_net(cur, prev);
    auto fr = trained->flow_codec.forward(flow, CodingMode::Code, QuantMode::Round, nullptr);
    const size_t n = fr.latent.plane.symbols.size();
    auto bytes = encode_symbols(fr.latent.plane, bank);
    const double bound = fr.latent.est_bits / 8.0 * 1.02 + 32.0;
    msg << " trained-flow-latent " << n << " symbols, " << bytes.size() << " B vs bound " << bound;
    ok = ok && n >= 4096 && double(bytes.size()) <= bound &&
         double(bytes.size()) >= fr.latent.est_bits / 8.0;
  } else {
    ok = false;
    msg << " (no trained model available)";
  }
  r.pass = ok;
  r.detail = msg.str();
  return r;
}

CriterionResult criterion4_closed_loop() {
  CriterionResult r{4};
  std::ostringstream msg;
  const double t0 = now_s();

  CodecConfig cfg;  // default channel config, preset J
  cfg.seed = 11;
  cfg.intra_period = 8;
  CodecModel model(cfg);
  SyntheticClip clip =
      generate_synthetic_clip(MotionFamily::Elastic, SynthParams{32, 128, 128, 2.5}, 77);
  EvalOptions opts;
  opts.intra_period = 8;
  SequenceEvalResult res = evaluate_sequence(model, clip.frames, opts);
  bool ok = res.closed_loop_ok && int(res.frames.size()) == 32;

  // Preset A: offset substream must be exactly empty on every inter frame.
  CodecConfig cfg_a = small_config('A', 12);
  CodecModel model_a(cfg_a);
  SyntheticClip clip_a =
      generate_synthetic_clip(MotionFamily::Translate, SynthParams{4, 64, 64, 2.0}, 78);
  auto intra = model_a.encode_intra_frame(model_a.pad_frame(clip_a.frames[0]));
  CodecState st{intra.recon, intra.feature, 0};
  for (int t = 1; t < 4; ++t) {
    auto enc = model_a.encode_inter_frame(model_a.pad_frame(clip_a.frames[size_t(t)]), st);
    ok = ok && enc.record.streams[1].empty();
    st.recon = enc.recon;
    st.feature = enc.feature;
  }
  msg << "32 frames at 128x128 in " << int(now_s() - t0) << " s; preset A offset bytes 0";
  r.pass = ok;
  r.detail = msg.str();
  return r;
}

CriterionResult criterion5_parity() {
  CriterionResult r{5};
  CodecConfig cfg = small_config('J', 13);
  CodecModel m1(cfg);
  std::stringstream blob;
  m1.ps.save(blob);
  CodecModel m2(cfg);
  m2.ps.load(blob);
  NoGradGuard ng;
  Rng rng(14);
  Tensor feature = rng.uniform_tensor({1, 8, 64, 64}, -1, 1);
  Tensor flow = rng.uniform_tensor({1, 2, 64, 64}, -2, 2);
  Tensor offs = rng.uniform_tensor({1, cfg.deform.offset_channels(), 64, 64}, -0.3, 0.3);
  auto run = [&](CodecModel& m) {
    FeaturePyramid ref = m.feat.reference_pyramid(make_leaf(feature));
    auto flows = build_flow_pyramid(make_leaf(flow));
    std::array<Var, 3> off;
    off[0] = make_leaf(offs);
    std::vector<int> order;
    return m.build_contexts(ref, flows, off, &order);
  };
  auto c1 = run(m1);
  auto c2 = run(m2);
  bool ok = true;
  for (int l = 0; l < 3; ++l)
    ok = ok && std::memcmp(c1.final_[size_t(l)]->val.data(), c2.final_[size_t(l)]->val.data(),
                           size_t(c1.final_[size_t(l)]->val.numel()) * sizeof(double)) == 0;
  r.pass = ok;
  r.detail = "encoder/decoder enhancement outputs bit-identical";
  return r;
}

CriterionResult criterion6_overfit(CodecModel** trained_out, SyntheticClip** clip_out) {
  CriterionResult r{6};
  std::ostringstream msg;
  const double t0 = now_s();

  CodecConfig cfg;  // full default model, lambda 2048 (index 3), preset J
  cfg.seed = 21;
  cfg.lambda_index = 3;
  cfg.intra_period = 8;
  static CodecModel model(cfg);
  static SyntheticClip clip =
      generate_synthetic_clip(MotionFamily::Elastic, SynthParams{8, 64, 64, 2.5}, 11);
  *trained_out = &model;
  *clip_out = &clip;

  TrainSchedule sched;
  sched.stage_steps = {400, 500, 900, 200};
  sched.seed = 3;
  Trainer trainer(model, sched);
  TrainReport report = trainer.run(clip.frames);

  EvalOptions opts;
  opts.intra_period = 8;
  SequenceEvalResult ev = evaluate_sequence(model, clip.frames, opts);

  const bool loss_ok = report.final_joint_loss < 0.5 * report.initial_joint_loss;
  const bool psnr_ok = ev.avg_inter_psnr > 30.0;
  const bool bpp_ok = ev.avg_bpp < 1.0;
  msg << "inter PSNR " << ev.avg_inter_psnr << " dB, total bpp " << ev.avg_bpp << ", joint loss "
      << report.initial_joint_loss << " -> " << report.final_joint_loss << " ("
      << int(now_s() - t0) << " s, " << report.total_steps << " steps)";
  r.pass = loss_ok && psnr_ok && bpp_ok && ev.closed_loop_ok;
  r.detail = msg.str();
  return r;
}

CriterionResult criterion7_ablation() {
  CriterionResult r{7};
  r.hard = false;
  AblationOptions opts;
  opts.presets = {'A', 'D'};
  opts.anchor = 'A';
  opts.family = MotionFamily::Elastic;
  opts.clip = SynthParams{8, 64, 64, 2.5};
  opts.schedule.stage_steps = {60, 80, 160, 0};
  opts.schedule.seed = 5;
  opts.lambda_indices = {0, 1, 2, 3};
  opts.train_seed = 101;
  opts.eval_seed = 101;  // overfit regime: evaluate on the training clip
  opts.out_dir = "acceptance_ablation";
  AblationResult res = run_ablation(opts);
  std::ostringstream msg;
  msg << "D vs A: ";
  for (const auto& [preset, bd] : res.bd_vs_anchor) msg << "BD " << bd << "% ";
  msg << "(matched-quality dominance " << res.dominating_points << "/" << res.matched_points
      << ", ordering " << (res.ordering_held ? "HELD" : "NOT HELD") << ")";
  r.pass = !res.runs.empty();  // soft criterion: the harness must run and report
  r.detail = msg.str();
  std::printf("%s\n", res.table_text.c_str());
  return r;
}

CriterionResult criterion8_metrics() {
  CriterionResult r{8};
  std::ostringstream msg;
  bool ok = true;

  Tensor a = Tensor::full({1, 3, 16, 16}, 0.3);
  Tensor b = Tensor::full({1, 3, 16, 16}, 0.4);
  ok = ok && std::fabs(psnr(a, b) - 20.0) <= 1e-9;

  SyntheticClip clip = generate_synthetic_clip(MotionFamily::Elastic, SynthParams{1, 160, 160, 2.0}, 81);
  ok = ok && std::fabs(ms_ssim(clip.frames[0], clip.frames[0]) - 1.0) <= 1e-9;

  std::vector<RDCurvePoint> anchor = {{0.1, 30.0}, {0.18, 32.5}, {0.33, 35.0}, {0.61, 37.5}};
  ok = ok && std::fabs(bd_rate_percent(anchor, anchor)) <= 1e-9;
  std::vector<RDCurvePoint> doubled = anchor;
  for (auto& p : doubled) p.rate *= 2.0;
  const double bd2 = bd_rate_percent(anchor, doubled);
  ok = ok && std::fabs(bd2 - 100.0) <= 0.1;

  {  // fine-grid integration oracle
    Rng rng(82);
    std::vector<RDCurvePoint> an, te;
    double q = 30.0;
    double ra = 0.1, rt = 0.08;
    for (int i = 0; i < 4; ++i) {
      an.push_back({ra, q});
      te.push_back({rt, q + 0.2});
      q += 2.0 + rng.uniform(0, 1);
      ra *= 1.9;
      rt *= 2.05;
    }
    const double bd = bd_rate_percent(an, te);
    auto fit = [](std::vector<RDCurvePoint> pts) {
      std::sort(pts.begin(), pts.end(),
                [](const RDCurvePoint& x, const RDCurvePoint& y) { return x.quality < y.quality; });
      std::vector<double> xs, ys;
      for (const auto& p : pts) {
        xs.push_back(p.quality);
        ys.push_back(std::log10(p.rate));
      }
      return Pchip(xs, ys);
    };
    Pchip pa = fit(an), pt = fit(te);
    const double lo = std::max(pa.x_min(), pt.x_min());
    const double hi = std::min(pa.x_max(), pt.x_max());
    double ia = 0, it = 0;
    const int grid = 40000;
    for (int i = 0; i < grid; ++i) {
      const double x0 = lo + (hi - lo) * i / grid;
      const double x1 = lo + (hi - lo) * (i + 1) / grid;
      ia += 0.5 * (pa.eval(x0) + pa.eval(x1)) * (x1 - x0);
      it += 0.5 * (pt.eval(x0) + pt.eval(x1)) * (x1 - x0);
    }
    const double oracle = (std::pow(10.0, (it - ia) / (hi - lo)) - 1.0) * 100.0;
    msg << "bd " << bd << " vs oracle " << oracle;
    ok = ok && std::fabs(bd - oracle) <= 0.05;
  }
  r.pass = ok;
  r.detail = msg.str();
  return r;
}

}  // namespace

int main() {
  std::vector<CriterionResult> results;
  auto note = [&](CriterionResult res) {
    std::printf("[progress] criterion %d done: %s\n", res.id, res.pass ? "pass" : "FAIL");
    std::fflush(stdout);
    results.push_back(std::move(res));
  };

  note(criterion1_operator_oracles());
  note(criterion2_gradients());
  note(criterion5_parity());
  note(criterion8_metrics());
  note(criterion4_closed_loop());

  CodecModel* trained = nullptr;
  SyntheticClip* clip = nullptr;
  note(criterion6_overfit(&trained, &clip));
  note(criterion3_entropy(trained, clip));
  note(criterion7_ablation());

  std::sort(results.begin(), results.end(),
            [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
  int failures = 0;
  std::printf("\n==== acceptance summary ====\n");
  for (const auto& res : results) {
    const char* verdict = res.pass ? "PASS" : "FAIL";
    if (!res.hard) verdict = res.pass ? "REPORT" : "FAIL";
    std::printf("CRITERION %d %s%s%s\n", res.id, verdict, res.detail.empty() ? "" : " - ",
                res.detail.c_str());
    if (!res.pass && res.hard) ++failures;
    if (!res.pass && !res.hard) ++failures;  // harness must at least run
  }
  return failures == 0 ? 0 : 1;
}

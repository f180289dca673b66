#include "cvc/train.hpp"

#include <cmath>
#include <sstream>

namespace cvc {

namespace {

// 11x11 Gaussian (sigma 1.5) depthwise blur with replicate borders, matching
// the evaluation metric.
Var gauss_blur(const Var& x) {
  static Tensor kernel = [] {
    Tensor k1(Shape{1, 1, 1, 11});
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5.0;
      k1.v[size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += k1.v[size_t(i)];
    }
    for (auto& v : k1.v) v /= sum;
    return k1;
  }();
  const int c = x->val.shape.c;
  Tensor k2(Shape{c, 1, 11, 11});
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j)
        k2.at(cc, 0, i, j) = kernel.v[size_t(i)] * kernel.v[size_t(j)];
  Var padded = replicate_pad(x, 5, 5, 5, 5);
  return dwconv2d(padded, make_leaf(std::move(k2)), nullptr, 0);
}

Var pow_scalar(const Var& x, double p) { return exp_op(scale(log_op(add_scalar(x, 1e-12)), p)); }

Var ssim_scale(const Var& a, const Var& b, Var* cs_out) {
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  Var mu_a = gauss_blur(a), mu_b = gauss_blur(b);
  Var saa = gauss_blur(mul(a, a)), sbb = gauss_blur(mul(b, b)), sab = gauss_blur(mul(a, b));
  Var va = sub(saa, mul(mu_a, mu_a));
  Var vb = sub(sbb, mul(mu_b, mu_b));
  Var cov = sub(sab, mul(mu_a, mu_b));
  Var cs = div(add_scalar(scale(cov, 2.0), kC2), add_scalar(add(va, vb), kC2));
  Var lum = div(add_scalar(scale(mul(mu_a, mu_b), 2.0), kC1),
                add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), kC1));
  *cs_out = mean(cs);
  return mean(mul(lum, cs));
}

}  // namespace

Var ms_ssim_var(const Var& a, const Var& b) {
  const Shape s = a->val.shape;
  check_contract(s == b->val.shape, "ms_ssim_var: dim mismatch");
  check_contract(s.h >= 160 && s.w >= 160, "ms_ssim_var: inputs must be at least 160 px per side");
  check_contract(s.h % 16 == 0 && s.w % 16 == 0, "ms_ssim_var: dims must be divisible by 16");
  static const std::array<double, 5> kW = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  Var result;
  for (int c = 0; c < s.c; ++c) {
    Var pa = slice_c(a, c, c + 1), pb = slice_c(b, c, c + 1);
    Var prod;
    for (int scale_i = 0; scale_i < 5; ++scale_i) {
      Var cs;
      Var lum_cs = ssim_scale(pa, pb, &cs);
      Var term = scale_i < 4 ? pow_scalar(relu(cs), kW[size_t(scale_i)])
                             : pow_scalar(relu(lum_cs), kW[4]);
      prod = prod ? mul(prod, term) : term;
      if (scale_i < 4) {
        pa = avg_pool(pa, 2);
        pb = avg_pool(pb, 2);
      }
    }
    result = result ? add(result, prod) : prod;
  }
  return scale(result, 1.0 / double(s.c));
}

Var rd_loss(const FrameRates& rates, const Var& recon, const Var& target, double lambda,
            bool msssim_distortion, int64_t num_pixels) {
  check_contract(rates.flow && rates.offset && rates.hyper && rates.frame,
                 "rd_loss: every rate term must be present (pass explicit zeros for disabled paths)");
  check_contract(recon && target, "rd_loss: reconstruction and target required");
  Var bits = add(add(rates.flow, rates.offset), add(rates.hyper, rates.frame));
  Var rate = scale(bits, 1.0 / double(num_pixels));
  Var d = msssim_distortion ? sub(make_leaf(Tensor::scalar(1.0)), ms_ssim_var(recon, target))
                            : mse(recon, target);
  return add(rate, scale(d, lambda));
}

Trainer::Trainer(CodecModel& model, const TrainSchedule& sched, JsonlWriter* log)
    : model_(model), sched_(sched), log_(log), rng_(sched.seed) {}

Var Trainer::distortion(const Var& recon, const Var& target) const {
  if (model_.cfg.msssim_distortion)
    return sub(make_leaf(Tensor::scalar(1.0)), ms_ssim_var(recon, target));
  return mse(recon, target);
}

void Trainer::check_finite(double loss, int stage, int step) const {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "training diverged: non-finite loss at stage " << stage << " step " << step;
  if (log_ && log_->open())
    const_cast<JsonlWriter*>(log_)->write_line("{\"event\":\"diverged\",\"stage\":" +
                                               std::to_string(stage) +
                                               ",\"step\":" + std::to_string(step) + "}");
  throw InternalError(msg.str());
}

double Trainer::step_stage1(const std::vector<Tensor>& frames) {
  const int t = rng_.uniform_int(1, int(frames.size()) - 1);
  Var cur = make_leaf(frames[size_t(t)]);
  Var prev = make_leaf(frames[size_t(t - 1)]);
  Var flow = model_.flow_net(cur, prev);
  auto fr = model_.flow_codec.forward(flow, CodingMode::Train, model_.cfg.train_quant, &rng_);
  Var warped = bilinear_warp(prev, fr.recon);
  const int64_t npx = int64_t(cur->val.shape.h) * cur->val.shape.w;
  Var loss = add(scale(fr.latent.bits, 1.0 / double(npx)),
                 scale(mse(warped, cur), model_.cfg.lambda()));
  backward(loss);
  return loss->val.item();
}

double Trainer::step_stage23(const std::vector<Tensor>& frames, bool freeze_motion) {
  (void)freeze_motion;  // freezing is handled via parameter trainability
  const int t = rng_.uniform_int(1, int(frames.size()) - 1);
  Var cur = make_leaf(frames[size_t(t)]);
  Var prev = make_leaf(frames[size_t(t - 1)]);
  const int64_t npx = int64_t(cur->val.shape.h) * cur->val.shape.w;

  auto io = model_.intra_forward_train(prev, &rng_);
  Var zero = make_leaf(Tensor::scalar(0.0));
  Var intra_loss = rd_loss(FrameRates{zero, zero, io.bits_hyper, io.bits_frame}, io.recon, prev,
                           model_.cfg.lambda(), model_.cfg.msssim_distortion, npx);

  auto po = model_.inter_forward_train(cur, io.recon, io.feature, &rng_);
  Var inter_loss = rd_loss(FrameRates{po.bits_flow, po.bits_offset, po.bits_hyper, po.bits_frame},
                           po.recon, cur, model_.cfg.lambda(), model_.cfg.msssim_distortion, npx);

  Var loss = add(intra_loss, inter_loss);
  backward(loss);
  return loss->val.item();
}

double Trainer::step_stage4(const std::vector<Tensor>& frames) {
  const int n = int(frames.size());
  const int a = n >= 3 ? rng_.uniform_int(0, n - 3) : 0;
  Var f0 = make_leaf(frames[size_t(a)]);
  Var f1 = make_leaf(frames[size_t(a + 1)]);
  Var f2 = make_leaf(frames[size_t(std::min(a + 2, n - 1))]);
  const int64_t npx = int64_t(f0->val.shape.h) * f0->val.shape.w;
  Var zero = make_leaf(Tensor::scalar(0.0));

  auto io = model_.intra_forward_train(f0, &rng_);
  Var loss = rd_loss(FrameRates{zero, zero, io.bits_hyper, io.bits_frame}, io.recon, f0,
                     model_.cfg.lambda(), model_.cfg.msssim_distortion, npx);
  auto p1 = model_.inter_forward_train(f1, io.recon, io.feature, &rng_);
  loss = add(loss, rd_loss(FrameRates{p1.bits_flow, p1.bits_offset, p1.bits_hyper, p1.bits_frame},
                           p1.recon, f1, model_.cfg.lambda(), model_.cfg.msssim_distortion, npx));
  auto p2 = model_.inter_forward_train(f2, p1.recon, p1.feature, &rng_);
  loss = add(loss, rd_loss(FrameRates{p2.bits_flow, p2.bits_offset, p2.bits_hyper, p2.bits_frame},
                           p2.recon, f2, model_.cfg.lambda(), model_.cfg.msssim_distortion, npx));
  backward(loss);
  return loss->val.item();
}

double Trainer::eval_joint_loss(const std::vector<Tensor>& frames) {
  NoGradGuard ng;
  Rng eval_rng(123);
  double acc = 0.0;
  int count = 0;
  for (size_t t = 1; t < frames.size(); ++t) {
    Var cur = make_leaf(frames[t]);
    Var prev = make_leaf(frames[t - 1]);
    const int64_t npx = int64_t(cur->val.shape.h) * cur->val.shape.w;
    Var zero = make_leaf(Tensor::scalar(0.0));
    auto io = model_.intra_forward_train(prev, &eval_rng);
    auto po = model_.inter_forward_train(cur, io.recon, io.feature, &eval_rng);
    Var loss = add(rd_loss(FrameRates{zero, zero, io.bits_hyper, io.bits_frame}, io.recon, prev,
                           model_.cfg.lambda(), model_.cfg.msssim_distortion, npx),
                   rd_loss(FrameRates{po.bits_flow, po.bits_offset, po.bits_hyper, po.bits_frame},
                           po.recon, cur, model_.cfg.lambda(), model_.cfg.msssim_distortion, npx));
    acc += loss->val.item();
    ++count;
  }
  return acc / std::max(count, 1);
}

void Trainer::run_stage(int stage, const std::vector<Tensor>& frames, TrainReport* report) {
  check_contract(stage >= 1 && stage <= 4, "run_stage: stage must be 1..4");
  const int steps = sched_.stage_steps[size_t(stage - 1)];
  if (steps <= 0) return;

  // Trainability and the optimizer's parameter set follow the stage.
  model_.ps.set_trainable_all(true);
  std::vector<Parameter*> params;
  if (stage == 1) {
    model_.ps.set_trainable_all(false);
    params = model_.ps.with_prefix(motion_prefixes());
    for (auto* p : params) p->set_trainable(true);
  } else if (stage == 2) {
    params = model_.ps.all();
    std::vector<Parameter*> frozen = model_.ps.with_prefix(motion_prefixes());
    for (auto* p : frozen) p->set_trainable(false);
    std::erase_if(params, [&](Parameter* p) { return !p->trainable(); });
  } else {
    params = model_.ps.all();
  }
  opt_.emplace(params, stage == 4 ? sched_.lr_final : sched_.lr_early, sched_.weight_decay);

  for (int s = 0; s < steps; ++s) {
    opt_->zero_grad();
    double loss_acc = 0.0;
    for (int b = 0; b < sched_.batch; ++b) {
      switch (stage) {
        case 1: loss_acc += step_stage1(frames); break;
        case 2: loss_acc += step_stage23(frames, true); break;
        case 3: loss_acc += step_stage23(frames, false); break;
        case 4: loss_acc += step_stage4(frames); break;
      }
    }
    const double loss = loss_acc / sched_.batch;
    check_finite(loss, stage, s);
    opt_->step(sched_.clip_norm);
    ++global_step_;
    if (report) report->stage_last_loss[size_t(stage - 1)] = loss;
    if (log_ && log_->open() && (s % sched_.log_every == 0 || s + 1 == steps)) {
      std::ostringstream line;
      line << "{\"event\":\"train_step\",\"stage\":" << stage << ",\"step\":" << s
           << ",\"global_step\":" << global_step_ << ",\"loss\":" << loss << "}";
      log_->write_line(line.str());
    }
  }
  model_.ps.set_trainable_all(true);
}

TrainReport Trainer::run(const std::vector<Tensor>& frames) {
  TrainReport report;
  for (int stage = 1; stage <= 4; ++stage) {
    if (stage == 4 && !sched_.enable_stage4) break;
    if (stage == 3) report.initial_joint_loss = eval_joint_loss(frames);
    run_stage(stage, frames, &report);
  }
  report.final_joint_loss = eval_joint_loss(frames);
  report.total_steps = global_step_;
  return report;
}

}  // namespace cvc

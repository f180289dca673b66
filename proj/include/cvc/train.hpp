#ifndef CVC_TRAIN_HPP
#define CVC_TRAIN_HPP

#include <functional>

#include "cvc/io.hpp"
#include "cvc/model.hpp"
#include "cvc/synth.hpp"

namespace cvc {

// Rate terms of one coded frame, in bits (differentiable).
struct FrameRates {
  Var flow, offset, hyper, frame;
};

// L = (R_flow + R_offset + R_hyper + R_frame) / num_pixels + lambda * D,
// with D = MSE or 1 - MS-SSIM. Missing rate terms are a contract violation
// (disabled branches must pass an explicit zero).
Var rd_loss(const FrameRates& rates, const Var& recon, const Var& target, double lambda,
            bool msssim_distortion, int64_t num_pixels);

// Differentiable MS-SSIM matching the evaluation metric (dims must be
// divisible by 16 and >= 160).
Var ms_ssim_var(const Var& a, const Var& b);

struct TrainSchedule {
  std::array<int, 4> stage_steps = {400, 500, 900, 200};
  double lr_early = 1e-4;   // stages 1-3
  double lr_final = 1e-5;   // stage 4
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  int batch = 1;
  int log_every = 25;
  bool enable_stage4 = true;
  uint64_t seed = 7;
};

struct TrainReport {
  double initial_joint_loss = 0;  // stage-3 objective at its first step
  double final_joint_loss = 0;
  int64_t total_steps = 0;
  std::array<double, 4> stage_last_loss{};
};

// Four-stage schedule:
//   1  flow net + flow codec (warp-reconstruction loss + flow rate)
//   2  offsets, contexts, contextual codec and intra codec; motion frozen
//   3  everything jointly, single-frame loss
//   4  optional two-frame cascaded fine-tune at a lower rate
// Losses are logged as JSONL events; a non-finite loss aborts with a
// diagnostic.
class Trainer {
 public:
  Trainer(CodecModel& model, const TrainSchedule& sched, JsonlWriter* log = nullptr);

  TrainReport run(const std::vector<Tensor>& frames);
  void run_stage(int stage, const std::vector<Tensor>& frames, TrainReport* report);

  // Deterministic joint objective (intra + inter RD) averaged over every
  // consecutive pair; used for before/after comparisons.
  double eval_joint_loss(const std::vector<Tensor>& frames);

  // Single steps, exposed for tests. Each returns the step loss.
  double step_stage1(const std::vector<Tensor>& frames);
  double step_stage23(const std::vector<Tensor>& frames, bool freeze_motion);
  double step_stage4(const std::vector<Tensor>& frames);

  static std::vector<std::string> motion_prefixes() { return {"flow_net.", "flow_codec."}; }

 private:
  Var distortion(const Var& recon, const Var& target) const;
  void check_finite(double loss, int stage, int step) const;

  CodecModel& model_;
  TrainSchedule sched_;
  JsonlWriter* log_;
  Rng rng_;
  std::optional<AdamW> opt_;
  int opt_stage_ = -1;
  int64_t global_step_ = 0;
};

}  // namespace cvc

#endif

#ifndef CVC_EVAL_HPP
#define CVC_EVAL_HPP

#include "cvc/bdrate.hpp"
#include "cvc/io.hpp"
#include "cvc/model.hpp"
#include "cvc/synth.hpp"
#include "cvc/train.hpp"

namespace cvc {

// Per-frame rate/quality record. bpp counts the four substream payloads
// (headers excluded) against the original (pre-padding) pixel count; the
// breakdown sums to the total exactly.
struct RDPoint {
  int frame_index = 0;
  FrameType type = FrameType::Intra;
  double bpp = 0;
  double bpp_flow = 0, bpp_offset = 0, bpp_hyper = 0, bpp_frame = 0;
  double est_bpp = 0;  // continuous rate estimate
  double psnr_db = 0;
  double msssim = -1;  // -1 when not computed
};

struct SequenceEvalResult {
  std::vector<RDPoint> frames;
  double avg_bpp = 0;
  double avg_psnr = 0;
  double avg_inter_psnr = 0;
  double avg_msssim = -1;
  bool closed_loop_ok = true;
  std::vector<uint8_t> bitstream;
};

struct EvalOptions {
  int intra_period = 8;
  int max_frames = -1;
  bool compute_msssim = false;        // requires >= 160 px frames
  bool keep_reconstructions = false;  // fill `recons`
  JsonlWriter* log = nullptr;
};

// Codes the sequence through the bitstream path, verifies per frame that the
// decoder reproduces the encoder-internal reconstruction bit-exactly, and
// aggregates rate/quality. Also returns the complete sequence bitstream.
SequenceEvalResult evaluate_sequence(const CodecModel& model, const std::vector<Tensor>& frames,
                                     const EvalOptions& opts,
                                     std::vector<Tensor>* recons = nullptr);

// Decode a sequence bitstream produced by evaluate_sequence / the encode CLI.
std::vector<Tensor> decode_sequence(const CodecModel& model, const std::vector<uint8_t>& bytes);

// -- ablation harness ---------------------------------------------------------

struct AblationOptions {
  std::vector<char> presets = {'A', 'D'};
  char anchor = 'A';
  MotionFamily family = MotionFamily::Elastic;
  SynthParams clip;             // training/eval clip geometry
  TrainSchedule schedule;       // shared budget for every (preset, lambda) run
  std::vector<int> lambda_indices = {0, 1, 2, 3};
  uint64_t train_seed = 101;    // clip used for training
  uint64_t eval_seed = 202;     // held-out clip
  int intra_period = 8;
  std::string out_dir;          // where table/plot files land ("" = skip files)
  JsonlWriter* log = nullptr;
};

struct AblationRun {
  char preset = 'A';
  int lambda_index = 0;
  double bpp = 0, psnr = 0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  // BD-rate (%) of each non-anchor preset against the anchor.
  std::vector<std::pair<char, double>> bd_vs_anchor;
  // For the headline pair (first non-anchor preset vs anchor): the number of
  // matched-quality points where the test preset needs fewer bits.
  int matched_points = 0;
  int dominating_points = 0;
  bool ordering_held = false;
  std::string table_text;
};

// Trains one model per (preset, lambda) under the same budget and seed,
// evaluates each on a held-out clip of the same family, and compares RD
// curves against the anchor preset. Emits a text table plus CSV/SVG files
// when out_dir is set.
AblationResult run_ablation(const AblationOptions& opts);

}  // namespace cvc

#endif

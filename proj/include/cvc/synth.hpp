#ifndef CVC_SYNTH_HPP
#define CVC_SYNTH_HPP

#include <string>
#include <vector>

#include "cvc/tensor.hpp"

namespace cvc {

enum class MotionFamily { Translate, Rotate, Elastic, Occlude };

std::string to_string(MotionFamily f);
MotionFamily motion_family_from_string(const std::string& s);

// Procedurally textured clip with exact per-step ground-truth flow. Frames are
// rendered by evaluating a continuous multi-octave value-noise texture along
// the t-fold composition of a smooth per-step backward map psi
// (frame_t(p) = tex(psi^t(p))), so warp(frame_{t-1}, flow_t) reproduces
// frame_t up to bilinear interpolation error on valid pixels.
struct SyntheticClip {
  std::vector<Tensor> frames;  // (1,3,H,W), values in [0,1]
  std::vector<Tensor> flows;   // ground truth t-1 -> t, (1,2,H,W), pixels
  std::vector<Tensor> valid;   // (1,1,H,W), 1 where the flow is valid
  MotionFamily family = MotionFamily::Translate;
};

struct SynthParams {
  int frames = 8;
  int height = 64;
  int width = 64;
  double amplitude = 2.5;  // peak per-step displacement in pixels
};

SyntheticClip generate_synthetic_clip(MotionFamily family, const SynthParams& p, uint64_t seed);

}  // namespace cvc

#endif

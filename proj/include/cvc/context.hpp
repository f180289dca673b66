#ifndef CVC_CONTEXT_HPP
#define CVC_CONTEXT_HPP

#include <array>
#include <optional>

#include "cvc/motion.hpp"

namespace cvc {

// Multi-scale features: f[0] is c0 @ full resolution, f[1] c1 @ 1/2, f[2] c2 @ 1/4.
struct FeaturePyramid {
  std::array<Var, 3> f;
};

// Feature extraction for the current frame and the propagated reference
// feature. The two stride-2 pyramid convs are shared between the reference
// and the encoder-side current pyramid.
class FeatureNets {
 public:
  FeatureNets() = default;
  FeatureNets(ParamStore& ps, const std::string& prefix, int c0, int c1, int c2);

  Var current_feature(const Var& frame) const;
  FeaturePyramid reference_pyramid(const Var& propagated_feature) const;
  FeaturePyramid pyramid_from(const Var& f0) const;  // shared downsampling convs

 private:
  Conv2d cur1_, cur2_;
  Conv2d ref_refine_;
  Conv2d down1_, down2_;
};

// Offset estimation + coding for one scale. Offsets are estimated at half the
// scale's resolution (stride-2 first conv), coded by a FactorizedCodec and
// bilinearly upsampled back.
class OffsetBranch {
 public:
  OffsetBranch() = default;
  OffsetBranch(ParamStore& ps, const std::string& prefix, int feat_channels, int offset_channels,
               int latent_channels);

  // Guided mode feeds (F_t, warp(F_ref, flow), flow); plain DC feeds
  // (F_t, F_ref, zero flow).
  Var estimate(const Var& f_cur, const Var& f_ref_aligned, const Var& flow) const;

  const FactorizedCodec& codec() const { return codec_; }

 private:
  Conv2d c1_, c2_, c3_;
  FactorizedCodec codec_;
};

struct GenCounters {
  std::array<int, 3> warp{0, 0, 0};
  std::array<int, 3> fgdc{0, 0, 0};
  std::array<int, 3> dc{0, 0, 0};
};

// Hybrid temporal-context generation: per scale either plain flow warping or
// (flow-guided) deformable compensation with the coded offsets.
class HybridContextGen {
 public:
  HybridContextGen() = default;
  HybridContextGen(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg);

  // offsets[l] must be non-null for every scale configured as FGDC/DC
  // (decoded and upsampled to the scale's resolution).
  std::array<Var, 3> generate(const AblationConfig& ab, const FeaturePyramid& ref,
                              const std::array<Var, 3>& flows, const std::array<Var, 3>& offsets,
                              const DeformKernelSpec& spec, GenCounters* counters = nullptr) const;

 private:
  std::array<Parameter*, 3> weight_{nullptr, nullptr, nullptr};
  std::array<Parameter*, 3> bias_{nullptr, nullptr, nullptr};
};

// Identity-at-center-tap initialization (plus a little noise) for deformable
// kernel weights, so an untrained FGDC starts as a flow warp.
void init_deform_identity(Parameter* weight, int kernel, uint64_t seed);

}  // namespace cvc

#endif

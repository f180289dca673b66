#ifndef CVC_ENHANCE_HPP
#define CVC_ENHANCE_HPP

#include <optional>
#include <vector>

#include "cvc/context.hpp"

namespace cvc {

struct EnhanceResult {
  std::array<Var, 3> local;   // locally enhanced contexts (pass-through when disabled)
  Var global2;                // cross-attention enhanced quarter-scale context (may be null)
  Var fused2;                 // channel-spatial fusion of local/global at quarter scale
  std::array<Var, 3> final_;  // hierarchically fused contexts fed to the codec
};

// One cross-attention block: LayerNorm on both inputs, Q from the context,
// K/V from the reference, channel-transposed attention, then a gated
// depthwise feed-forward. Skip connections around both halves.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int channels, int heads,
                      int ffn_expansion);

  Var operator()(const Var& x, const Var& reference) const;

 private:
  int heads_ = 4;
  Parameter *ln_x_g_ = nullptr, *ln_x_b_ = nullptr;
  Parameter *ln_r_g_ = nullptr, *ln_r_b_ = nullptr;
  Parameter *ln_f_g_ = nullptr, *ln_f_b_ = nullptr;
  Conv2d q_proj_, k_proj_, v_proj_, out_proj_;
  DwConv2d q_dw_, k_dw_, v_dw_;
  Parameter* tau_ = nullptr;
  Conv2d ffn_in_, ffn_out_;
  DwConv2d ffn_dw_;
  int ffn_hidden_ = 0;
};

// Channel gate (pooled two ways through a shared bottleneck) followed by a
// spatial gate, then a 3x3 projection back to c2 channels. `bypass_gates`
// forces both gates to one (test hook).
class FusionCbam {
 public:
  FusionCbam() = default;
  FusionCbam(ParamStore& ps, const std::string& prefix, int channels);

  Var operator()(const Var& local, const Var& global, bool bypass_gates = false) const;
  // Exposed for tests: the channel/spatial gate values of the last call are
  // not cached; recompute via these helpers.
  Var channel_gate(const Var& x) const;
  Var spatial_gate(const Var& x) const;

 private:
  Conv2d mlp1_, mlp2_;
  Conv2d spatial_;
  Conv2d out_;
};

// Progressive multi-scale refinement plus the global branch and hierarchical
// fusion. Everything here runs identically on encoder and decoder from
// decoded signals only; it contributes no bits.
class ContextEnhancer {
 public:
  ContextEnhancer() = default;
  ContextEnhancer(ParamStore& ps, const std::string& prefix, const CodecConfig& cfg);

  EnhanceResult run(const AblationConfig& ab, const std::array<Var, 3>& generated,
                    const FeaturePyramid& ref, const std::array<Var, 3>& flows,
                    const Var& decoded_offsets0, const DeformKernelSpec& spec,
                    std::vector<int>* order_log = nullptr, bool bypass_fusion_gates = false) const;

 private:
  struct ScaleNet {
    Conv2d p1, p2, p3;
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    bool present = false;
  };
  std::array<ScaleNet, 3> local_;
  std::vector<CrossAttentionBlock> attention_;
  FusionCbam fusion_;
  bool has_attention_ = false;
  Upconv2x up2_;
  Conv2d fuse1_;
  Upconv2x up1_;
  Conv2d fuse0_;
};

}  // namespace cvc

#endif

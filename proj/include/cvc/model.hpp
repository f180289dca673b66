#ifndef CVC_MODEL_HPP
#define CVC_MODEL_HPP

#include <optional>

#include "cvc/bitstream.hpp"
#include "cvc/codec.hpp"

namespace cvc {

// Closed-loop coding state. Tensors live in the padded domain so pyramids and
// flows keep exact power-of-two dims; reset at every intra frame boundary is
// implicit (intra coding ignores the previous state).
struct CodecState {
  Tensor recon;    // previous decoded frame (1,3,H,W), padded
  Tensor feature;  // propagated decoded feature (1,c0,H,W), padded
  int frame_index = 0;
};

struct SubstreamBits {
  double flow = 0, offset = 0, hyper = 0, frame = 0;
  double total() const { return flow + offset + hyper + frame; }
};

// The full conditional video codec: every submodule, its parameters, and the
// three entry paths (differentiable training forward, bitstream encode,
// bitstream decode). Encode reconstructs through exactly the code the decoder
// runs, so encoder state and decoder state never diverge.
class CodecModel {
 public:
  explicit CodecModel(const CodecConfig& config);
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  // ---- differentiable forward (training) ----
  struct InterTrain {
    Var recon;     // clamped to [0,1]
    Var feature;   // propagated feature
    Var bits_flow, bits_offset, bits_hyper, bits_frame;
    Var flow_decoded;
  };
  InterTrain inter_forward_train(const Var& x, const Var& ref_recon, const Var& ref_feature,
                                 Rng* rng) const;
  IntraCodec::TrainOut intra_forward_train(const Var& x, Rng* rng) const;

  // ---- bitstream paths ----
  struct EncodedFrame {
    FrameRecord record;
    SubstreamBits est_bits;  // continuous rate estimates (bits)
    Tensor recon, feature;   // padded-domain outputs of the shared decode math
    GenCounters counters;
  };
  EncodedFrame encode_intra_frame(const Tensor& padded_frame) const;
  EncodedFrame encode_inter_frame(const Tensor& padded_frame, const CodecState& state) const;

  struct DecodedFrame {
    Tensor recon, feature;
  };
  DecodedFrame decode_intra_frame(const FrameRecord& rec, int padded_h, int padded_w) const;
  DecodedFrame decode_inter_frame(const FrameRecord& rec, const CodecState& state) const;

  // Frame padding to the configured multiple (reflected right/bottom).
  Tensor pad_frame(const Tensor& frame) const;
  static Tensor crop_frame(const Tensor& padded, int height, int width);

  CodecConfig cfg;
  ParamStore ps;

  FlowEstimator flow_net;
  FactorizedCodec flow_codec;
  FeatureNets feat;
  std::array<std::optional<OffsetBranch>, 3> offset;
  HybridContextGen gen;
  ContextEnhancer enhancer;
  ContextualEncoder ctx_enc;
  ContextualDecoder ctx_dec;
  HyperCodec hyper;
  IntraCodec intra;

  // Context pipeline shared verbatim by training, the encoder's internal
  // reconstruction and the decoder. Consumes decoded quantities only.
  struct ContextsOut {
    std::array<Var, 3> final_;
    GenCounters counters;
  };
  ContextsOut build_contexts(const FeaturePyramid& ref_pyr, const std::array<Var, 3>& flows,
                             const std::array<Var, 3>& decoded_offsets,
                             std::vector<int>* order_log = nullptr,
                             bool bypass_fusion_gates = false) const;

 private:
  struct OffsetCoding {
    std::array<Var, 3> decoded;  // upsampled to scale res; null when unused
    Var bits;                    // train mode
    SymbolPlane plane;           // code mode, all scales concatenated
    double est_bits = 0;
  };
  OffsetCoding code_offsets(const Var& x, const FeaturePyramid& ref_pyr,
                            const std::array<Var, 3>& flows, CodingMode mode, Rng* rng) const;
  std::array<Var, 3> decode_offsets_from_symbols(const std::vector<int32_t>& symbols, int padded_h,
                                                 int padded_w) const;
  std::array<int, 3> offset_symbol_counts(int padded_h, int padded_w) const;
};

// Checkpoints are self-describing: architecture hash + parameter blob + CRC.
void save_checkpoint(const CodecModel& model, const std::string& path, int stage, int64_t step);
struct CheckpointMeta {
  int stage = 0;
  int64_t step = 0;
};
CheckpointMeta load_checkpoint(CodecModel& model, const std::string& path);

}  // namespace cvc

#endif

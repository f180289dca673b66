#ifndef CVC_CONFIG_HPP
#define CVC_CONFIG_HPP

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvc/ops.hpp"

namespace cvc {

// Per-scale temporal-context generation strategy. Scale index 0 is the
// original resolution, 2 the quarter resolution.
enum class GenStrategy { Flow, Fgdc, Dc };

std::string to_string(GenStrategy s);
GenStrategy gen_strategy_from_string(const std::string& s);

struct AblationConfig {
  // gen[l] for scale l in {0 (original), 1 (half), 2 (quarter)}.
  std::array<GenStrategy, 3> gen = {GenStrategy::Fgdc, GenStrategy::Flow, GenStrategy::Flow};
  bool enhance_local[3] = {true, true, true};  // per-scale FGDC refinement
  bool cross_attention = true;                 // quarter-scale global branch

  bool scale_uses_offsets(int level) const { return gen[size_t(level)] != GenStrategy::Flow; }
  bool any_offsets() const {
    return scale_uses_offsets(0) || scale_uses_offsets(1) || scale_uses_offsets(2);
  }
  bool any_enhancement() const {
    return enhance_local[0] || enhance_local[1] || enhance_local[2] || cross_attention;
  }
};

// Named presets matching the ablation grid: A..F vary the generation strategy
// (no enhancement), G..J stack enhancement stages on top of D. J is the full
// model and the default.
AblationConfig ablation_preset(char preset);

struct CodecConfig {
  // architecture
  int c0 = 48, c1 = 64, c2 = 96;      // feature channels per scale
  int latent_channels = 96;           // frame latent at 1/16 resolution
  int hyper_channels = 64;
  int flow_latent_channels = 64;
  int offset_latent_channels = 64;
  DeformKernelSpec deform{};          // K=3, G=8, modulated
  int attention_heads = 4;
  int attention_blocks = 4;
  int ffn_expansion = 2;

  AblationConfig ablation = ablation_preset('J');

  // rate-distortion point
  int lambda_index = 3;               // into the lambda table below
  bool msssim_distortion = false;
  double lambda() const;

  // coding
  int intra_period = 8;
  int pad_multiple = 64;

  // reproducibility
  uint64_t seed = 1;

  // quantization surrogate used in training rate terms
  QuantMode train_quant = QuantMode::Round;

  static constexpr std::array<double, 4> kLambdaMse = {256.0, 512.0, 1024.0, 2048.0};
  static constexpr std::array<double, 4> kLambdaMsssim = {8.0, 16.0, 32.0, 64.0};

  // Canonical text form of every field that affects decode compatibility
  // (architecture + lambda index; not seeds, paths or GOP settings).
  std::string canonical_architecture() const;
  uint64_t hash() const { return fnv1a64(canonical_architecture()); }

  void validate() const;  // throws ConfigError with a path-qualified message
};

// Plain-text key-value config file ("a.b.c = value", '#' comments). Unknown
// keys and malformed values raise ConfigError naming the offending key.
CodecConfig load_config_file(const std::string& path);
void apply_config_line(CodecConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

}  // namespace cvc

#endif

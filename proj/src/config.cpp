#include "cvc/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace cvc {

std::string to_string(GenStrategy s) {
  switch (s) {
    case GenStrategy::Flow: return "flow";
    case GenStrategy::Fgdc: return "fgdc";
    case GenStrategy::Dc: return "dc";
  }
  return "?";
}

GenStrategy gen_strategy_from_string(const std::string& s) {
  if (s == "flow") return GenStrategy::Flow;
  if (s == "fgdc") return GenStrategy::Fgdc;
  if (s == "dc") return GenStrategy::Dc;
  throw ConfigError("unknown generation strategy '" + s + "' (expected flow|fgdc|dc)");
}

AblationConfig ablation_preset(char preset) {
  AblationConfig a;
  a.gen = {GenStrategy::Flow, GenStrategy::Flow, GenStrategy::Flow};
  a.enhance_local[0] = a.enhance_local[1] = a.enhance_local[2] = false;
  a.cross_attention = false;
  switch (preset) {
    case 'A':
      break;
    case 'B':
      a.gen[2] = GenStrategy::Fgdc;
      break;
    case 'C':
      a.gen[1] = GenStrategy::Fgdc;
      break;
    case 'D':
      a.gen[0] = GenStrategy::Fgdc;
      break;
    case 'E':
      a.gen[0] = GenStrategy::Fgdc;
      a.gen[1] = GenStrategy::Fgdc;
      break;
    case 'F':
      a.gen = {GenStrategy::Dc, GenStrategy::Dc, GenStrategy::Dc};
      break;
    case 'G':
      a.gen[0] = GenStrategy::Fgdc;
      a.enhance_local[2] = true;
      break;
    case 'H':
      a.gen[0] = GenStrategy::Fgdc;
      a.enhance_local[2] = true;
      a.cross_attention = true;
      break;
    case 'I':
      a.gen[0] = GenStrategy::Fgdc;
      a.enhance_local[2] = true;
      a.enhance_local[1] = true;
      a.cross_attention = true;
      break;
    case 'J':
      a.gen[0] = GenStrategy::Fgdc;
      a.enhance_local[2] = true;
      a.enhance_local[1] = true;
      a.enhance_local[0] = true;
      a.cross_attention = true;
      break;
    default:
      throw ConfigError(std::string("unknown ablation preset '") + preset + "' (expected A..J)");
  }
  return a;
}

double CodecConfig::lambda() const {
  const auto& table = msssim_distortion ? kLambdaMsssim : kLambdaMse;
  return table[size_t(lambda_index)];
}

std::string CodecConfig::canonical_architecture() const {
  std::ostringstream out;
  out << "ablation.cross_attention=" << (ablation.cross_attention ? 1 : 0) << "\n";
  for (int l = 0; l < 3; ++l)
    out << "ablation.enhance_local" << l << "=" << (ablation.enhance_local[l] ? 1 : 0) << "\n";
  for (int l = 0; l < 3; ++l)
    out << "ablation.gen" << l << "=" << to_string(ablation.gen[size_t(l)]) << "\n";
  out << "model.attention_blocks=" << attention_blocks << "\n";
  out << "model.attention_heads=" << attention_heads << "\n";
  out << "model.c0=" << c0 << "\n";
  out << "model.c1=" << c1 << "\n";
  out << "model.c2=" << c2 << "\n";
  out << "model.deform.groups=" << deform.groups << "\n";
  out << "model.deform.kernel=" << deform.kernel << "\n";
  out << "model.deform.modulated=" << (deform.modulated ? 1 : 0) << "\n";
  out << "model.ffn_expansion=" << ffn_expansion << "\n";
  out << "model.flow_latent_channels=" << flow_latent_channels << "\n";
  out << "model.hyper_channels=" << hyper_channels << "\n";
  out << "model.latent_channels=" << latent_channels << "\n";
  out << "model.offset_latent_channels=" << offset_latent_channels << "\n";
  out << "model.pad_multiple=" << pad_multiple << "\n";
  out << "rd.lambda_index=" << lambda_index << "\n";
  out << "rd.msssim=" << (msssim_distortion ? 1 : 0) << "\n";
  return out.str();
}

void CodecConfig::validate() const {
  auto fail = [](const std::string& path, const std::string& msg) {
    throw ConfigError(path + ": " + msg);
  };
  if (c0 < 1 || c1 < 1 || c2 < 1) fail("model.c0/c1/c2", "channel counts must be positive");
  if (c0 % deform.groups || c1 % deform.groups || c2 % deform.groups)
    fail("model.deform.groups",
         "groups (" + std::to_string(deform.groups) + ") must divide every scale's channel count");
  if (deform.kernel % 2 == 0 || deform.kernel < 1)
    fail("model.deform.kernel", "kernel must be odd and positive");
  if (c2 % attention_heads) fail("model.attention_heads", "heads must divide model.c2");
  if (attention_blocks < 1) fail("model.attention_blocks", "need at least one block");
  if (lambda_index < 0 || lambda_index >= int(kLambdaMse.size()))
    fail("rd.lambda_index", "index must be in [0, 3]");
  if (intra_period < 1) fail("gop.intra_period", "must be >= 1");
  if (pad_multiple < 16 || (pad_multiple & (pad_multiple - 1)))
    fail("model.pad_multiple", "must be a power of two >= 16");
  if (ffn_expansion < 1) fail("model.ffn_expansion", "must be >= 1");
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw ConfigError(key + ": '" + v + "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean (true|false)");
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw ConfigError(key + ": '" + v + "' is not an unsigned integer");
  }
}

}  // namespace

void apply_config_line(CodecConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model.c0") cfg.c0 = parse_int(key, value);
  else if (key == "model.c1") cfg.c1 = parse_int(key, value);
  else if (key == "model.c2") cfg.c2 = parse_int(key, value);
  else if (key == "model.latent_channels") cfg.latent_channels = parse_int(key, value);
  else if (key == "model.hyper_channels") cfg.hyper_channels = parse_int(key, value);
  else if (key == "model.flow_latent_channels") cfg.flow_latent_channels = parse_int(key, value);
  else if (key == "model.offset_latent_channels") cfg.offset_latent_channels = parse_int(key, value);
  else if (key == "model.deform.kernel") cfg.deform.kernel = parse_int(key, value);
  else if (key == "model.deform.groups") cfg.deform.groups = parse_int(key, value);
  else if (key == "model.deform.modulated") cfg.deform.modulated = parse_bool(key, value);
  else if (key == "model.attention_heads") cfg.attention_heads = parse_int(key, value);
  else if (key == "model.attention_blocks") cfg.attention_blocks = parse_int(key, value);
  else if (key == "model.ffn_expansion") cfg.ffn_expansion = parse_int(key, value);
  else if (key == "model.pad_multiple") cfg.pad_multiple = parse_int(key, value);
  else if (key == "ablation.preset") {
    if (value.size() != 1) throw ConfigError(key + ": expected a single letter A..J");
    cfg.ablation = ablation_preset(value[0]);
  } else if (key == "ablation.gen.quarter") cfg.ablation.gen[2] = gen_strategy_from_string(value);
  else if (key == "ablation.gen.half") cfg.ablation.gen[1] = gen_strategy_from_string(value);
  else if (key == "ablation.gen.original") cfg.ablation.gen[0] = gen_strategy_from_string(value);
  else if (key == "ablation.enhance.local_quarter") cfg.ablation.enhance_local[2] = parse_bool(key, value);
  else if (key == "ablation.enhance.local_half") cfg.ablation.enhance_local[1] = parse_bool(key, value);
  else if (key == "ablation.enhance.local_original") cfg.ablation.enhance_local[0] = parse_bool(key, value);
  else if (key == "ablation.enhance.cross_attention") cfg.ablation.cross_attention = parse_bool(key, value);
  else if (key == "rd.lambda_index") cfg.lambda_index = parse_int(key, value);
  else if (key == "rd.msssim") cfg.msssim_distortion = parse_bool(key, value);
  else if (key == "gop.intra_period") cfg.intra_period = parse_int(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "train.quant") {
    if (value == "round") cfg.train_quant = QuantMode::Round;
    else if (value == "noise") cfg.train_quant = QuantMode::Noise;
    else throw ConfigError(key + ": expected round|noise");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

CodecConfig load_config_file(const std::string& path) {
  CodecConfig cfg;
  for (const auto& [k, v] : parse_kv_file(path)) apply_config_line(cfg, k, v);
  cfg.validate();
  return cfg;
}

}  // namespace cvc

#include "cvc/model.hpp"

#include <fstream>
#include <sstream>

namespace cvc {

CodecModel::CodecModel(const CodecConfig& config) : cfg(config), ps(config.seed) {
  cfg.validate();
  flow_net = FlowEstimator(ps, "flow_net");
  flow_codec = FactorizedCodec(ps, "flow_codec", 2, cfg.flow_latent_channels);
  feat = FeatureNets(ps, "feat", cfg.c0, cfg.c1, cfg.c2);
  const std::array<int, 3> ch{cfg.c0, cfg.c1, cfg.c2};
  for (int l = 0; l < 3; ++l)
    if (cfg.ablation.scale_uses_offsets(l))
      offset[size_t(l)].emplace(ps, "offset" + std::to_string(l), ch[size_t(l)],
                                cfg.deform.offset_channels(), cfg.offset_latent_channels);
  gen = HybridContextGen(ps, "genctx", cfg);
  enhancer = ContextEnhancer(ps, "enhance", cfg);
  ctx_enc = ContextualEncoder(ps, "ctx_enc", cfg);
  ctx_dec = ContextualDecoder(ps, "ctx_dec", cfg);
  hyper = HyperCodec(ps, "hyper", cfg.latent_channels, cfg.hyper_channels);
  intra = IntraCodec(ps, "intra", cfg);
}

Tensor CodecModel::pad_frame(const Tensor& frame) const {
  const Shape s = frame.shape;
  const int m = cfg.pad_multiple;
  const int ph = (s.h + m - 1) / m * m;
  const int pw = (s.w + m - 1) / m * m;
  if (ph == s.h && pw == s.w) return frame;
  NoGradGuard ng;
  return reflect_pad(make_leaf(frame), pw - s.w, ph - s.h)->val;
}

Tensor CodecModel::crop_frame(const Tensor& padded, int height, int width) {
  NoGradGuard ng;
  return crop(make_leaf(padded), height, width)->val;
}

CodecModel::ContextsOut CodecModel::build_contexts(const FeaturePyramid& ref_pyr,
                                                   const std::array<Var, 3>& flows,
                                                   const std::array<Var, 3>& decoded_offsets,
                                                   std::vector<int>* order_log,
                                                   bool bypass_fusion_gates) const {
  ContextsOut out;
  std::array<Var, 3> generated =
      gen.generate(cfg.ablation, ref_pyr, flows, decoded_offsets, cfg.deform, &out.counters);
  EnhanceResult enh = enhancer.run(cfg.ablation, generated, ref_pyr, flows, decoded_offsets[0],
                                   cfg.deform, order_log, bypass_fusion_gates);
  out.final_ = enh.final_;
  return out;
}

CodecModel::OffsetCoding CodecModel::code_offsets(const Var& x, const FeaturePyramid& ref_pyr,
                                                  const std::array<Var, 3>& flows, CodingMode mode,
                                                  Rng* rng) const {
  OffsetCoding oc;
  if (!cfg.ablation.any_offsets()) {
    if (mode == CodingMode::Train) oc.bits = make_leaf(Tensor::scalar(0.0));
    return oc;
  }
  FeaturePyramid cur = feat.pyramid_from(feat.current_feature(x));
  // Coded coarse-to-fine; the concatenation order is part of the substream
  // layout.
  for (int l = 2; l >= 0; --l) {
    if (!cfg.ablation.scale_uses_offsets(l)) continue;
    const GenStrategy st = cfg.ablation.gen[size_t(l)];
    Var flow_in, aligned;
    if (st == GenStrategy::Fgdc) {
      flow_in = flows[size_t(l)];
      aligned = bilinear_warp(ref_pyr.f[size_t(l)], flow_in);
    } else {
      const Shape fs = flows[size_t(l)]->val.shape;
      flow_in = make_leaf(Tensor::zeros(fs));
      aligned = ref_pyr.f[size_t(l)];
    }
    Var o = offset[size_t(l)]->estimate(cur.f[size_t(l)], aligned, flow_in);
    FactorizedCodec::Result res =
        offset[size_t(l)]->codec().forward(o, mode, cfg.train_quant, rng);
    oc.decoded[size_t(l)] =
        offset_upsample(res.recon, 2, cfg.deform.displacement_channels());
    if (mode == CodingMode::Train) {
      oc.bits = oc.bits ? add(oc.bits, res.latent.bits) : res.latent.bits;
    } else {
      oc.plane.symbols.insert(oc.plane.symbols.end(), res.latent.plane.symbols.begin(),
                              res.latent.plane.symbols.end());
      oc.plane.scale_idx.insert(oc.plane.scale_idx.end(), res.latent.plane.scale_idx.begin(),
                                res.latent.plane.scale_idx.end());
      oc.est_bits += res.latent.est_bits;
    }
  }
  return oc;
}

std::array<int, 3> CodecModel::offset_symbol_counts(int padded_h, int padded_w) const {
  std::array<int, 3> counts{0, 0, 0};
  for (int l = 0; l < 3; ++l) {
    if (!cfg.ablation.scale_uses_offsets(l)) continue;
    const int lh = (padded_h >> l) / 8, lw = (padded_w >> l) / 8;
    counts[size_t(l)] = cfg.offset_latent_channels * lh * lw;
  }
  return counts;
}

std::array<Var, 3> CodecModel::decode_offsets_from_symbols(const std::vector<int32_t>& symbols,
                                                           int padded_h, int padded_w) const {
  std::array<Var, 3> out;
  const std::array<int, 3> counts = offset_symbol_counts(padded_h, padded_w);
  size_t pos = 0;
  for (int l = 2; l >= 0; --l) {
    if (!counts[size_t(l)]) continue;
    SymbolPlane plane;
    plane.symbols.assign(symbols.begin() + int64_t(pos),
                         symbols.begin() + int64_t(pos) + counts[size_t(l)]);
    pos += size_t(counts[size_t(l)]);
    const int lh = (padded_h >> l) / 8, lw = (padded_w >> l) / 8;
    Var recon = offset[size_t(l)]->codec().decode(plane, lh, lw);
    out[size_t(l)] = offset_upsample(recon, 2, cfg.deform.displacement_channels());
  }
  check_contract(pos == symbols.size(), "offset substream: symbol count mismatch");
  return out;
}

CodecModel::InterTrain CodecModel::inter_forward_train(const Var& x, const Var& ref_recon,
                                                       const Var& ref_feature, Rng* rng) const {
  Var v = flow_net(x, ref_recon);
  FactorizedCodec::Result fr = flow_codec.forward(v, CodingMode::Train, cfg.train_quant, rng);
  std::array<Var, 3> flows = build_flow_pyramid(fr.recon);
  FeaturePyramid ref_pyr = feat.reference_pyramid(ref_feature);
  OffsetCoding oc = code_offsets(x, ref_pyr, flows, CodingMode::Train, rng);
  ContextsOut ctx = build_contexts(ref_pyr, flows, oc.decoded);

  Var y = ctx_enc(x, ctx.final_);
  HyperCodec::Result hr = hyper.forward(y, CodingMode::Train, cfg.train_quant, rng);
  LatentResult yr =
      bottleneck_gaussian(y, hr.params.mu, hr.params.sigma, CodingMode::Train, cfg.train_quant, rng);
  ContextualDecoder::Out dec = ctx_dec(yr.y_hat, ctx.final_);

  InterTrain out;
  out.recon = clamp(dec.frame, 0.0, 1.0);
  out.feature = dec.feature;
  out.bits_flow = fr.latent.bits;
  out.bits_offset = oc.bits;
  out.bits_hyper = hr.z.bits;
  out.bits_frame = yr.bits;
  out.flow_decoded = fr.recon;
  return out;
}

IntraCodec::TrainOut CodecModel::intra_forward_train(const Var& x, Rng* rng) const {
  return intra.forward_train(x, cfg.train_quant, rng);
}

CodecModel::EncodedFrame CodecModel::encode_intra_frame(const Tensor& padded_frame) const {
  NoGradGuard ng;
  IntraCodec::CodeOut co = intra.encode(padded_frame);
  EncodedFrame out;
  out.record.type = FrameType::Intra;
  out.record.streams[2] = encode_symbols(co.z_plane, cdf_bank());
  out.record.streams[3] = encode_symbols(co.y_plane, cdf_bank());
  out.est_bits.hyper = co.est_bits_z;
  out.est_bits.frame = co.est_bits_y;
  out.recon = std::move(co.recon);
  out.feature = std::move(co.feature);
  return out;
}

CodecModel::DecodedFrame CodecModel::decode_intra_frame(const FrameRecord& rec, int padded_h,
                                                        int padded_w) const {
  NoGradGuard ng;
  if (!rec.streams[0].empty() || !rec.streams[1].empty())
    throw BitstreamError("intra frame carries motion substreams");
  SymbolPlane z_plane;
  z_plane.scale_idx = intra.hyper().z_scale_indices(padded_h / 64, padded_w / 64);
  z_plane.symbols = decode_symbols(rec.streams[2].data(), rec.streams[2].size(), z_plane.scale_idx,
                                   cdf_bank());
  Var z_hat = intra.hyper().z_hat_from_symbols(z_plane, padded_h / 64, padded_w / 64);
  HyperCodec::Params params = intra.hyper().params_from_z(z_hat);
  SymbolPlane y_plane;
  y_plane.scale_idx = scale_indices_from_sigma(params.sigma->val);
  y_plane.symbols = decode_symbols(rec.streams[3].data(), rec.streams[3].size(), y_plane.scale_idx,
                                   cdf_bank());
  IntraCodec::DecOut dec = intra.decode(y_plane, z_plane, padded_h, padded_w);
  return DecodedFrame{std::move(dec.recon), std::move(dec.feature)};
}

CodecModel::EncodedFrame CodecModel::encode_inter_frame(const Tensor& padded_frame,
                                                        const CodecState& state) const {
  NoGradGuard ng;
  check_contract(padded_frame.shape == state.recon.shape, "encode_inter: state dims mismatch");
  Var x = make_leaf(padded_frame);
  Var ref_recon = make_leaf(state.recon);
  Var ref_feature = make_leaf(state.feature);

  Var v = flow_net(x, ref_recon);
  FactorizedCodec::Result fr = flow_codec.forward(v, CodingMode::Code, QuantMode::Round, nullptr);
  std::array<Var, 3> flows = build_flow_pyramid(fr.recon);
  FeaturePyramid ref_pyr = feat.reference_pyramid(ref_feature);
  OffsetCoding oc = code_offsets(x, ref_pyr, flows, CodingMode::Code, nullptr);
  EncodedFrame out;
  ContextsOut ctx = build_contexts(ref_pyr, flows, oc.decoded);
  out.counters = ctx.counters;

  Var y = ctx_enc(x, ctx.final_);
  HyperCodec::Result hr = hyper.forward(y, CodingMode::Code, QuantMode::Round, nullptr);
  LatentResult yr = bottleneck_gaussian(y, hr.params.mu, hr.params.sigma, CodingMode::Code,
                                        QuantMode::Round, nullptr);
  ContextualDecoder::Out dec = ctx_dec(yr.y_hat, ctx.final_);

  out.record.type = FrameType::Inter;
  out.record.streams[0] = encode_symbols(fr.latent.plane, cdf_bank());
  if (cfg.ablation.any_offsets()) out.record.streams[1] = encode_symbols(oc.plane, cdf_bank());
  out.record.streams[2] = encode_symbols(hr.z.plane, cdf_bank());
  out.record.streams[3] = encode_symbols(yr.plane, cdf_bank());
  out.est_bits.flow = fr.latent.est_bits;
  out.est_bits.offset = oc.est_bits;
  out.est_bits.hyper = hr.z.est_bits;
  out.est_bits.frame = yr.est_bits;
  out.recon = clamp(dec.frame, 0.0, 1.0)->val;
  out.feature = dec.feature->val;
  return out;
}

CodecModel::DecodedFrame CodecModel::decode_inter_frame(const FrameRecord& rec,
                                                        const CodecState& state) const {
  NoGradGuard ng;
  const int ph = state.recon.shape.h, pw = state.recon.shape.w;
  Var ref_feature = make_leaf(state.feature);

  // Flow substream.
  SymbolPlane flow_plane;
  flow_plane.scale_idx = flow_codec.scale_indices(ph / 4, pw / 4);
  flow_plane.symbols = decode_symbols(rec.streams[0].data(), rec.streams[0].size(),
                                      flow_plane.scale_idx, cdf_bank());
  Var v_hat = flow_codec.decode(flow_plane, ph / 4, pw / 4);
  std::array<Var, 3> flows = build_flow_pyramid(v_hat);
  FeaturePyramid ref_pyr = feat.reference_pyramid(ref_feature);

  // Offset substream (zero-length unless some scale codes offsets).
  std::array<Var, 3> decoded_offsets;
  if (cfg.ablation.any_offsets()) {
    std::vector<uint16_t> idx;
    for (int l = 2; l >= 0; --l) {
      if (!cfg.ablation.scale_uses_offsets(l)) continue;
      auto part = offset[size_t(l)]->codec().scale_indices((ph >> l) / 8, (pw >> l) / 8);
      idx.insert(idx.end(), part.begin(), part.end());
    }
    auto symbols = decode_symbols(rec.streams[1].data(), rec.streams[1].size(), idx, cdf_bank());
    decoded_offsets = decode_offsets_from_symbols(symbols, ph, pw);
  } else if (!rec.streams[1].empty()) {
    throw BitstreamError("offset substream present but configuration codes no offsets");
  }

  ContextsOut ctx = build_contexts(ref_pyr, flows, decoded_offsets);

  // Hyper then frame.
  SymbolPlane z_plane;
  z_plane.scale_idx = hyper.z_scale_indices(ph / 64, pw / 64);
  z_plane.symbols = decode_symbols(rec.streams[2].data(), rec.streams[2].size(), z_plane.scale_idx,
                                   cdf_bank());
  Var z_hat = hyper.z_hat_from_symbols(z_plane, ph / 64, pw / 64);
  HyperCodec::Params params = hyper.params_from_z(z_hat);
  SymbolPlane y_plane;
  y_plane.scale_idx = scale_indices_from_sigma(params.sigma->val);
  y_plane.symbols = decode_symbols(rec.streams[3].data(), rec.streams[3].size(), y_plane.scale_idx,
                                   cdf_bank());
  Tensor y_hat(params.mu->val.shape);
  for (int64_t i = 0; i < y_hat.numel(); ++i)
    y_hat.v[size_t(i)] = params.mu->val.v[size_t(i)] + double(y_plane.symbols[size_t(i)]);

  ContextualDecoder::Out dec = ctx_dec(make_leaf(std::move(y_hat)), ctx.final_);
  return DecodedFrame{clamp(dec.frame, 0.0, 1.0)->val, dec.feature->val};
}

namespace {
constexpr char kCkptMagic[8] = {'C', 'V', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const CodecModel& model, const std::string& path, int stage, int64_t step) {
  std::ostringstream body;
  body.write(kCkptMagic, 8);
  ByteWriter meta;
  meta.u64(model.cfg.hash());
  meta.u32(uint32_t(stage));
  meta.u64(uint64_t(step));
  body.write(reinterpret_cast<const char*>(meta.bytes.data()), std::streamsize(meta.bytes.size()));
  model.ps.save(body);
  const std::string blob = body.str();
  const uint32_t crc = crc32(blob.data(), blob.size());
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw DataError("cannot write checkpoint: " + path);
  out.write(blob.data(), std::streamsize(blob.size()));
  ByteWriter tail;
  tail.u32(crc);
  out.write(reinterpret_cast<const char*>(tail.bytes.data()), 4);
}

CheckpointMeta load_checkpoint(CodecModel& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 8 + 20 + 4) throw DataError("checkpoint truncated: " + path);
  const std::string body = blob.substr(0, blob.size() - 4);
  const uint8_t* tail = reinterpret_cast<const uint8_t*>(blob.data()) + blob.size() - 4;
  const uint32_t stored = (uint32_t(tail[0]) << 24) | (uint32_t(tail[1]) << 16) |
                          (uint32_t(tail[2]) << 8) | uint32_t(tail[3]);
  if (crc32(body.data(), body.size()) != stored)
    throw DataError("checkpoint CRC mismatch: " + path);
  if (body.compare(0, 8, kCkptMagic, 8) != 0) throw DataError("not a checkpoint file: " + path);
  ByteReader meta(reinterpret_cast<const uint8_t*>(body.data()) + 8, 20);
  const uint64_t hash = meta.u64();
  if (hash != model.cfg.hash())
    throw ConfigError("checkpoint/config hash mismatch: checkpoint " + path +
                      " was trained with a different architecture or lambda");
  CheckpointMeta out;
  out.stage = int(meta.u32());
  out.step = int64_t(meta.u64());
  std::istringstream rest(body.substr(8 + 20));
  model.ps.load(rest);
  return out;
}

}  // namespace cvc

#include "cvc/eval.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cvc/metrics.hpp"

namespace cvc {

namespace {

bool tensors_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(double)) == 0;
}

}  // namespace

SequenceEvalResult evaluate_sequence(const CodecModel& model, const std::vector<Tensor>& frames,
                                     const EvalOptions& opts, std::vector<Tensor>* recons) {
  check_contract(!frames.empty(), "evaluate_sequence: empty input");
  const int count = opts.max_frames > 0 ? std::min<int>(opts.max_frames, int(frames.size()))
                                        : int(frames.size());
  const Shape os = frames[0].shape;
  const int64_t npx = int64_t(os.h) * os.w;

  SequenceEvalResult result;
  ByteWriter out;
  SequenceHeader sh;
  sh.width = uint16_t(os.w);
  sh.height = uint16_t(os.h);
  sh.lambda_index = uint8_t(model.cfg.lambda_index);
  sh.intra_period = uint16_t(opts.intra_period);
  sh.frame_count = uint32_t(count);
  sh.config_hash = model.cfg.hash();
  write_sequence_header(out, sh);

  CodecState state;
  double sum_bpp = 0, sum_psnr = 0, sum_inter_psnr = 0, sum_msssim = 0;
  int inter_count = 0, finite_psnr = 0;
  for (int t = 0; t < count; ++t) {
    check_contract(frames[size_t(t)].shape == os, "evaluate_sequence: frame dims changed");
    const Tensor padded = model.pad_frame(frames[size_t(t)]);
    const bool is_intra = (t % opts.intra_period) == 0;
    CodecModel::EncodedFrame enc =
        is_intra ? model.encode_intra_frame(padded) : model.encode_inter_frame(padded, state);

    // Closed-loop check: the decoder must land on the encoder's internal
    // reconstruction bit for bit.
    CodecModel::DecodedFrame dec =
        is_intra ? model.decode_intra_frame(enc.record, padded.shape.h, padded.shape.w)
                 : model.decode_inter_frame(enc.record, state);
    const bool loop_ok = tensors_equal(dec.recon, enc.recon) && tensors_equal(dec.feature, enc.feature);
    result.closed_loop_ok = result.closed_loop_ok && loop_ok;

    write_frame_record(out, enc.record, sh.width, sh.height, sh.lambda_index, sh.config_hash);

    RDPoint p;
    p.frame_index = t;
    p.type = enc.record.type;
    p.bpp_flow = double(enc.record.streams[0].size()) * 8.0 / double(npx);
    p.bpp_offset = double(enc.record.streams[1].size()) * 8.0 / double(npx);
    p.bpp_hyper = double(enc.record.streams[2].size()) * 8.0 / double(npx);
    p.bpp_frame = double(enc.record.streams[3].size()) * 8.0 / double(npx);
    p.bpp = p.bpp_flow + p.bpp_offset + p.bpp_hyper + p.bpp_frame;
    p.est_bpp = enc.est_bits.total() / double(npx);
    const Tensor cropped = CodecModel::crop_frame(enc.recon, os.h, os.w);
    p.psnr_db = psnr(cropped, frames[size_t(t)]);
    if (opts.compute_msssim) p.msssim = ms_ssim(cropped, frames[size_t(t)]);
    if (recons) recons->push_back(cropped);

    sum_bpp += p.bpp;
    if (std::isfinite(p.psnr_db)) {
      sum_psnr += p.psnr_db;
      ++finite_psnr;
    }
    if (!is_intra) {
      sum_inter_psnr += p.psnr_db;
      ++inter_count;
    }
    if (opts.compute_msssim) sum_msssim += p.msssim;

    if (opts.log && opts.log->open()) {
      std::ostringstream line;
      line << "{\"event\":\"rd_point\",\"frame\":" << t << ",\"type\":\""
           << (is_intra ? "intra" : "inter") << "\",\"bpp\":" << p.bpp << ",\"bpp_flow\":"
           << p.bpp_flow << ",\"bpp_offset\":" << p.bpp_offset << ",\"bpp_hyper\":" << p.bpp_hyper
           << ",\"bpp_frame\":" << p.bpp_frame << ",\"est_bpp\":" << p.est_bpp
           << ",\"psnr\":" << p.psnr_db << ",\"closed_loop\":" << (loop_ok ? "true" : "false")
           << "}";
      opts.log->write_line(line.str());
    }

    state.recon = enc.recon;
    state.feature = enc.feature;
    state.frame_index = t;
    result.frames.push_back(p);
  }

  result.avg_bpp = sum_bpp / count;
  result.avg_psnr = finite_psnr ? sum_psnr / finite_psnr : std::numeric_limits<double>::infinity();
  result.avg_inter_psnr = inter_count ? sum_inter_psnr / inter_count : result.avg_psnr;
  if (opts.compute_msssim) result.avg_msssim = sum_msssim / count;
  result.bitstream = std::move(out.bytes);
  return result;
}

std::vector<Tensor> decode_sequence(const CodecModel& model, const std::vector<uint8_t>& bytes) {
  ByteReader in(bytes.data(), bytes.size());
  SequenceHeader sh = read_sequence_header(in);
  if (sh.config_hash != model.cfg.hash())
    throw BitstreamError("config hash mismatch: bitstream requires a different model configuration");
  if (sh.lambda_index != uint8_t(model.cfg.lambda_index))
    throw BitstreamError("lambda index mismatch between bitstream and model");
  const int m = model.cfg.pad_multiple;
  const int ph = (sh.height + m - 1) / m * m;
  const int pw = (sh.width + m - 1) / m * m;

  std::vector<Tensor> frames;
  CodecState state;
  for (uint32_t t = 0; t < sh.frame_count; ++t) {
    FrameRecord rec = read_frame_record(in, sh.width, sh.height, sh.lambda_index, sh.config_hash);
    const bool is_intra = (t % sh.intra_period) == 0;
    if (is_intra != (rec.type == FrameType::Intra))
      throw BitstreamError("frame type disagrees with the GOP schedule");
    CodecModel::DecodedFrame dec = is_intra ? model.decode_intra_frame(rec, ph, pw)
                                            : model.decode_inter_frame(rec, state);
    frames.push_back(CodecModel::crop_frame(dec.recon, sh.height, sh.width));
    state.recon = std::move(dec.recon);
    state.feature = std::move(dec.feature);
    state.frame_index = int(t);
  }
  return frames;
}

AblationResult run_ablation(const AblationOptions& opts) {
  check_contract(!opts.presets.empty(), "run_ablation: no presets given");
  check_contract(std::find(opts.presets.begin(), opts.presets.end(), opts.anchor) !=
                     opts.presets.end(),
                 "run_ablation: anchor preset must be part of the run");
  SyntheticClip train_clip = generate_synthetic_clip(
      opts.family, SynthParams{opts.clip.frames, opts.clip.height, opts.clip.width, opts.clip.amplitude},
      opts.train_seed);
  SyntheticClip eval_clip = generate_synthetic_clip(
      opts.family, SynthParams{opts.clip.frames, opts.clip.height, opts.clip.width, opts.clip.amplitude},
      opts.eval_seed);

  AblationResult result;
  std::map<char, std::vector<RDCurvePoint>> curves;
  for (char preset : opts.presets) {
    for (int li : opts.lambda_indices) {
      CodecConfig cfg;
      cfg.ablation = ablation_preset(preset);
      cfg.lambda_index = li;
      cfg.seed = opts.schedule.seed;
      cfg.intra_period = opts.intra_period;
      CodecModel model(cfg);
      Trainer trainer(model, opts.schedule, opts.log);
      trainer.run(train_clip.frames);

      EvalOptions eo;
      eo.intra_period = opts.intra_period;
      SequenceEvalResult ev = evaluate_sequence(model, eval_clip.frames, eo);
      AblationRun run;
      run.preset = preset;
      run.lambda_index = li;
      run.bpp = ev.avg_bpp;
      run.psnr = ev.avg_psnr;
      result.runs.push_back(run);
      curves[preset].push_back(RDCurvePoint{ev.avg_bpp, ev.avg_psnr});
      if (opts.log && opts.log->open()) {
        std::ostringstream line;
        line << "{\"event\":\"ablation_run\",\"preset\":\"" << preset << "\",\"lambda_index\":" << li
             << ",\"bpp\":" << run.bpp << ",\"psnr\":" << run.psnr
             << ",\"closed_loop\":" << (ev.closed_loop_ok ? "true" : "false") << "}";
        opts.log->write_line(line.str());
      }
    }
  }

  // BD-rates against the anchor, plus matched-quality dominance counting for
  // the first non-anchor preset.
  const auto& anchor_curve = curves[opts.anchor];
  for (char preset : opts.presets) {
    if (preset == opts.anchor) continue;
    double bd = std::numeric_limits<double>::quiet_NaN();
    try {
      bd = bd_rate_percent(anchor_curve, curves[preset]);
    } catch (const ContractViolation&) {
    }
    result.bd_vs_anchor.emplace_back(preset, bd);
  }

  char headline = 0;
  for (char preset : opts.presets)
    if (preset != opts.anchor) {
      headline = preset;
      break;
    }
  if (headline) {
    std::vector<double> qa, ra;
    auto sorted_anchor = anchor_curve;
    std::sort(sorted_anchor.begin(), sorted_anchor.end(),
              [](const RDCurvePoint& a, const RDCurvePoint& b) { return a.quality < b.quality; });
    for (const auto& pt : sorted_anchor) {
      qa.push_back(pt.quality);
      ra.push_back(std::log10(pt.rate));
    }
    Pchip anchor_fit(qa, ra);
    for (const auto& pt : curves[headline]) {
      if (pt.quality < anchor_fit.x_min() || pt.quality > anchor_fit.x_max()) continue;
      ++result.matched_points;
      if (std::log10(pt.rate) < anchor_fit.eval(pt.quality)) ++result.dominating_points;
    }
    result.ordering_held =
        result.matched_points > 0 && result.dominating_points * 2 > result.matched_points;
  }

  // Human-readable table; warn (non-fatally) when a curve is not monotone.
  std::ostringstream table;
  for (char preset : opts.presets) {
    auto pts = curves[preset];
    std::sort(pts.begin(), pts.end(),
              [](const RDCurvePoint& a, const RDCurvePoint& b) { return a.rate < b.rate; });
    for (size_t i = 1; i < pts.size(); ++i)
      if (pts[i].quality < pts[i - 1].quality) {
        table << "[warn] preset " << preset << ": quality not non-decreasing with bpp\n";
        break;
      }
  }
  table << "preset  lambda_idx  bpp        psnr_db\n";
  for (const auto& run : result.runs)
    table << run.preset << "       " << run.lambda_index << "           " << std::fixed
          << std::setprecision(4) << std::setw(9) << run.bpp << "  " << std::setprecision(3)
          << run.psnr << "\n";
  for (const auto& [preset, bd] : result.bd_vs_anchor)
    table << "BD-rate " << preset << " vs " << opts.anchor << ": " << std::setprecision(2) << bd
          << "%\n";
  if (headline)
    table << "ordering (" << headline << " below " << opts.anchor << " at matched quality): "
          << result.dominating_points << "/" << result.matched_points
          << (result.ordering_held ? " HELD" : " NOT HELD") << "\n";
  result.table_text = table.str();

  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    std::ofstream txt(opts.out_dir + "/ablation_table.txt");
    txt << result.table_text;
    std::ofstream csv(opts.out_dir + "/ablation_runs.csv");
    csv << "preset,lambda_index,bpp,psnr_db\n";
    for (const auto& run : result.runs)
      csv << run.preset << "," << run.lambda_index << "," << run.bpp << "," << run.psnr << "\n";
    std::vector<PlotSeries> series;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    int ci = 0;
    for (char preset : opts.presets) {
      PlotSeries s;
      s.label = std::string("preset ") + preset;
      s.color = colors[ci++ % 5];
      auto pts = curves[preset];
      std::sort(pts.begin(), pts.end(),
                [](const RDCurvePoint& a, const RDCurvePoint& b) { return a.rate < b.rate; });
      for (const auto& pt : pts) {
        s.x.push_back(pt.rate);
        s.y.push_back(pt.quality);
      }
      series.push_back(std::move(s));
    }
    write_svg_plot(opts.out_dir + "/ablation_rd.svg", "RD comparison", "bpp", "PSNR (dB)", series);
  }
  return result;
}

}  // namespace cvc

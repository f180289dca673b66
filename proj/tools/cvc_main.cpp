// cvc: a compact conditional video codec.
//
// Subcommands: train, encode, decode, eval, ablate, synth, selftest.
// Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 bitstream integrity,
// 6 internal failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "cvc/eval.hpp"
#include "cvc/metrics.hpp"
#include "cvc/selftest.hpp"

namespace fs = std::filesystem;
using namespace cvc;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  uint64_t seed = 0;
  bool seed_set = false;
  std::string device = "cpu";
  bool paper_parity = false;
};

CodecConfig build_config(const GlobalOpts& g) {
  CodecConfig cfg;
  if (!g.config_path.empty()) cfg = load_config_file(g.config_path);
  for (const auto& ov : g.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + ov + "'");
    apply_config_line(cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (g.seed_set) cfg.seed = g.seed;
  if (g.device != "cpu") throw ConfigError("--device: only 'cpu' is supported in this build");
  if (g.paper_parity) cfg.intra_period = 32;
  cfg.validate();
  return cfg;
}

TrainSchedule build_schedule(const GlobalOpts& g, const std::vector<int>& steps) {
  TrainSchedule sched;
  if (g.paper_parity) {
    sched.stage_steps = {20000, 20000, 40000, 10000};
    sched.batch = 4;
  }
  if (!steps.empty()) {
    check_contract(steps.size() == 4, "--steps expects four stage counts");
    for (int i = 0; i < 4; ++i) sched.stage_steps[size_t(i)] = steps[size_t(i)];
  }
  return sched;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"cvc - compact conditional video codec"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--config", g.config_path, "config file (key = value lines)");
  app.add_option("--set", g.overrides, "override a config key, e.g. --set rd.lambda_index=2")
      ->take_all();
  app.add_option("--seed", g.seed, "override config seed")->each([&](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--device", g.device, "compute device (cpu)");
  app.add_flag("--paper-parity", g.paper_parity,
               "paper-scale defaults: intra period 32, batch 4, long schedule");

  auto* train = app.add_subcommand("train", "run the multi-stage training schedule");
  int train_stage = 0;
  std::string train_out = "runs/train";
  std::string train_data;
  std::string train_family = "elastic";
  uint64_t clip_seed = 1;
  int clip_frames = 8, clip_size = 64;
  double clip_amplitude = 2.5;
  std::vector<int> step_override;
  std::string resume;
  train->add_option("--stage", train_stage, "train a single stage (1-4); default all");
  train->add_option("--out", train_out, "output directory (checkpoint + logs)");
  train->add_option("--data", train_data, "train on a sequence dir/.yuv instead of synthetic data");
  train->add_option("--family", train_family, "synthetic motion family");
  train->add_option("--clip-seed", clip_seed, "synthetic clip seed");
  train->add_option("--frames", clip_frames, "clip frame count");
  train->add_option("--size", clip_size, "synthetic clip side length");
  train->add_option("--amplitude", clip_amplitude, "synthetic motion amplitude (px/frame)");
  train->add_option("--steps", step_override, "per-stage step counts (4 values)")->expected(4);
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* encode = app.add_subcommand("encode", "encode a sequence to a bitstream file");
  std::string enc_ckpt, enc_input, enc_output = "out.cvc";
  int enc_frames = -1, enc_gop = 0;
  encode->add_option("--checkpoint", enc_ckpt, "trained checkpoint")->required();
  encode->add_option("--input", enc_input, "sequence directory or .yuv file")->required();
  encode->add_option("--output", enc_output, "bitstream file");
  encode->add_option("--frames", enc_frames, "max frames to code");
  encode->add_option("--gop", enc_gop, "intra period override");

  auto* decode = app.add_subcommand("decode", "decode a bitstream file to frames");
  std::string dec_ckpt, dec_input, dec_output = "decoded";
  decode->add_option("--checkpoint", dec_ckpt, "trained checkpoint")->required();
  decode->add_option("--input", dec_input, "bitstream file")->required();
  decode->add_option("--output", dec_output, "output directory for frame PPMs");

  auto* eval = app.add_subcommand("eval", "code a sequence and report RD records");
  std::string eval_ckpt, eval_input, eval_out = "runs/eval";
  std::string eval_family = "elastic";
  int eval_frames = 32, eval_gop = 0, eval_size = 256;
  uint64_t eval_seed = 2;
  bool eval_msssim = false;
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--input", eval_input, "sequence directory or .yuv (default: synthetic)");
  eval->add_option("--family", eval_family, "synthetic family when no --input");
  eval->add_option("--eval-seed", eval_seed, "synthetic eval clip seed");
  eval->add_option("--frames", eval_frames, "frames to code");
  eval->add_option("--size", eval_size, "synthetic clip side length");
  eval->add_option("--gop", eval_gop, "intra period override");
  eval->add_flag("--msssim", eval_msssim, "also compute MS-SSIM (needs >= 160 px)");
  eval->add_option("--out", eval_out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "train + compare ablation presets");
  std::string ablate_presets = "AD";
  std::string ablate_family = "elastic";
  std::string ablate_out = "runs/ablate";
  std::vector<int> ablate_steps;
  std::vector<int> ablate_lambdas = {0, 1, 2, 3};
  int ablate_frames = 8, ablate_size = 64;
  ablate->add_option("--presets", ablate_presets, "preset letters, first is the anchor (e.g. AD)");
  ablate->add_option("--family", ablate_family, "synthetic motion family");
  ablate->add_option("--steps", ablate_steps, "per-stage step counts (4 values)")->expected(4);
  ablate->add_option("--lambdas", ablate_lambdas, "lambda indices to sweep");
  ablate->add_option("--frames", ablate_frames, "clip frame count");
  ablate->add_option("--size", ablate_size, "clip side length");
  ablate->add_option("--out", ablate_out, "output directory");

  auto* synth = app.add_subcommand("synth", "write a synthetic clip to disk");
  std::string synth_family = "translate";
  std::string synth_out = "clip";
  uint64_t synth_seed = 7;
  int synth_frames = 8, synth_size = 64;
  double synth_amplitude = 2.5;
  synth->add_option("--family", synth_family, "translate|rotate|elastic|occlude");
  synth->add_option("--seed", synth_seed, "clip seed");
  synth->add_option("--frames", synth_frames, "frame count");
  synth->add_option("--size", synth_size, "side length");
  synth->add_option("--amplitude", synth_amplitude, "motion amplitude (px/frame)");
  synth->add_option("--out", synth_out, "output directory");

  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (selftest->parsed()) return run_selftest(std::cout) == 0 ? 0 : 6;

  if (train->parsed()) {
    CodecConfig cfg = build_config(g);
    CodecModel model(cfg);
    int64_t start_step = 0;
    if (!resume.empty()) start_step = load_checkpoint(model, resume).step;
    fs::create_directories(train_out);
    JsonlWriter log(train_out + "/train_log.jsonl");
    TrainSchedule sched = build_schedule(g, step_override);
    sched.seed = cfg.seed ^ 0x5eedull;
    std::vector<Tensor> frames =
        train_data.empty()
            ? generate_synthetic_clip(motion_family_from_string(train_family),
                                      SynthParams{clip_frames, clip_size, clip_size, clip_amplitude},
                                      clip_seed)
                  .frames
            : load_sequence(train_data, clip_frames);
    Trainer trainer(model, sched, &log);
    TrainReport report;
    if (train_stage >= 1) {
      trainer.run_stage(train_stage, frames, &report);
      report.final_joint_loss = trainer.eval_joint_loss(frames);
    } else {
      report = trainer.run(frames);
    }
    const std::string ckpt = train_out + "/checkpoint.bin";
    save_checkpoint(model, ckpt, train_stage >= 1 ? train_stage : 4,
                    start_step + report.total_steps);
    std::cout << "trained " << report.total_steps << " steps; joint loss "
              << report.initial_joint_loss << " -> " << report.final_joint_loss << "\n";
    std::cout << "checkpoint: " << ckpt << "\n";
    return 0;
  }

  if (encode->parsed()) {
    CodecConfig cfg = build_config(g);
    CodecModel model(cfg);
    load_checkpoint(model, enc_ckpt);
    std::vector<Tensor> frames = load_sequence(enc_input, enc_frames);
    EvalOptions opts;
    opts.intra_period = enc_gop > 0 ? enc_gop : cfg.intra_period;
    SequenceEvalResult r = evaluate_sequence(model, frames, opts);
    if (!r.closed_loop_ok) throw InternalError("closed-loop verification failed during encode");
    write_binary_file(enc_output, r.bitstream);
    std::cout << "coded " << r.frames.size() << " frames, " << r.bitstream.size() << " bytes, avg "
              << std::fixed << std::setprecision(4) << r.avg_bpp << " bpp, "
              << std::setprecision(2) << r.avg_psnr << " dB\n";
    return 0;
  }

  if (decode->parsed()) {
    CodecConfig cfg = build_config(g);
    CodecModel model(cfg);
    load_checkpoint(model, dec_ckpt);
    std::vector<uint8_t> bytes = read_binary_file(dec_input);
    std::vector<Tensor> frames = decode_sequence(model, bytes);
    fs::create_directories(dec_output);
    for (size_t i = 0; i < frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
      write_ppm(dec_output + "/" + name, frames[i]);
    }
    std::cout << "decoded " << frames.size() << " frames to " << dec_output << "\n";
    return 0;
  }

  if (eval->parsed()) {
    CodecConfig cfg = build_config(g);
    CodecModel model(cfg);
    load_checkpoint(model, eval_ckpt);
    fs::create_directories(eval_out);
    JsonlWriter log(eval_out + "/rd_records.jsonl");
    std::vector<Tensor> frames =
        eval_input.empty()
            ? generate_synthetic_clip(motion_family_from_string(eval_family),
                                      SynthParams{eval_frames, eval_size, eval_size, 2.5}, eval_seed)
                  .frames
            : load_sequence(eval_input, eval_frames);
    EvalOptions opts;
    opts.intra_period = eval_gop > 0 ? eval_gop : (g.paper_parity ? 32 : cfg.intra_period);
    opts.compute_msssim = eval_msssim;
    opts.log = &log;
    SequenceEvalResult r = evaluate_sequence(model, frames, opts);
    write_binary_file(eval_out + "/sequence.cvc", r.bitstream);
    std::ofstream csv(eval_out + "/rd_records.csv");
    csv << "frame,type,bpp,bpp_flow,bpp_offset,bpp_hyper,bpp_frame,psnr_db,msssim\n";
    PlotSeries series;
    series.label = "per-frame";
    for (const auto& p : r.frames) {
      csv << p.frame_index << "," << (p.type == FrameType::Intra ? "intra" : "inter") << ","
          << p.bpp << "," << p.bpp_flow << "," << p.bpp_offset << "," << p.bpp_hyper << ","
          << p.bpp_frame << "," << p.psnr_db << "," << p.msssim << "\n";
      series.x.push_back(p.frame_index);
      series.y.push_back(p.bpp);
    }
    write_svg_plot(eval_out + "/bpp_per_frame.svg", "per-frame rate", "frame", "bpp", {series});
    std::cout << "frames " << r.frames.size() << "  avg bpp " << std::fixed << std::setprecision(4)
              << r.avg_bpp << "  avg psnr " << std::setprecision(2) << r.avg_psnr
              << "  inter psnr " << r.avg_inter_psnr << "  closed loop "
              << (r.closed_loop_ok ? "ok" : "BROKEN") << "\n";
    if (!r.closed_loop_ok) throw InternalError("closed-loop verification failed");
    return 0;
  }

  if (ablate->parsed()) {
    AblationOptions opts;
    opts.presets.assign(ablate_presets.begin(), ablate_presets.end());
    check_contract(!opts.presets.empty(), "ablate: --presets must name at least one preset");
    opts.anchor = opts.presets.front();
    opts.family = motion_family_from_string(ablate_family);
    opts.clip = SynthParams{ablate_frames, ablate_size, ablate_size, 2.5};
    opts.schedule = build_schedule(g, ablate_steps);
    opts.lambda_indices = ablate_lambdas;
    opts.out_dir = ablate_out;
    fs::create_directories(ablate_out);
    JsonlWriter log(ablate_out + "/ablate_log.jsonl");
    opts.log = &log;
    AblationResult r = run_ablation(opts);
    std::cout << r.table_text;
    return 0;
  }

  if (synth->parsed()) {
    SyntheticClip clip = generate_synthetic_clip(
        motion_family_from_string(synth_family),
        SynthParams{synth_frames, synth_size, synth_size, synth_amplitude}, synth_seed);
    fs::create_directories(synth_out);
    for (size_t i = 0; i < clip.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
      write_ppm(synth_out + "/" + name, clip.frames[i]);
    }
    std::ofstream meta(synth_out + "/clip.json");
    meta << "{\"family\":\"" << to_string(clip.family) << "\",\"frames\":" << clip.frames.size()
         << ",\"height\":" << clip.frames[0].shape.h << ",\"width\":" << clip.frames[0].shape.w
         << ",\"seed\":" << synth_seed << "}\n";
    std::cout << "wrote " << clip.frames.size() << " frames to " << synth_out << "\n";
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const BitstreamError& e) {
    std::cerr << "bitstream error: " << e.what() << "\n";
    return 5;
  } catch (const ContractViolation& e) {
    std::cerr << "internal contract violation: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  }
}

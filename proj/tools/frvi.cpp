// frvi: data generation, training, streaming inference, evaluation and
// benchmarking for frame-recurrent video inpainting.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "frvi/checkpoint.hpp"
#include "frvi/eval.hpp"
#include "frvi/inference.hpp"
#include "frvi/training.hpp"

namespace fs = std::filesystem;
using namespace frvi;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat key-value config file");
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
  cmd->allow_extras();
}

// Config file, then "--key value" extras, then --seed.
TrainConfig resolve_config(const CLI::App* cmd, const Common& c) {
  Settings s;
  if (!c.config.empty()) s = read_settings(c.config);
  const std::vector<std::string> extra = cmd->remaining();
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const std::string& a = extra[i];
    if (a.rfind("--", 0) != 0 || i + 1 >= extra.size()) {
      throw InputError("unexpected argument '" + a + "' (overrides are --key value)");
    }
    std::string key = a.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    s[key] = extra[++i];
  }
  if (c.seed) s["seed"] = std::to_string(*c.seed);
  TrainConfig cfg = train_config_from(s);
  cfg.validate();
  return cfg;
}

std::vector<VideoSequence> read_dataset(const std::string& dir) {
  std::vector<std::string> videos;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) videos.push_back(e.path());
  }
  std::sort(videos.begin(), videos.end());
  if (videos.empty()) throw IoError("no videos found in " + dir);
  std::vector<VideoSequence> out;
  for (const auto& v : videos) out.push_back(read_video(v));
  return out;
}

std::string video_dir(const std::string& root, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%03d", i);
  return (fs::path(root) / buf).string();
}

// "<kind>[:seed]" or a directory of PGM masks.
std::vector<Mask> resolve_masks(const std::string& spec, int length, const Shape& frame) {
  if (fs::is_directory(spec)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(spec)) {
      if (e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (static_cast<int>(files.size()) < length) {
      throw InputError("mask directory has fewer masks than frames");
    }
    std::vector<Mask> out;
    for (int t = 0; t < length; ++t) out.push_back(read_pgm_mask(files[t]));
    return out;
  }
  if (frame.height != frame.width) {
    throw InputError("generated masks need square frames; pass a mask directory");
  }
  MaskSpec ms;
  const auto colon = spec.find(':');
  ms.kind = parse_mask_kind(spec.substr(0, colon));
  if (colon != std::string::npos) ms.seed = parse_u64("mask seed", spec.substr(colon + 1));
  ms.frame_size = frame.height;
  return generate_masks(ms, length);
}

int run_generate(const CLI::App* cmd, const Common& c, const std::string& output, bool eval_set) {
  TrainConfig cfg = resolve_config(cmd, c);
  DataConfig d = cfg.data();
  if (eval_set) d.seed = derive_seed(cfg.seed, {0xe7a1});
  const std::vector<VideoSequence> data = make_dataset(d);
  for (std::size_t i = 0; i < data.size(); ++i) write_video(data[i], video_dir(output, int(i)));
  std::cout << "wrote " << data.size() << " videos to " << output << " (hash " << std::hex
            << data_hash(data) << std::dec << ")\n";
  return 0;
}

int run_train(const CLI::App* cmd, const Common& c, const std::string& output,
              const std::string& init, const std::string& data_dir, const std::string& stage,
              const std::string& log_path) {
  TrainConfig cfg = resolve_config(cmd, c);
  const std::vector<VideoSequence> data =
      data_dir.empty() ? make_dataset(cfg.data()) : read_dataset(data_dir);
  Checkpoint ck = init.empty() ? initial_checkpoint(cfg) : load_checkpoint(init);
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::app);
    if (!log_file) throw IoError("cannot open log file " + log_path);
    log = &log_file;
  }
  std::vector<Stage> stages;
  if (stage == "all") {
    stages = {Stage::PretrainFrames, Stage::PretrainFlow, Stage::Main};
  } else if (!stage.empty()) {
    stages = {parse_stage(stage)};
  } else {
    stages = {cfg.stage};
  }
  for (Stage s : stages) {
    cfg.stage = s;
    ck = train_stage(cfg, std::move(ck), data, log).checkpoint;
    save_checkpoint(output, ck);
    std::cout << to_string(s) << ": " << ck.step << " steps, checkpoint " << output << '\n';
  }
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& input, const std::string& masks,
              const std::string& output, bool bench, const CLI::App* cmd, const Common& c) {
  const TrainConfig cfg = resolve_config(cmd, c);
  VideoSequence seq = fs::exists(fs::path(input) / "manifest.txt") ? read_video(input)
                                                                    : import_image_sequence(input);
  if (!masks.empty()) seq.masks = resolve_masks(masks, seq.length(), seq.frame_shape());
  seq.validate();
  const Shape s = seq.frame_shape();
  PipelineOptions opts = cfg.pipeline();
  StreamSession session = open_session(ckpt, s.height, s.width, opts);
  VideoSequence out;
  fs::create_directories(output);
  double ms = 0;
  for (int t = 0; t < seq.length(); ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    Frame o = session.push_frame(seq.frames[t], seq.masks[t]);
    ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.ppm", t);
    write_ppm((fs::path(output) / name).string(), o);
    out.frames.push_back(std::move(o));
    out.masks.push_back(Mask(1, s.height, s.width));
  }
  write_video(out, (fs::path(output) / "video").string());
  std::cout << "completed " << seq.length() << " frames";
  if (bench && seq.length() > 0) std::cout << ", " << ms / seq.length() << " ms/frame";
  std::cout << '\n';
  return 0;
}

Checkpoint checkpoint_or_fresh(const std::string& ckpt, const TrainConfig& cfg) {
  return ckpt.empty() ? initial_checkpoint(cfg) : load_checkpoint(ckpt);
}

int run_evaluate(const CLI::App* cmd, const Common& c, const std::string& ckpt,
                 const std::string& variant, const std::string& csv) {
  const TrainConfig cfg = resolve_config(cmd, c);
  const Checkpoint ck = checkpoint_or_fresh(ckpt, cfg);
  DataConfig d = cfg.data();
  d.seed = derive_seed(cfg.seed, {0xe7a1});
  std::vector<std::vector<Mask>> valid;
  const std::vector<VideoSequence> data = make_dataset(d, &valid);
  EvalReport r = evaluate(ck.model, parse_variant(variant), data, valid, cfg.pipeline());
  r.mask_type = to_string(d.mask_type);
  write_table(std::cout, {r});
  if (!csv.empty()) {
    std::ofstream os(csv);
    write_csv(os, {r});
  }
  return 0;
}

int run_ablate(const CLI::App* cmd, const Common& c, const std::string& pretrained,
               const std::string& csv) {
  AblationConfig a;
  a.train = resolve_config(cmd, c);
  a.eval = a.train.data();
  a.eval.seed = derive_seed(a.train.seed, {0xe7a1});
  std::optional<Checkpoint> pre;
  if (!pretrained.empty()) pre = load_checkpoint(pretrained);
  const AblationResult res = run_ablation(a, std::move(pre), {}, &std::cerr);
  write_table(std::cout, res.rows);
  if (!csv.empty()) {
    std::ofstream os(csv);
    write_csv(os, res.rows);
  }
  for (const EvalReport& r : res.rows) {
    if (!r.error.empty()) return 3;
  }
  return 0;
}

int run_bench(const CLI::App* cmd, const Common& c, const std::string& ckpt, int frames,
              int size) {
  const TrainConfig cfg = resolve_config(cmd, c);
  Checkpoint ck = checkpoint_or_fresh(ckpt, cfg);
  for (int s : {size, 2 * size}) {
    StreamSession session(ck.model, s, s, cfg.pipeline());
    const TimingReport rep = benchmark(session, frames, cfg.seed);
    std::cout << s << "x" << s << ": " << rep.frames << " frames, mean " << rep.mean_ms
              << " ms/frame, median " << rep.median_ms << " ms/frame\n";
  }
  std::cout << "parameters " << ck.model.param_count() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frame-recurrent video inpainting"};
  app.require_subcommand(1);
  Common common;

  std::string output, init, data_dir, stage, log_path, ckpt, input, masks, variant = "Ours", csv;
  bool bench = false, eval_set = false;
  int frames = 200, size = 32;

  auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--output", output, "output directory")->required();
  gen->add_flag("--eval", eval_set, "generate the held-out evaluation set");

  auto* train = app.add_subcommand("train", "run one or all training stages");
  add_common(train, common);
  train->add_option("--output", output, "checkpoint directory")->required();
  train->add_option("--init", init, "start or resume from this checkpoint");
  train->add_option("--data", data_dir, "dataset directory (default: synthesize)");
  train->add_option("--stage", stage, "pretrain_frames, pretrain_flow, main or all");
  train->add_option("--log", log_path, "append loss lines to this file");

  auto* infer = app.add_subcommand("infer", "complete a video frame by frame");
  add_common(infer, common);
  infer->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  infer->add_option("--input", input, "video container or PPM frame directory")->required();
  infer->add_option("--masks", masks, "PGM mask directory or <kind>[:seed]");
  infer->add_option("--output", output, "output directory")->required();
  infer->add_flag("--benchmark", bench, "report ms/frame");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics on the evaluation set");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--checkpoint", ckpt, "checkpoint directory");
  evaluate_cmd->add_option("--variant", variant, "Ours, PartialConvOnly, FPOnly, FIOnly, ...");
  evaluate_cmd->add_option("--csv", csv, "write the machine-readable table here");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all variants");
  add_common(ablate, common);
  ablate->add_option("--pretrained", ckpt, "reuse pretrained inpainting networks");
  ablate->add_option("--csv", csv, "write the machine-readable table here");

  auto* bench_cmd = app.add_subcommand("bench", "streaming throughput");
  add_common(bench_cmd, common);
  bench_cmd->add_option("--checkpoint", ckpt, "checkpoint directory (default: untrained)");
  bench_cmd->add_option("--frames", frames, "frames to time")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--size", size, "frame side length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_generate(gen, common, output, eval_set);
    if (*train) return run_train(train, common, output, init, data_dir, stage, log_path);
    if (*infer) return run_infer(ckpt, input, masks, output, bench, infer, common);
    if (*evaluate_cmd) return run_evaluate(evaluate_cmd, common, ckpt, variant, csv);
    if (*ablate) return run_ablate(ablate, common, ckpt, csv);
    if (*bench_cmd) return run_bench(bench_cmd, common, ckpt, frames, size);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

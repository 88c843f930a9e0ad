// corrnet command-line driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "corrnet/cost.hpp"
#include "corrnet/data.hpp"
#include "corrnet/error.hpp"
#include "corrnet/gradcheck.hpp"
#include "corrnet/inspect.hpp"
#include "corrnet/netspec.hpp"
#include "corrnet/train.hpp"

namespace fs = std::filesystem;
using namespace corrnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kIo = 3 };

// Fills options the user did not pass on the command line from a JSON
// object whose keys are long option names without the leading dashes.
void apply_config(CLI::App& app, const std::string& path) {
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError(path + ": unknown key '" + key + "' for " + app.get_name());
    }
    if (opt->count() > 0) continue;  // command-line flags win
    std::string s;
    if (value.is_string()) {
      s = value.get<std::string>();
    } else if (value.is_boolean()) {
      s = value.get<bool>() ? "true" : "false";
    } else {
      s = value.dump();
    }
    opt->add_result(s);
    opt->run_callback();
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os || !(os << text)) throw IoError("cannot write '" + path + "'");
}

struct GenDataArgs {
  MotionTaskConfig task;
  std::string object = "texture_patch";
  std::string texture_correlation = "none";
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::string out;
};

int gen_data(const GenDataArgs& a) {
  MotionTaskConfig cfg = a.task;
  cfg.object = parse_object_shape(a.object);
  cfg.texture_correlation = parse_texture_correlation(a.texture_correlation);
  const Dataset d = generate_dataset(cfg, a.n, a.seed);
  write_dataset(d, a.out);
  std::printf("wrote %zu samples, %d classes, to %s\n", d.samples.size(), d.num_classes, a.out.c_str());
  return kOk;
}

struct TrainArgs {
  TrainConfig cfg;
  std::string out = "run";
  std::string resume;
  bool no_jitter = false;
};

int train_cmd(TrainArgs a) {
  if (a.cfg.data.empty()) throw ConfigError("train needs --data");
  if (a.no_jitter) a.cfg.jitter = false;
  const NetSpec spec = resolve_netspec(a.cfg.netspec);
  const Dataset train = read_dataset(a.cfg.data);
  Dataset test;
  if (!a.cfg.test_data.empty()) test = read_dataset(a.cfg.test_data);
  Trainer trainer(spec, a.cfg, train, a.cfg.test_data.empty() ? nullptr : &test);

  fs::create_directories(a.out);
  const fs::path metrics = fs::path(a.out) / "metrics.csv";
  std::ofstream log;
  if (!a.resume.empty()) {
    trainer.restore(load_checkpoint(a.resume));
    log.open(metrics, std::ios::app);
  } else {
    log.open(metrics);
    log << metrics_csv_header();
  }
  if (!log) throw IoError("cannot write '" + metrics.string() + "'");
  const fs::path ckpt = fs::path(a.out) / "checkpoint.bin";
  trainer.run([&](const EpochMetrics& m) {
    log << metrics_csv_row(m) << std::flush;
    save_checkpoint(trainer.checkpoint(), ckpt.string());
    std::printf("epoch %3d  lr %.5f  loss %.4f  train %.3f  test %.3f\n", m.epoch, m.lr,
                m.train_loss, m.train_acc, m.test_acc);
    std::fflush(stdout);
  });
  save_checkpoint(trainer.checkpoint(), ckpt.string());
  return kOk;
}

int eval_cmd(const std::string& checkpoint, const std::string& data, int clips) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  Network net = network_from_checkpoint(ck);
  const Dataset d = read_dataset(data);
  const EvalResult r = evaluate(net, d, net.spec().input.length, clips);
  std::printf("accuracy %.6f  (%zu videos, %d clips)\n", r.accuracy, d.samples.size(), clips);
  return kOk;
}

int gradcheck_cmd(const std::string& netspec, const GradcheckOptions& o, const std::string& out) {
  const GradcheckReport r = gradcheck(resolve_netspec(netspec), o);
  if (!out.empty()) write_text(out, r.to_csv());
  std::printf("checked %zu coordinates (%zu skipped at kinks), max rel err %.3e, tolerance %.1e: %s\n",
              r.entries.size(), r.skipped_kinks, r.max_rel_error, o.tolerance,
              r.passed ? "PASS" : "FAIL");
  return r.passed ? kOk : kNumeric;
}

int bench_cmd(const std::string& netspec, int batch, int repeats, const std::string& out) {
  const BenchResult r = bench(resolve_netspec(netspec), batch, repeats);
  if (!out.empty()) write_text(out, r.to_csv());
  std::printf("median forward %.4f s (batch %d, %d repeats); %llu params, %llu multiplies per clip\n",
              r.median, batch, repeats, static_cast<unsigned long long>(r.cost.total_params),
              static_cast<unsigned long long>(r.cost.total_flops));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation networks for video: data generation, training and analysis"};
  app.require_subcommand(1);
  std::string config;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON file with option defaults; flags take precedence");
  };

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic moving-object dataset");
  gen->add_option("--out", gd.out, "Output dataset file")->required();
  gen->add_option("--n", gd.n, "Number of videos");
  gen->add_option("--seed", gd.seed, "Generator seed");
  gen->add_option("--directions", gd.task.num_directions, "Motion directions (4 or 8)");
  gen->add_option("--speed", gd.task.speed, "Pixels per frame");
  gen->add_option("--object", gd.object, "square, disk or texture_patch");
  gen->add_option("--texture-correlation", gd.texture_correlation,
                  "none (label = direction) or full (label = texture)");
  gen->add_option("--noise", gd.task.noise_std, "Gaussian pixel noise std");
  gen->add_option("--height", gd.task.height);
  gen->add_option("--width", gd.task.width);
  gen->add_option("--length", gd.task.length, "Frames per video");
  gen->add_option("--object-size", gd.task.object_size);
  add_config(gen);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a network with SGD");
  tr->add_option("--netspec", ta.cfg.netspec, "Preset name or netspec file");
  tr->add_option("--data", ta.cfg.data, "Training dataset");
  tr->add_option("--test-data", ta.cfg.test_data, "Held-out dataset for per-epoch accuracy");
  tr->add_option("--epochs", ta.cfg.epochs);
  tr->add_option("--warmup", ta.cfg.warmup_epochs, "Warm-up epochs");
  tr->add_option("--lr", ta.cfg.lr_max, "Peak learning rate");
  tr->add_option("--momentum", ta.cfg.momentum);
  tr->add_option("--weight-decay", ta.cfg.weight_decay);
  tr->add_option("--batch", ta.cfg.batch_size);
  tr->add_option("--clip-len", ta.cfg.clip_len);
  tr->add_option("--seed", ta.cfg.seed);
  tr->add_option("--crop-scale", ta.cfg.crop_scale, "Resize factor for random crops (1 = off)");
  tr->add_option("--eval-clips", ta.cfg.eval_clips, "Clips per video for per-epoch test accuracy");
  tr->add_flag("--no-jitter", ta.no_jitter, "Always take the centered clip");
  tr->add_option("--resume", ta.resume, "Checkpoint to continue from");
  tr->add_option("--out", ta.out, "Run directory (metrics.csv, checkpoint.bin)");
  add_config(tr);

  std::string ev_ckpt, ev_data;
  int ev_clips = 10;
  auto* ev = app.add_subcommand("eval", "Multi-clip evaluation of a checkpoint");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--clips", ev_clips, "Clips averaged per video");
  add_config(ev);

  std::string gc_net = "corrnet-tiny", gc_out;
  GradcheckOptions gc_opts;
  auto* gc = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  gc->add_option("--netspec", gc_net);
  gc->add_option("--coords", gc_opts.n_coords, "Parameter coordinates to probe");
  gc->add_option("--seed", gc_opts.seed);
  gc->add_option("--tolerance", gc_opts.tolerance);
  gc->add_option("--out", gc_out, "Per-coordinate CSV");
  add_config(gc);

  std::string bn_net = "corrnet-tiny", bn_out;
  int bn_batch = 1, bn_repeats = 5;
  auto* bn = app.add_subcommand("bench", "Time forward passes next to analytic costs");
  bn->add_option("--netspec", bn_net);
  bn->add_option("--batch", bn_batch);
  bn->add_option("--repeats", bn_repeats);
  bn->add_option("--out", bn_out, "CSV output");
  add_config(bn);

  std::string if_ckpt, if_block, if_out = "filters";
  auto* insp = app.add_subcommand("inspect-filters", "Dump correlation filter weights");
  insp->add_option("--checkpoint", if_ckpt)->required();
  insp->add_option("--block", if_block, "Correlation block, e.g. res2.1")->required();
  insp->add_option("--out", if_out, "Output directory");
  add_config(insp);

  std::string cost_net = "corrnet-tiny", cost_out;
  auto* cost = app.add_subcommand("cost", "Per-layer parameter and multiply counts");
  cost->add_option("--netspec", cost_net);
  cost->add_option("--out", cost_out, "CSV output (stdout when omitted)");
  add_config(cost);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_config(*sub, config);
    if (sub == gen) return gen_data(gd);
    if (sub == tr) return train_cmd(ta);
    if (sub == ev) return eval_cmd(ev_ckpt, ev_data, ev_clips);
    if (sub == gc) return gradcheck_cmd(gc_net, gc_opts, gc_out);
    if (sub == bn) return bench_cmd(bn_net, bn_batch, bn_repeats, bn_out);
    if (sub == insp) {
      const auto table = inspect_filters(load_checkpoint(if_ckpt), if_block, if_out);
      std::printf("wrote %zu filter grids to %s\n", table.size(), if_out.c_str());
      return kOk;
    }
    if (sub == cost) {
      write_text(cost_out, cost_report(resolve_netspec(cost_net)).to_csv());
      return kOk;
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}

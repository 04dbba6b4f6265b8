#include "loupe/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "loupe/config.hpp"
#include "loupe/ensemble.hpp"
#include "loupe/gradcheck_suite.hpp"
#include "loupe/metrics.hpp"
#include "loupe/model.hpp"
#include "loupe/train.hpp"

namespace loupe::cli {

namespace {

constexpr const char* kUsage = R"(usage: loupe <command> [flags]

commands:
  gen        generate a synthetic dataset        (--config --out)
  train      train a model                       (--config --data --out)
  eval       evaluate a checkpoint               (--checkpoint --data --out)
  gradcheck  finite-difference gradient table    ([--seed] [--out])
  ensemble   greedy score-averaging ensemble     (--members --data --out)
  inspect    summarize a dataset or checkpoint   (--data | --checkpoint)

flags:
  --config PATH      config file (key = value lines)
  --set KEY=VALUE    override a config key (repeatable)
  --seed N           override the seed config key
  --out DIR          output directory (created if missing)
  --data PATH        dataset file (.vseq)
  --checkpoint PATH  model checkpoint
  --members A,B,...  candidate checkpoints for `ensemble`

The LOUPE_THREADS environment variable caps worker threads.
)";

struct Args {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string members;
};

Args parse_args(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("missing command");
  Args a;
  a.command = argv[0];
  const std::vector<std::string> commands{"gen",       "train",    "eval",
                                          "gradcheck", "ensemble", "inspect"};
  if (std::find(commands.begin(), commands.end(), a.command) == commands.end())
    throw ConfigError("unknown command '" + a.command + "'");
  for (std::size_t i = 1; i < argv.size(); ++i) {
    const std::string& flag = argv[i];
    const auto need_value = [&]() -> const std::string& {
      if (i + 1 >= argv.size()) throw ConfigError("flag '" + flag + "' needs a value");
      return argv[++i];
    };
    if (flag == "--config") a.config_path = need_value();
    else if (flag == "--set") a.overrides.push_back(need_value());
    else if (flag == "--seed") a.seed = need_value();
    else if (flag == "--out") a.out = need_value();
    else if (flag == "--data") a.data = need_value();
    else if (flag == "--checkpoint") a.checkpoint = need_value();
    else if (flag == "--members") a.members = need_value();
    else throw ConfigError("unknown flag '" + flag + "'");
  }
  return a;
}

Config build_config(const Args& a) {
  Config cfg = a.config_path.empty() ? Config::defaults() : Config::from_file(a.config_path);
  for (const auto& kv : a.overrides) cfg.apply_override(kv);
  if (!a.seed.empty()) cfg.set("seed", a.seed);
  return cfg;
}

std::string require_out(const Args& a) {
  if (a.out.empty()) throw ConfigError("command '" + a.command + "' needs --out");
  std::filesystem::create_directories(a.out);
  return a.out;
}

void write_snapshot(const std::string& out_dir, const Config& cfg) {
  const std::string path = out_dir + "/config.resolved";
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << cfg.resolved_text();
}

SynthSpec synth_spec_of(const Config& cfg) {
  SynthSpec s;
  s.videos = static_cast<std::uint32_t>(cfg.get_int("gen.videos"));
  s.labels = static_cast<std::uint32_t>(cfg.get_int("gen.labels"));
  s.zipf_exponent = cfg.get_double("gen.zipf_exponent");
  s.labels_per_video_min = static_cast<std::uint32_t>(cfg.get_int("gen.labels_min"));
  s.labels_per_video_max = static_cast<std::uint32_t>(cfg.get_int("gen.labels_max"));
  s.dim_visual = static_cast<std::uint32_t>(cfg.get_int("gen.dim_visual"));
  s.dim_audio = static_cast<std::uint32_t>(cfg.get_int("gen.dim_audio"));
  s.frames_min = static_cast<std::uint32_t>(cfg.get_int("gen.frames_min"));
  s.frames_max = static_cast<std::uint32_t>(cfg.get_int("gen.frames_max"));
  s.frame_noise = cfg.get_double("gen.frame_noise");
  s.distractor_ratio = cfg.get_double("gen.distractor_ratio");
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  return s;
}

int cmd_gen(const Args& a) {
  const Config cfg = build_config(a);
  const std::string out = require_out(a);
  write_snapshot(out, cfg);
  const auto ds = generate_synthetic(synth_spec_of(cfg));
  const std::string path = out + "/dataset.vseq";
  write_vseq(path, ds);
  std::size_t frames = 0;
  for (const auto& v : ds.videos) frames += v.frames;
  std::printf("wrote %s: %zu videos, %zu frames, %u labels, dims %u+%u\n", path.c_str(),
              ds.videos.size(), frames, ds.meta.label_count, ds.meta.dim_visual,
              ds.meta.dim_audio);
  return 0;
}

template <typename S>
int train_with(const Config& cfg, const Dataset& data, const std::string& out) {
  Model<S> model(ModelConfig::from(cfg, data.meta));
  const auto res = train_model(model, data, TrainConfig::from(cfg), out);
  std::printf("trained %zu steps (%zu samples); best validation gap %.6f\n", res.steps,
              res.samples, res.best_gap);
  std::printf("checkpoint: %s\nmetrics: %s\n", res.checkpoint_path.c_str(),
              res.metrics_path.c_str());
  return 0;
}

int cmd_train(const Args& a) {
  if (a.data.empty()) throw ConfigError("train needs --data");
  const Config cfg = build_config(a);
  const std::string out = require_out(a);
  write_snapshot(out, cfg);
  const Dataset data = read_vseq(a.data);
  if (cfg.get_string("model.precision") == "f64") return train_with<double>(cfg, data, out);
  return train_with<float>(cfg, data, out);
}

template <typename S>
int eval_with(const Config& cfg, const std::string& checkpoint, const Dataset& data,
              const std::string& out) {
  auto model = Model<S>::load_from_checkpoint(checkpoint);
  model.set_mode(BnMode::kEval);
  if (model.config().labels != data.meta.label_count)
    throw ConfigError("eval: checkpoint labels " + std::to_string(model.config().labels) +
                      " != dataset labels " + std::to_string(data.meta.label_count));
  std::vector<const FeatureSequence*> videos;
  for (const auto& v : data.videos) videos.push_back(&v);
  const auto passes = static_cast<std::size_t>(cfg.get_int("eval.passes"));
  const std::uint64_t seed = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).fork(0xE).next_u64();
  const auto preds = predict_all(model, videos, seed, passes);

  GapAccumulator acc;
  std::vector<std::vector<std::uint32_t>> truths;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    acc.add_video(preds[v], videos[v]->labels);
    truths.push_back(videos[v]->labels);
  }
  const double gap = acc.value();

  const std::string report = out + "/eval.csv";
  std::ofstream f(report);
  if (!f) throw IoError("cannot write '" + report + "'");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", gap);
  f << "metric,value\ngap@20," << buf << "\nvideos," << videos.size() << "\n";
  if (cfg.get_bool("eval.per_label_ap")) {
    f << "label,ap\n";
    for (std::uint32_t l = 0; l < data.meta.label_count; ++l) {
      std::snprintf(buf, sizeof(buf), "%.9g", per_label_ap(preds, truths, l));
      f << l << "," << buf << "\n";
    }
  }
  std::printf("gap@20 = %.6f over %zu videos (%zu passes)\n", gap, videos.size(), passes);
  std::printf("report: %s\n", report.c_str());
  return 0;
}

int cmd_eval(const Args& a) {
  if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  if (a.data.empty()) throw ConfigError("eval needs --data");
  const Config cfg = build_config(a);
  const std::string out = require_out(a);
  write_snapshot(out, cfg);
  const Dataset data = read_vseq(a.data);
  const auto ck = read_checkpoint(a.checkpoint);
  const auto mc = ModelConfig::from_canonical(ck.config_text);
  if (mc.precision == "f64") return eval_with<double>(cfg, a.checkpoint, data, out);
  return eval_with<float>(cfg, a.checkpoint, data, out);
}

int cmd_gradcheck(const Args& a) {
  const Config cfg = build_config(a);
  const auto checks = run_layer_gradchecks(static_cast<std::uint64_t>(cfg.get_int("seed")));
  std::printf("%-18s %14s %10s  %s\n", "layer", "max_rel_err", "tolerance", "status");
  bool all_pass = true;
  for (const auto& c : checks) {
    std::printf("%-18s %14.3e %10.0e  %s\n", c.layer.c_str(), c.max_rel_err, c.tolerance,
                c.pass ? "ok" : "FAIL");
    all_pass = all_pass && c.pass;
  }
  if (!a.out.empty()) {
    const std::string out = require_out(a);
    write_snapshot(out, cfg);
    std::ofstream f(out + "/gradcheck.csv");
    f << "layer,max_rel_err,tolerance,pass\n";
    char buf[64];
    for (const auto& c : checks) {
      std::snprintf(buf, sizeof(buf), "%.9e,%.0e", c.max_rel_err, c.tolerance);
      f << c.layer << "," << buf << "," << (c.pass ? 1 : 0) << "\n";
    }
  }
  return all_pass ? 0 : 3;
}

int cmd_ensemble(const Args& a) {
  if (a.members.empty()) throw ConfigError("ensemble needs --members");
  if (a.data.empty()) throw ConfigError("ensemble needs --data (validation set)");
  const Config cfg = build_config(a);
  const std::string out = require_out(a);
  write_snapshot(out, cfg);

  std::vector<std::string> paths;
  std::stringstream ss(a.members);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) paths.push_back(item);
  if (paths.empty()) throw ConfigError("ensemble: --members lists no checkpoints");

  const Dataset data = read_vseq(a.data);
  std::vector<const FeatureSequence*> val;
  for (const auto& v : data.videos) val.push_back(&v);

  const auto budget = static_cast<std::size_t>(cfg.get_int("ensemble.budget"));
  const auto passes = static_cast<std::size_t>(cfg.get_int("eval.passes"));
  const std::uint64_t seed = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).fork(0xE).next_u64();

  const auto first = read_checkpoint(paths[0]);
  const bool f64 = ModelConfig::from_canonical(first.config_text).precision == "f64";
  const auto res = f64 ? greedy_select_models<double>(paths, val, seed, passes, budget)
                       : greedy_select_models<float>(paths, val, seed, passes, budget);

  save_ensemble_spec(out + "/ensemble.spec", res.spec);
  save_selection_log(out + "/selection.csv", res.log);
  for (std::size_t i = 0; i < res.log.size(); ++i)
    std::printf("%zu. %-40s gap=%.6f\n", i + 1, res.log[i].checkpoint.c_str(), res.log[i].gap);
  std::printf("spec: %s\n", (out + "/ensemble.spec").c_str());
  return 0;
}

int cmd_inspect(const Args& a) {
  if (!a.data.empty()) {
    VseqReader r(a.data);
    std::size_t frames = 0, labels_total = 0, min_t = SIZE_MAX, max_t = 0;
    FeatureSequence s;
    std::map<std::uint32_t, std::size_t> label_freq;
    while (r.next(s)) {
      frames += s.frames;
      labels_total += s.labels.size();
      min_t = std::min(min_t, s.frames);
      max_t = std::max(max_t, s.frames);
      for (auto l : s.labels) ++label_freq[l];
    }
    r.finish();
    const auto n = r.video_count();
    std::printf("dataset %s\n", a.data.c_str());
    std::printf("  videos: %u, labels: %u, dims: %u visual + %u audio\n", n,
                r.meta().label_count, r.meta().dim_visual, r.meta().dim_audio);
    if (n > 0) {
      std::printf("  frames: total %zu, per video %zu..%zu (mean %.1f)\n", frames, min_t, max_t,
                  static_cast<double>(frames) / n);
      std::printf("  labels per video: mean %.2f\n", static_cast<double>(labels_total) / n);
      std::vector<std::pair<std::size_t, std::uint32_t>> top;
      for (const auto& [l, c] : label_freq) top.emplace_back(c, l);
      std::sort(top.rbegin(), top.rend());
      std::printf("  most frequent labels:");
      for (std::size_t i = 0; i < std::min<std::size_t>(5, top.size()); ++i)
        std::printf(" %u(x%zu)", top[i].second, top[i].first);
      std::printf("\n");
    }
    return 0;
  }
  if (!a.checkpoint.empty()) {
    const auto ck = read_checkpoint(a.checkpoint);
    std::printf("checkpoint %s\n", a.checkpoint.c_str());
    std::size_t total = 0;
    for (const auto& t : ck.tensors) {
      std::size_t numel = 1;
      std::string shape = "[";
      for (std::size_t i = 0; i < t.shape.size(); ++i) {
        numel *= t.shape[i];
        shape += (i ? "x" : "") + std::to_string(t.shape[i]);
      }
      shape += "]";
      std::printf("  %-24s %-12s %8zu\n", t.name.c_str(), shape.c_str(), numel);
      total += numel;
    }
    std::printf("  total entries: %zu\n", total);
    std::printf("-- embedded model config --\n%s", ck.config_text.c_str());
    return 0;
  }
  throw ConfigError("inspect needs --data or --checkpoint");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    const Args a = parse_args(args);
    if (a.command == "gen") return cmd_gen(a);
    if (a.command == "train") return cmd_train(a);
    if (a.command == "eval") return cmd_eval(a);
    if (a.command == "gradcheck") return cmd_gradcheck(a);
    if (a.command == "ensemble") return cmd_ensemble(a);
    return cmd_inspect(a);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << kUsage;
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace loupe::cli

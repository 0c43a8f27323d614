// rwgcn: command-line front end for the streaming engine.
//
//   rwgcn classify   --clip clip.jsonl [--checkpoint model.ckpt]
//   rwgcn bench      --windows 300,30,10 --duration 2
//   rwgcn noise      --in clip.jsonl --out noisy.jsonl --spatial 0.1
//   rwgcn train-toy  --epochs 40 --out toy.ckpt --csv metrics.csv
//   rwgcn gradcheck  --variant SF
//   rwgcn params     --variant SF+CF
//
// Every subcommand accepts --config <file>; flags override file values.
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 data error.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rwgcn/checkpoint.hpp"
#include "rwgcn/clip_io.hpp"
#include "rwgcn/config.hpp"
#include "rwgcn/engine.hpp"
#include "rwgcn/errors.hpp"
#include "rwgcn/growing.hpp"
#include "rwgcn/noise.hpp"
#include "rwgcn/training.hpp"

namespace {

using namespace rwgcn;

struct Common {
  std::string config_path;
  std::optional<std::size_t> clip_len;
  std::optional<std::size_t> window_len;
  std::optional<double> fps;
  std::optional<std::string> mode;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> num_classes;
  std::optional<std::size_t> max_persons;
  std::optional<double> spatial_p;
  std::optional<double> frame_drop_p;
  std::optional<double> confusion_p;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> lambda;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "TOML-style configuration file");
  app->add_option("--clip-len", c.clip_len, "frames per clip (T)");
  app->add_option("--window-len", c.window_len, "frames per window (W)");
  app->add_option("--fps", c.fps, "input frame rate");
  app->add_option("--mode", c.mode, "consensus, SF, CF or SF+CF");
  app->add_option("--checkpoint", c.checkpoint, "model checkpoint");
  app->add_option("--num-classes", c.num_classes, "classes of a freshly built model");
  app->add_option("--max-persons", c.max_persons, "person slots per clip (M)");
  app->add_option("--spatial", c.spatial_p, "keypoint drop probability");
  app->add_option("--frame-drop", c.frame_drop_p, "skeleton drop probability");
  app->add_option("--confusion", c.confusion_p, "ID confusion probability");
  app->add_option("--seed", c.seed, "noise seed");
  app->add_option("--lambda", c.lambda, "person slots after dynamic batching");
}

EngineConfig resolve(const Common& c) {
  KeyValueConfig kv;
  if (!c.config_path.empty()) kv = KeyValueConfig::load(c.config_path);
  auto put = [&](const char* key, const auto& value) {
    if (!value) return;
    std::ostringstream os;
    os << std::setprecision(17) << *value;
    kv.set(key, os.str());
  };
  put("window.clip_len", c.clip_len);
  put("window.window_len", c.window_len);
  put("window.fps_in", c.fps);
  put("window.mode", c.mode);
  put("model.checkpoint", c.checkpoint);
  put("model.num_classes", c.num_classes);
  put("model.max_persons", c.max_persons);
  put("noise.spatial_drop_p", c.spatial_p);
  put("noise.frame_drop_p", c.frame_drop_p);
  put("noise.id_confusion_p", c.confusion_p);
  put("noise.seed", c.seed);
  put("noise.lambda", c.lambda);
  if (kv.contains("window.clip_len") && !kv.contains("window.window_len")) {
    kv.set("window.window_len", kv.values().at("window.clip_len"));
  }
  return engine_config_from(kv);
}

Network build_network(const EngineConfig& cfg) {
  if (cfg.checkpoint) {
    Network net = load_checkpoint(*cfg.checkpoint);
    if (net.feedback.variant != cfg.window.mode) {
      throw ConfigError("checkpoint carries variant " + variant_name(net.feedback.variant) +
                        " but mode is " + variant_name(cfg.window.mode));
    }
    return net;
  }
  NetworkConfig nc;
  nc.num_classes = cfg.num_classes;
  Network net(nc);
  grow_attach(net, cfg.window.mode);
  return net;
}

bool any_noise(const NoiseConfig& n) {
  return n.spatial_drop_p > 0.0 || n.frame_drop_p > 0.0 || n.id_confusion_p > 0.0;
}

ClipTensor corrupt(const ClipTensor& clip, const NoiseConfig& noise) {
  return inject_temporal_noise(inject_spatial_noise(clip, noise), noise);
}

// Repeats the clip from frame 0 until its length is a multiple of W.
ClipTensor pad_to_multiple(const ClipTensor& clip, std::size_t w) {
  const std::size_t t = clip.frames();
  const std::size_t target = (t + w - 1) / w * w;
  if (target == t) return clip;
  ClipTensor out{Tensor({clip.persons(), clip.channels(), target, clip.joints()}), clip.fps};
  for (std::size_t m = 0; m < clip.persons(); ++m)
    for (std::size_t c = 0; c < clip.channels(); ++c)
      for (std::size_t f = 0; f < target; ++f)
        for (std::size_t v = 0; v < clip.joints(); ++v) out.at(m, c, f, v) = clip.at(m, c, f % t, v);
  return out;
}

int run_classify(const Common& common, const std::string& clip_path) {
  EngineConfig cfg = resolve(common);
  const Network net = build_network(cfg);
  const auto records = load_clip_file(clip_path);
  for (const ClipRecord& rec : records) {
    ClipTensor clip = to_tensor(rec, cfg.max_persons);
    if (any_noise(cfg.noise)) clip = corrupt(clip, cfg.noise);
    WindowConfig wc = cfg.window;
    wc.window_len = std::min(wc.window_len, clip.frames());
    clip = pad_to_multiple(clip, wc.window_len);
    wc.clip_len = clip.frames();
    wc.fps_in = rec.fps;
    StreamSession session(wc, net.config.num_classes);
    for (const ClipTensor& window : split_windows(clip, wc)) {
      std::cout << event_to_json(session.step(net, window)) << '\n';
    }
  }
  return 0;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("not a list of frame counts: " + text);
    }
  }
  if (out.empty()) throw ConfigError("empty window list");
  return out;
}

int run_bench(const Common& common, const std::string& windows, double duration,
              std::size_t people) {
  EngineConfig cfg = resolve(common);
  const Network net = build_network(cfg);
  const std::vector<std::size_t> ws =
      windows.empty() ? std::vector<std::size_t>{cfg.window.window_len} : parse_size_list(windows);
  std::cout << metrics_csv_header() << '\n';
  for (std::size_t w : ws) {
    WindowConfig wc = cfg.window;
    wc.window_len = w;
    wc.validate();
    const ThroughputReport r = measure_throughput(net, wc, people, duration);
    MetricsRow row;
    row.clip_len = wc.clip_len;
    row.window_len = w;
    row.fps_in = wc.fps_in;
    row.cps_in = r.clips > 0 ? r.clips_per_second()
                             : r.events_per_second() / static_cast<double>(wc.num_windows());
    row.aps_formula = compute_aps(double(wc.clip_len), double(w), row.cps_in);
    row.aps_measured = r.events_per_second();
    row.apd_seconds = compute_apd(wc.fps_in, double(w));
    std::cout << metrics_csv_row(row) << '\n';
  }
  return 0;
}

int run_noise(const Common& common, const std::string& in, const std::string& out_path) {
  EngineConfig cfg = resolve(common);
  std::vector<ClipRecord> out;
  for (const ClipRecord& rec : load_clip_file(in)) {
    std::size_t persons = cfg.max_persons;
    for (const auto& f : rec.frames)
      for (const auto& p : f.people) persons = std::max(persons, p.slot + 1);
    const ClipTensor noisy = corrupt(to_tensor(rec, persons, false), cfg.noise);
    ClipRecord r = from_tensor(noisy, rec.label);
    r.fps = rec.fps;
    r.width = rec.width;
    r.height = rec.height;
    out.push_back(std::move(r));
  }
  if (out_path.empty() || out_path == "-") {
    write_clip_lines(std::cout, out);
  } else {
    std::ofstream os(out_path);
    if (!os) throw DataError("cannot write " + out_path);
    write_clip_lines(os, out);
  }
  return 0;
}

struct ToyOptions {
  std::size_t samples = 64;
  std::size_t frames = 16;
  std::size_t window = 8;
  std::size_t epochs = 40;
  std::size_t batch = 8;
  double lr = 0.05;
  std::uint64_t seed = 1;
  std::string grow;
  std::size_t grow_epoch = 20;
  std::string out;
  std::string csv;
};

int run_train_toy(const Common& common, const ToyOptions& o) {
  if (!common.config_path.empty()) resolve(common);  // validates the file
  const ToyDataset data = make_toy_dataset(o.samples, o.frames, o.seed);
  NetworkConfig nc;
  nc.num_classes = 2;
  nc.blocks = compact_block_plan();
  nc.seed = o.seed;
  Network net(nc);

  OptimizerConfig opt;
  opt.lr = o.lr;
  TrainOptions to;
  to.epochs = o.epochs;
  to.batch_size = o.batch;
  to.window_len = o.window;
  to.seed = o.seed;
  if (!o.grow.empty()) to.grow = GrowPlan{o.grow_epoch, parse_variant(o.grow)};

  std::ofstream csv;
  if (!o.csv.empty()) {
    csv.open(o.csv);
    if (!csv) throw DataError("cannot write " + o.csv);
    csv << "epoch,lr,loss,acc\n";
  }
  train(net, data.clips, opt, to, [&](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << " lr " << m.lr << " loss " << m.loss << " acc "
              << m.accuracy << '\n';
    if (csv) csv << m.epoch << ',' << m.lr << ',' << std::setprecision(10) << m.loss << ','
                 << m.accuracy << '\n';
  });
  std::cout << "train accuracy (eval mode): " << evaluate_accuracy(net, data.clips, o.window)
            << '\n';
  if (!o.out.empty()) save_checkpoint(net, o.out);
  return 0;
}

int run_gradcheck(const std::string& variant, std::uint64_t seed, double tolerance) {
  const auto report = unrolled_gradient_check(parse_variant(variant), seed);
  double worst = 0.0;
  for (const auto& e : report) {
    std::cout << std::left << std::setw(44) << e.name << " rel " << std::scientific
              << std::setprecision(3) << e.rel_error << " abs " << e.max_abs_error
              << std::defaultfloat << '\n';
    worst = std::max(worst, e.rel_error);
  }
  std::cout << "worst relative error " << worst << (worst < tolerance ? " ok" : " FAILED") << '\n';
  return worst < tolerance ? 0 : 1;
}

int run_params(const Common& common, const std::string& variant, bool itemize) {
  EngineConfig cfg = resolve(common);
  if (!variant.empty()) cfg.window.mode = parse_variant(variant);
  Network net = build_network(cfg);
  if (itemize) {
    for (const auto& item : itemize_parameters(net)) {
      std::cout << std::left << std::setw(44) << item.name << ' ' << item.count << '\n';
    }
  }
  std::cout << "total " << count_parameters(net) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming skeleton action recognition with windowed ST-GCNs"};
  app.require_subcommand(1);

  Common common;
  std::string clip_path;
  auto* classify = app.add_subcommand("classify", "stream a clip file through the engine");
  add_common(classify, common);
  classify->add_option("--clip", clip_path, "clip file (JSON or JSON Lines)")->required();

  std::string windows;
  double duration = 1.0;
  std::size_t people = 1;
  auto* bench = app.add_subcommand("bench", "measure throughput and latency metrics as CSV");
  add_common(bench, common);
  bench->add_option("--windows", windows, "comma-separated window lengths");
  bench->add_option("--duration", duration, "seconds per window length")->check(CLI::PositiveNumber);
  bench->add_option("--people", people, "person slots per synthetic clip");

  std::string in_path, out_path;
  auto* noise = app.add_subcommand("noise", "corrupt clips with emulated upstream noise");
  add_common(noise, common);
  noise->add_option("--in", in_path, "input clip file")->required();
  noise->add_option("--out", out_path, "output JSON Lines file (default stdout)");

  ToyOptions toy;
  auto* train_toy = app.add_subcommand("train-toy", "train a compact model on the toy dataset");
  add_common(train_toy, common);
  train_toy->add_option("--samples", toy.samples, "toy clips to generate")->capture_default_str();
  train_toy->add_option("--frames", toy.frames, "frames per toy clip")->capture_default_str();
  train_toy->add_option("--window", toy.window, "training window length")->capture_default_str();
  train_toy->add_option("--epochs", toy.epochs, "training epochs")->capture_default_str();
  train_toy->add_option("--batch", toy.batch, "batch size")->capture_default_str();
  train_toy->add_option("--lr", toy.lr, "base learning rate")->capture_default_str();
  train_toy->add_option("--train-seed", toy.seed, "shuffle and data seed")->capture_default_str();
  train_toy->add_option("--grow", toy.grow, "variant grown mid-training (SF, CF, SF+CF)");
  train_toy->add_option("--grow-epoch", toy.grow_epoch, "epoch at which feedback is attached")->capture_default_str();
  train_toy->add_option("--out", toy.out, "checkpoint path");
  train_toy->add_option("--csv", toy.csv, "per-epoch metrics CSV");

  std::string gc_variant = "SF+CF";
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-3;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the unrolled pipeline");
  add_common(gradcheck, common);
  gradcheck->add_option("--variant", gc_variant);
  gradcheck->add_option("--check-seed", gc_seed);
  gradcheck->add_option("--tolerance", gc_tol);

  std::string params_variant;
  bool itemize = false;
  auto* params = app.add_subcommand("params", "count trainable parameters");
  add_common(params, common);
  params->add_option("--variant", params_variant);
  params->add_flag("--itemize", itemize, "print one line per parameter tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*classify) return run_classify(common, clip_path);
    if (*bench) return run_bench(common, windows, duration, people);
    if (*noise) return run_noise(common, in_path, out_path);
    if (*train_toy) return run_train_toy(common, toy);
    if (*gradcheck) {
      if (!common.config_path.empty()) resolve(common);
      return run_gradcheck(gc_variant, gc_seed, gc_tol);
    }
    if (*params) return run_params(common, params_variant, itemize);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "gramtex/error.hpp"
#include "gramtex/extractor.hpp"
#include "gramtex/generator.hpp"
#include "gramtex/imaging.hpp"
#include "gramtex/metric.hpp"
#include "gramtex/random.hpp"
#include "gramtex/runtime.hpp"
#include "gramtex/texture_loss.hpp"
#include "gramtex/transfer.hpp"

namespace gramtex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunManifest::write(const fs::path& path) const {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["version"] = version;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

fs::path manifest_path_for(const fs::path& output) { return fs::path(output.string() + ".run.json"); }

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw ConfigError("dtype must be f32 or f64, got \"" + s + "\"");
}

Tensor load_image(const fs::path& path, DType dtype) { return read_image(path).to_tensor(dtype); }

void save_image(const fs::path& path, const Tensor& image) { write_image(path, ImageBuffer::from_tensor(image)); }

fs::path with_extension(const fs::path& p, const std::string& ext) {
  fs::path out = p;
  out.replace_extension(ext);
  return out;
}

struct InitSpec {
  InitMode mode = InitMode::given_image;
  std::size_t scale = 4;
};

InitSpec parse_init_mode(const std::string& s) {
  if (s == "given") return {InitMode::given_image, 4};
  if (s == "white") return {InitMode::white, 4};
  if (s.rfind("bicubic-up", 0) == 0) {
    InitSpec spec{InitMode::bicubic_up, 4};
    if (s.size() > 10) {
      if (s[10] != ':') throw ConfigError("init mode \"" + s + "\" is not given, white or bicubic-up[:K]");
      try {
        spec.scale = std::stoul(s.substr(11));
      } catch (const std::exception&) {
        throw ConfigError("init mode \"" + s + "\" has a malformed scale");
      }
    }
    return spec;
  }
  throw ConfigError("init mode \"" + s + "\" is not given, white or bicubic-up[:K]");
}

LossConfig loss_config(const std::vector<std::string>& layers, const std::vector<double>& weights) {
  LossConfig cfg;
  if (!layers.empty()) cfg.layers = layers;
  cfg.weights = weights;
  cfg.validate();
  return cfg;
}

// Inserts `--key value` pairs from a JSON object right after the subcommand
// name, skipping keys the user set explicitly.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args,
                                           const std::vector<std::string>& subcommands) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw DataError("cannot open config " + config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + config_path + " is not valid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError("config " + config_path + " must hold a JSON object");

  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    if (key == "config" || given(key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back("--" + key);
      continue;
    }
    extra.push_back("--" + key);
    if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) joined += ',';
        joined += value[i].is_string() ? value[i].get<std::string>() : value[i].dump();
      }
      extra.push_back(joined);
    } else {
      extra.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  auto pos = std::find_first_of(args.begin(), args.end(), subcommands.begin(), subcommands.end());
  std::vector<std::string> out(args.begin(), pos == args.end() ? pos : pos + 1);
  out.insert(out.end(), extra.begin(), extra.end());
  if (pos != args.end()) out.insert(out.end(), pos + 1, args.end());
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
  return s;
}

RunManifest manifest_for(const CLI::App& sub, std::uint64_t seed) {
  RunManifest m;
  m.subcommand = sub.get_name();
  m.seed = seed;
  m.version = std::string(kVersion);
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    m.config[name] = opt->count() > 0 ? join(opt->results()) : opt->get_default_str();
  }
  return m;
}

struct Common {
  std::string weights;
  std::string dtype = "f32";
  std::uint64_t seed = 0;
  std::string config;
};

void add_common(CLI::App* sub, Common& c, bool weights) {
  if (weights) sub->add_option("-w,--weights", c.weights, "Feature extractor weights (TWF1)");
  sub->add_option("--dtype", c.dtype, "Compute precision: f32 or f64");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--config", c.config, "JSON file with option overrides");
}

FeatureExtractor require_extractor(const Common& c, const std::string& subcommand) {
  if (c.weights.empty()) throw ConfigError(subcommand + ": --weights is required");
  return FeatureExtractor::load(c.weights, parse_dtype(c.dtype));
}

struct TransferArgs {
  Common common;
  std::string style, init, init_mode, labels, output, csv;
  std::size_t steps = 500;
  double lr = 0.01;
  std::vector<std::string> layers;
  std::vector<double> layer_weights;
  bool no_clamp = false;
};

int do_transfer(const CLI::App& sub, const TransferArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.common.dtype);
  const FeatureExtractor extractor = require_extractor(a.common, "transfer");
  const Tensor style = load_image(a.style, dtype);

  const InitSpec init = parse_init_mode(a.init_mode.empty() ? (a.init.empty() ? "bicubic-up:4" : "given") : a.init_mode);
  Tensor given;
  if (init.mode == InitMode::given_image) {
    if (a.init.empty()) throw ConfigError("transfer: init mode given needs --init");
    given = load_image(a.init, dtype);
  }

  TransferConfig cfg;
  cfg.steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.loss = loss_config(a.layers, a.layer_weights);
  cfg.clamp = !a.no_clamp;
  cfg.init_mode = init.mode;
  cfg.init_scale = init.scale;
  if (!a.labels.empty()) {
    const LabelMap map = read_label_map(a.labels);
    if (map.width != style.dim(3) || map.height != style.dim(2)) {
      throw DataError("transfer: label map " + a.labels + " is " + std::to_string(map.width) + "x" +
                      std::to_string(map.height) + ", style is " + std::to_string(style.dim(3)) + "x" +
                      std::to_string(style.dim(2)));
    }
    cfg.masks = build_mask_set(map);
  }
  cfg.validate();

  const Tensor start = make_initial_image(cfg.init_mode, given, style, cfg.init_scale);
  const TransferReport report = optimize_image(start, style, extractor, cfg);

  const fs::path output = a.output;
  const fs::path csv = a.csv.empty() ? with_extension(output, ".csv") : fs::path(a.csv);
  save_image(output, report.final_image);
  write_loss_csv(csv, report.trace);

  RunManifest m = manifest_for(sub, a.common.seed);
  m.inputs = {a.style, a.common.weights};
  if (!a.init.empty()) m.inputs.push_back(a.init);
  if (!a.labels.empty()) m.inputs.push_back(a.labels);
  m.outputs = {output.string(), csv.string()};
  m.write(manifest_path_for(output));

  out << std::setprecision(9) << "initial_loss " << report.trace.front() << "\nfinal_loss " << report.final_loss
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string images, output, csv;
  std::size_t scale = 4, blocks = 10, width = 64, mse_steps = 200, texture_steps = 200, batch = 8, patch = 64;
  double lr = 5e-4;
  std::vector<std::string> layers;
  std::vector<double> layer_weights;
};

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("sr-train: image directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("sr-train: no .png or .ppm images in " + dir.string());
  return files;
}

Tensor sample_batch(const std::vector<Tensor>& images, std::size_t batch, std::size_t patch, Rng& rng, DType dtype) {
  std::vector<double> values;
  values.reserve(batch * 3 * patch * patch);
  for (std::size_t i = 0; i < batch; ++i) {
    const Tensor& img = images[rng.below(images.size())];
    const std::size_t top = rng.below(img.dim(2) - patch + 1);
    const std::size_t left = rng.below(img.dim(3) - patch + 1);
    const auto v = crop(img, top, left, patch, patch).to_vector();
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor::from_values({batch, 3, patch, patch}, values, dtype);
}

int do_sr_train(const CLI::App& sub, const TrainArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.common.dtype);
  GeneratorConfig gcfg{a.blocks, a.width, a.scale, 3};
  gcfg.validate();
  if (a.batch < 1) throw ConfigError("sr-train: batch must be positive");
  if (a.patch % a.scale != 0 || a.patch / a.scale < 4) {
    throw ConfigError("sr-train: patch " + std::to_string(a.patch) + " must be a multiple of scale " +
                      std::to_string(a.scale) + " with at least 4 low-resolution pixels");
  }
  const LossConfig lcfg = loss_config(a.layers, a.layer_weights);
  FeatureExtractor extractor;
  if (a.texture_steps > 0) extractor = require_extractor(a.common, "sr-train");

  const auto files = list_images(a.images);
  std::vector<Tensor> images;
  for (const auto& f : files) {
    Tensor t = load_image(f, dtype);
    if (t.dim(2) < a.patch || t.dim(3) < a.patch) {
      throw DataError("sr-train: " + f.string() + " is smaller than the " + std::to_string(a.patch) + " pixel patch");
    }
    images.push_back(std::move(t));
  }

  Rng rng(a.common.seed);
  TrainState state = TrainState::create(Generator::create(gcfg, rng.next(), dtype), AdamConfig{a.lr});
  auto step_once = [&] {
    TrainBatch b;
    b.hr = sample_batch(images, a.batch, a.patch, rng, dtype);
    b.lr = bicubic_downsample(b.hr, a.scale);
    return train_step(state, b, extractor, lcfg);
  };
  for (std::size_t i = 0; i < a.mse_steps; ++i) step_once();
  if (a.texture_steps > 0) {
    state.enter_phase(TrainPhase::texture);
    for (std::size_t i = 0; i < a.texture_steps; ++i) step_once();
  }

  const fs::path output = a.output;
  const fs::path csv = a.csv.empty() ? with_extension(output, ".csv") : fs::path(a.csv);
  state.generator.save(output);
  std::vector<double> trace;
  for (const auto& r : state.history) trace.push_back(r.loss);
  write_loss_csv(csv, trace);

  RunManifest m = manifest_for(sub, a.common.seed);
  for (const auto& f : files) m.inputs.push_back(f.string());
  if (!a.common.weights.empty()) m.inputs.push_back(a.common.weights);
  m.outputs = {output.string(), csv.string()};
  m.write(manifest_path_for(output));

  out << "parameters " << state.generator.parameter_count() << "\nsteps " << state.step << '\n';
  return kExitOk;
}

struct InferArgs {
  Common common;
  std::string checkpoint, input, output;
};

int do_sr_infer(const CLI::App& sub, const InferArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.common.dtype);
  const Generator g = Generator::load(a.checkpoint, dtype);
  const Tensor lr = load_image(a.input, dtype);
  Tensor hr;
  {
    NoGradGuard no_grad;
    hr = g.forward(lr);
  }
  save_image(a.output, hr);
  RunManifest m = manifest_for(sub, a.common.seed);
  m.inputs = {a.checkpoint, a.input};
  m.outputs = {a.output};
  m.write(manifest_path_for(a.output));
  out << "wrote " << a.output << ' ' << hr.dim(3) << 'x' << hr.dim(2) << '\n';
  return kExitOk;
}

MetricConfig metric_config(const FeatureExtractor& extractor, const std::vector<std::string>& layers) {
  MetricConfig cfg = layers.empty() ? MetricConfig::defaults_for(extractor.spec()) : MetricConfig{layers};
  cfg.validate(extractor.spec());
  return cfg;
}

struct MetricArgs {
  Common common;
  std::string a, b, json_path;
  std::vector<std::string> layers;
};

int do_metric(const CLI::App& sub, const MetricArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.common.dtype);
  const FeatureExtractor extractor = require_extractor(a.common, "metric");
  const MetricConfig cfg = metric_config(extractor, a.layers);
  const double d = image_distance(extractor, load_image(a.a, dtype), load_image(a.b, dtype), cfg);
  out << std::setprecision(17) << d << '\n';
  if (!a.json_path.empty()) {
    json j{{"a", a.a}, {"b", a.b}, {"distance", d}, {"taps", cfg.taps}};
    std::ofstream f(a.json_path, std::ios::trunc);
    if (!f) throw FormatError("cannot open " + a.json_path + " for writing");
    f << j.dump(2) << '\n';
    RunManifest m = manifest_for(sub, a.common.seed);
    m.inputs = {a.a, a.b, a.common.weights};
    m.outputs = {a.json_path};
    m.write(manifest_path_for(a.json_path));
  }
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string manifest, output;
  std::vector<std::string> layers;
};

int do_eval(const CLI::App& sub, const EvalArgs& a, std::ostream& out) {
  const fs::path manifest = a.manifest;
  const auto triplets = read_manifest(manifest);
  const FeatureExtractor extractor = require_extractor(a.common, "eval-2afc");
  const MetricConfig cfg = metric_config(extractor, a.layers);
  const EvalReport report = eval_2afc(triplets, extractor, cfg);

  const fs::path prefix =
      a.output.empty() ? manifest.parent_path() / (manifest.stem().string() + "_report") : fs::path(a.output);
  const fs::path csv(prefix.string() + ".csv"), js(prefix.string() + ".json");
  report.write_csv(csv);
  report.write_json(js);
  RunManifest m = manifest_for(sub, a.common.seed);
  m.inputs = {manifest.string(), a.common.weights};
  m.outputs = {csv.string(), js.string()};
  m.write(manifest_path_for(prefix));

  out << std::setprecision(6) << std::fixed << "score " << report.score << " over " << report.results.size()
      << " triplets\n";
  for (const auto& [name, s] : report.by_subtype) out << name << ' ' << s.score << " (" << s.count << ")\n";
  return kExitOk;
}

struct GramArgs {
  Common common;
  std::string image, layer, output;
  bool normalized = false;
};

int do_gram_dump(const CLI::App& sub, const GramArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.common.dtype);
  const FeatureExtractor extractor = require_extractor(a.common, "gram-dump");
  if (!extractor.spec().contains(a.layer)) throw ConfigError("gram-dump: unknown layer \"" + a.layer + "\"");
  NoGradGuard no_grad;
  const auto taps = extractor.forward_with_taps(load_image(a.image, dtype), {a.layer});
  const Tensor g = a.normalized ? normalized_gram(taps[0]) : gram(taps[0], a.layer).matrix;
  const std::size_t n = g.dim(1);
  const auto v = g.to_vector();
  std::ofstream f(a.output, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + a.output + " for writing");
  f << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) f << (j ? "," : "") << v[i * n + j];
    f << '\n';
  }
  if (!f) throw FormatError("write failed for " + a.output);
  RunManifest m = manifest_for(sub, a.common.seed);
  m.inputs = {a.image, a.common.weights};
  m.outputs = {a.output};
  m.write(manifest_path_for(a.output));
  out << "wrote " << n << 'x' << n << " Gram matrix for " << a.layer << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gram-matrix texture synthesis, super-resolution and perceptual scoring", "gramtex"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  TransferArgs ta;
  auto* transfer = app.add_subcommand("transfer", "Optimize image pixels to match a style image's Gram matrices");
  transfer->add_option("--style", ta.style, "Style (target) image")->required();
  transfer->add_option("--init", ta.init, "Initial image");
  transfer->add_option("--init-mode", ta.init_mode, "given | white | bicubic-up[:K] (default: given with --init, else bicubic-up:4)");
  transfer->add_option("--steps", ta.steps, "Optimizer steps");
  transfer->add_option("--lr", ta.lr, "Adam learning rate");
  transfer->add_option("--labels", ta.labels, "Label map of the style image (grayscale PNG) for the guided loss");
  transfer->add_option("--layers", ta.layers, "Tap layers")->delimiter(',');
  transfer->add_option("--layer-weights", ta.layer_weights, "Per-layer weights")->delimiter(',');
  transfer->add_flag("--no-clamp", ta.no_clamp, "Do not clamp pixels to [0, 1] after each step");
  transfer->add_option("-o,--output", ta.output, "Output image (.png or .ppm)")->required();
  transfer->add_option("--csv", ta.csv, "Loss trace (default: output with .csv)");
  add_common(transfer, ta.common, true);

  TrainArgs tr;
  auto* train = app.add_subcommand("sr-train", "Train the super-resolution generator (MSE phase, then texture phase)");
  train->add_option("--images", tr.images, "Directory of high-resolution training images")->required();
  train->add_option("--scale", tr.scale, "Upscaling factor");
  train->add_option("--blocks", tr.blocks, "Residual blocks");
  train->add_option("--width", tr.width, "Trunk channels");
  train->add_option("--mse-steps", tr.mse_steps, "Steps of MSE pre-training");
  train->add_option("--texture-steps", tr.texture_steps, "Steps with the texture loss");
  train->add_option("--batch", tr.batch, "Batch size");
  train->add_option("--patch", tr.patch, "High-resolution crop size");
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--layers", tr.layers, "Tap layers")->delimiter(',');
  train->add_option("--layer-weights", tr.layer_weights, "Per-layer weights")->delimiter(',');
  train->add_option("-o,--output", tr.output, "Checkpoint (TWF1)")->required();
  train->add_option("--csv", tr.csv, "Loss trace (default: output with .csv)");
  add_common(train, tr.common, true);

  InferArgs ia;
  auto* infer = app.add_subcommand("sr-infer", "Upscale an image with a trained generator");
  infer->add_option("--checkpoint", ia.checkpoint, "Generator checkpoint (TWF1)")->required();
  infer->add_option("--input", ia.input, "Low-resolution image")->required();
  infer->add_option("-o,--output", ia.output, "High-resolution image")->required();
  add_common(infer, ia.common, false);

  MetricArgs ma;
  auto* metric = app.add_subcommand("metric", "Gram-matrix perceptual distance between two images");
  metric->add_option("a", ma.a, "First image")->required();
  metric->add_option("b", ma.b, "Second image")->required();
  metric->add_option("--layers", ma.layers, "Tap layers (default: stage outputs after the first pool)")->delimiter(',');
  metric->add_option("--json", ma.json_path, "Also write the distance as JSON");
  add_common(metric, ma.common, true);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval-2afc", "Score a 2AFC manifest with the Gram-matrix distance");
  eval->add_option("manifest", ea.manifest, "JSON-lines triplet manifest")->required();
  eval->add_option("--layers", ea.layers, "Tap layers")->delimiter(',');
  eval->add_option("-o,--output", ea.output, "Report prefix (writes .csv and .json)");
  add_common(eval, ea.common, true);

  GramArgs ga;
  auto* gdump = app.add_subcommand("gram-dump", "Write the Gram matrix of one layer as CSV");
  gdump->add_option("image", ga.image, "Input image")->required();
  gdump->add_option("--layer", ga.layer, "Conv layer name")->required();
  gdump->add_flag("--normalized", ga.normalized, "Unit-normalize features and divide by positions");
  gdump->add_option("-o,--output", ga.output, "CSV output")->required();
  add_common(gdump, ga.common, true);

  try {
    std::vector<std::string> argv =
        apply_config_file(args, {"transfer", "sr-train", "sr-infer", "metric", "eval-2afc", "gram-dump"});
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::CallForHelp&) {
      const auto subs = app.get_subcommands();
      out << (subs.empty() ? app.help() : subs.front()->help());
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      const auto subs = app.get_subcommands();
      err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
      return kExitUsage;
    }

    configure_threads_from_env();
    if (transfer->parsed()) return do_transfer(*transfer, ta, out);
    if (train->parsed()) return do_sr_train(*train, tr, out);
    if (infer->parsed()) return do_sr_infer(*infer, ia, out);
    if (metric->parsed()) return do_metric(*metric, ma, out);
    if (eval->parsed()) return do_eval(*eval, ea, out);
    if (gdump->parsed()) return do_gram_dump(*gdump, ga, out);
    err << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace gramtex::cli

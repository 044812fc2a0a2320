#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ganilla/config.hpp"
#include "ganilla/evaluation.hpp"
#include "ganilla/synth.hpp"
#include "ganilla/training.hpp"

// The work behind each CLI subcommand. Each takes a validated RunConfig and
// writes only below its output directory.
namespace ganilla {

inline constexpr double kReferenceGeneratorParams = 7.2e6;  // reference GANILLA size

// ---- params ----

struct ParamsRow {
  GeneratorVariant variant;
  std::size_t total = 0;
  std::string layers;  // dump_layer_graph text
};

inline std::vector<ParamsRow> cmd_params(const RunConfig& cfg, const std::vector<GeneratorVariant>& variants,
                                         std::ostream& out, bool per_layer = false) {
  std::vector<ParamsRow> rows;
  for (auto v : variants) {
    GeneratorSpec spec = cfg.train.generator;
    spec.variant = v;
    Engine rng(cfg.train.seed);
    const auto net = build_generator<float>(spec, rng);
    rows.push_back({v, count_parameters(net), dump_layer_graph(net.layer_graph())});
  }
  for (const auto& r : rows) {
    if (per_layer) out << "# " << to_string(r.variant) << '\n' << r.layers;
    const double m = static_cast<double>(r.total) / 1e6;
    const double diff = 100.0 * (static_cast<double>(r.total) - kReferenceGeneratorParams) / kReferenceGeneratorParams;
    out << std::left << std::setw(24) << to_string(r.variant) << std::right << std::setw(10) << r.total << "  ("
        << std::fixed << std::setprecision(3) << m << "M; reference 7.2M, discrepancy " << std::showpos
        << std::setprecision(1) << diff << "%" << std::noshowpos << ")\n";
    out.unsetf(std::ios::fixed);
  }
  return rows;
}

// ---- synth-data ----

/// Writes the toy domains under cfg.out plus style sets for the style
/// classifier (styles/S0.. where S0 is the trainB style) and extra-style
/// illustrations used only as content-classifier negatives (negatives/).
inline fs::path cmd_synth_data(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("out: an output directory is required");
  SynthOptions opt;
  opt.image_size = cfg.synth.image_size;
  opt.n_test = cfg.synth.n_test;
  opt.n_scenes = cfg.eval.n_scenes;
  const std::uint64_t seed = cfg.train.seed;
  synth_toy_domains(seed, cfg.synth.n, cfg.out, opt);
  const std::size_t per_style = cfg.synth.style_images ? cfg.synth.style_images : cfg.synth.n;
  synth_style_sets(seed + 1, cfg.synth.n_styles, per_style, cfg.out / "styles", cfg.synth.image_size);
  if (cfg.synth.negative_styles) {
    const fs::path neg = cfg.out / "negatives";
    fs::create_directories(neg);
    Engine rng(seed + 2);
    for (std::size_t i = 0; i < per_style; ++i) {
      const std::size_t style = cfg.synth.n_styles + i % cfg.synth.negative_styles;
      write_png(neg / numbered("neg_", i), synth_illustration(style, cfg.synth.image_size, rng));
    }
  }
  return cfg.out;
}

// ---- train ----

/// Side-by-side input | translation rows for up to four images.
inline void write_sample_grid(const GeneratorNet<float>& g, const std::vector<Tensor<float>>& inputs,
                              const fs::path& path) {
  if (inputs.empty()) return;
  const std::size_t s = inputs[0].dim(2);
  RawImage grid(s * inputs.size(), 2 * s);
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const RawImage a = to_raw_image(inputs[r]);
    const RawImage b = to_raw_image(g.forward(inputs[r]));
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          grid.at(r * s + y, x, c) = a.at(y, x, c);
          grid.at(r * s + y, s + x, c) = b.at(y, x, c);
        }
  }
  write_png(path, grid);
}

/// Runs train_loop with a config echo, metrics CSV, checkpoints and sample
/// grids (every sample_every epochs and after the last one) in cfg.out.
inline TrainResult cmd_train(const RunConfig& cfg, const std::optional<fs::path>& resume = std::nullopt,
                             std::size_t stop_after_epoch = 0) {
  if (cfg.out.empty()) throw ConfigError("out: a run directory is required");
  if (cfg.data_root.empty()) throw ConfigError("data_root: a dataset directory is required");
  cfg.validate();
  const DomainPair data = load_unpaired_dataset(cfg.data_root);
  fs::create_directories(cfg.out / "samples");
  write_config_echo(cfg, cfg.out / "config.txt");

  const auto& sample_src = data.source_test.empty() ? data.source_train : data.source_test;
  std::vector<Tensor<float>> sample_inputs;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, sample_src.size()); ++i)
    sample_inputs.push_back(load_preprocessed(sample_src[i], cfg.train.image_size));

  TrainOptions opt{cfg.out};
  opt.resume_from = resume;
  opt.stop_after_epoch = stop_after_epoch;
  const std::size_t last = stop_after_epoch ? std::min(stop_after_epoch, cfg.train.epochs) : cfg.train.epochs;
  return train_loop<float>(cfg.train, data, opt, [&](const TrainState<float>& s) {
    if (s.epoch % s.cfg.sample_every == 0 || s.epoch == last) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << s.epoch << ".png";
      write_sample_grid(s.G, sample_inputs, cfg.out / "samples" / name.str());
    }
  });
}

// ---- translate ----

struct TranslateResult {
  fs::path manifest;
  std::size_t count = 0;
};

/// Applies the checkpoint's G to every image in cfg.input_dir, writing
/// PNGs with the same stem plus manifest.csv into cfg.out. Scene labels come
/// from cfg.labels (paths relative to the labels file's directory); the
/// style id from cfg.style_id or style_id.txt beside the labels.
inline TranslateResult cmd_translate(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: a generator checkpoint is required");
  if (cfg.input_dir.empty()) throw ConfigError("input_dir: an input directory is required");
  if (cfg.out.empty()) throw ConfigError("out: an output directory is required");
  if (!fs::exists(cfg.checkpoint)) throw CheckpointError("missing checkpoint " + cfg.checkpoint.string());
  const auto inputs = list_images(cfg.input_dir);
  if (inputs.empty()) throw DataError("no images in " + cfg.input_dir.string());
  auto [g, tcfg] = load_generator<float>(cfg.checkpoint);

  std::map<std::string, int> labels;
  fs::path label_dir;
  std::string style = cfg.style_id;
  if (!cfg.labels.empty()) {
    labels = read_labels_csv(cfg.labels);
    label_dir = fs::absolute(cfg.labels).lexically_normal().parent_path();
    if (style.empty() && fs::exists(label_dir / "style_id.txt")) {
      std::ifstream in(label_dir / "style_id.txt");
      std::getline(in, style);
      style = trim(style);
    }
  }
  if (style.empty()) style = "target";

  fs::create_directories(cfg.out);
  std::vector<ManifestRow> rows;
  for (const auto& p : inputs) {
    const std::string name = p.stem().string() + ".png";
    write_png(cfg.out / name, to_raw_image(g.forward(load_preprocessed(p, tcfg.image_size))));
    ManifestRow r{name, p.filename().string(), std::nullopt, style};
    if (!label_dir.empty()) {
      const std::string rel = fs::absolute(p).lexically_normal().lexically_relative(label_dir).generic_string();
      r.source_filename = rel;
      if (auto it = labels.find(rel); it != labels.end()) r.scene_class_id = it->second;
    }
    rows.push_back(std::move(r));
  }
  const fs::path manifest = cfg.out / "manifest.csv";
  write_manifest(rows, manifest);
  return {manifest, rows.size()};
}

// ---- eval ----

struct ClassifierSummary {
  fs::path style_path;
  fs::path content_path;
  double style_heldout = 0;
  double style_initial = 0;
  std::size_t style_heldout_size = 0;
  std::size_t style_classes = 0;
  double content_heldout = 0;
  double content_initial = 0;
  std::size_t content_heldout_size = 0;
  std::size_t content_classes = 0;
};

inline ClassifierTrainConfig classifier_train_config(const RunConfig& cfg, std::uint64_t salt) {
  ClassifierTrainConfig c;
  c.epochs = cfg.eval.epochs;
  c.batch_size = cfg.eval.batch_size;
  c.lr = cfg.eval.lr;
  c.seed = cfg.train.seed + salt;
  c.holdout_fraction = cfg.eval.holdout;
  return c;
}

/// Style classifier: one class per subdirectory of styles_root plus the
/// natural images of data_root/trainA. Content classifier: the labeled
/// trainA scenes plus negatives_root illustrations (default
/// data_root/negatives). Writes style.ckpt, content.ckpt and summary.txt.
inline ClassifierSummary cmd_eval_train_classifiers(const RunConfig& cfg) {
  if (cfg.data_root.empty()) throw ConfigError("data_root: a dataset directory is required");
  if (cfg.out.empty()) throw ConfigError("out: an output directory is required");
  cfg.validate();
  const DomainPair data = load_unpaired_dataset(cfg.data_root);
  const fs::path styles_root = cfg.styles_root.empty() ? cfg.data_root / "styles" : cfg.styles_root;
  const fs::path neg_root = cfg.negatives_root.empty() ? cfg.data_root / "negatives" : cfg.negatives_root;

  std::vector<StyleSet> styles;
  if (!fs::is_directory(styles_root)) throw DataError("missing directory: " + styles_root.string());
  std::set<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(styles_root))
    if (e.is_directory()) dirs.insert(e.path());
  for (const auto& d : dirs) styles.push_back({d.filename().string(), list_images(d)});

  StyleClassifierSpec sspec;
  sspec.patch = cfg.eval.patch;
  sspec.image_size = cfg.eval.image_size;
  sspec.heldout_patches_per_image = cfg.eval.heldout_patches;
  const auto style = train_style_classifier(styles, data.source_train, sspec, classifier_train_config(cfg, 101));

  std::map<fs::path, int> scenes;
  for (const auto& [rel, c] : data.source_labels)
    if (rel.rfind("trainA/", 0) == 0) scenes[data.root / rel] = c;
  ContentClassifierSpec cspec;
  cspec.n_scenes = cfg.eval.n_scenes;
  cspec.image_size = cfg.eval.image_size;
  const auto content = train_content_classifier(scenes, list_images(neg_root), cspec, classifier_train_config(cfg, 202));

  fs::create_directories(cfg.out);
  ClassifierSummary s{cfg.out / "style.ckpt",       cfg.out / "content.ckpt",   style.heldout_accuracy(),
                      style.initial_accuracy,       style.heldout_size,         style.spec.classes(),
                      content.heldout_accuracy(),   content.initial_accuracy,   content.heldout_size,
                      content.spec.classes()};
  save_style_classifier(style, s.style_path);
  save_content_classifier(content, s.content_path);
  std::ofstream txt(cfg.out / "summary.txt");
  auto counts = [](const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
  };
  txt << "style.classes = " << s.style_classes << "\nstyle.class_counts = " << counts(style.class_counts)
      << "\nstyle.heldout_accuracy = " << s.style_heldout << "\nstyle.initial_accuracy = " << s.style_initial
      << "\ncontent.classes = " << s.content_classes << "\ncontent.class_counts = " << counts(content.class_counts)
      << "\ncontent.heldout_accuracy = " << s.content_heldout << "\ncontent.initial_accuracy = " << s.content_initial
      << '\n';
  write_config_echo(cfg, cfg.out / "config.txt");
  return s;
}

/// Scores a translation manifest with trained classifiers and writes
/// report.csv / report.txt into cfg.out.
inline std::vector<EvalReport> cmd_eval_score(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("manifest: a translation manifest is required");
  if (cfg.classifiers.empty()) throw ConfigError("classifiers: a classifier directory is required");
  if (cfg.out.empty()) throw ConfigError("out: an output directory is required");
  cfg.validate();
  const auto style = load_style_classifier(cfg.classifiers / "style.ckpt");
  const auto content = load_content_classifier(cfg.classifiers / "content.ckpt");
  if (style.spec.image_size != content.spec.image_size)
    throw EvaluationError("style and content classifiers were trained at different image sizes");
  const auto by_style = load_generated(cfg.manifest, style.spec.image_size);
  for (const auto& [sid, imgs] : by_style) {
    (void)style.class_of(sid);  // unknown style ids are a classifier mismatch
    for (const auto& g : imgs)
      if (g.scene_label && (*g.scene_label < 0 || static_cast<std::size_t>(*g.scene_label) >= content.spec.n_scenes))
        throw EvaluationError("manifest/classifier mismatch: scene class " + std::to_string(*g.scene_label) + " of " +
                              g.filename.string() + " but the content classifier has " +
                              std::to_string(content.spec.n_scenes) + " scene classes");
  }
  const auto rows = score_generated(by_style, style, content, cfg.eval.patches, cfg.train.seed,
                                    parse_content_rule(cfg.eval.content_rule));
  fs::create_directories(cfg.out);
  emit_report(rows, cfg.out / "report.csv", cfg.out / "report.txt");
  return rows;
}

}  // namespace ganilla

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ganilla/train_config.hpp"

namespace ganilla {

/// Settings for toy-data synthesis.
struct SynthConfig {
  std::size_t n = 32;            // images per training domain
  std::size_t n_test = 8;        // labeled natural test inputs
  std::size_t image_size = 256;
  std::size_t n_styles = 3;      // style sets for the style classifier (S0 is the training target)
  std::size_t style_images = 0;  // per style set; 0 = same as n
  std::size_t negative_styles = 2;  // extra styles used only as content-classifier negatives
};

/// Settings for the evaluation classifiers and scoring.
struct EvalConfig {
  std::size_t image_size = 256;
  std::size_t patch = 100;
  std::size_t patches = 10;
  std::size_t heldout_patches = 4;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double holdout = 0.2;
  std::size_t n_scenes = 10;
  std::string content_rule = "correct_class";  // or non_negative
};

/// Everything a command needs. Precedence: CLI > config file > defaults.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  EvalConfig eval;
  std::filesystem::path data_root;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path input_dir;
  std::filesystem::path labels;
  std::filesystem::path styles_root;
  std::filesystem::path negatives_root;
  std::filesystem::path classifiers;
  std::filesystem::path manifest;
  std::string style_id;

  void validate() const {
    train.validate();
    if (eval.patch == 0 || eval.patch > eval.image_size)
      throw ConfigError("eval.patch: must be in [1, eval.image_size]");
    if (eval.patches == 0) throw ConfigError("eval.patches: must be >= 1");
    if (eval.epochs == 0) throw ConfigError("eval.epochs: must be >= 1");
    if (eval.batch_size == 0) throw ConfigError("eval.batch_size: must be >= 1");
    if (!(eval.lr > 0)) throw ConfigError("eval.lr: must be > 0");
    if (!(eval.holdout > 0 && eval.holdout < 1)) throw ConfigError("eval.holdout: must be in (0, 1)");
    if (eval.n_scenes == 0) throw ConfigError("eval.n_scenes: must be >= 1");
    if (eval.content_rule != "correct_class" && eval.content_rule != "non_negative")
      throw ConfigError("eval.content_rule: expected correct_class or non_negative, got '" + eval.content_rule + "'");
    if (synth.n == 0) throw ConfigError("synth.n: must be >= 1");
    if (synth.image_size < 8) throw ConfigError("synth.image_size: must be >= 8");
    if (synth.n_styles == 0) throw ConfigError("synth.n_styles: must be >= 1");
  }
};

/// Flat, ordered key=value view; feeding it back through set_field
/// reproduces the config.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  using config_detail::fmt;
  auto kv = to_key_values(c.train);
  auto add = [&](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
  add("synth.n", fmt(c.synth.n));
  add("synth.n_test", fmt(c.synth.n_test));
  add("synth.image_size", fmt(c.synth.image_size));
  add("synth.n_styles", fmt(c.synth.n_styles));
  add("synth.style_images", fmt(c.synth.style_images));
  add("synth.negative_styles", fmt(c.synth.negative_styles));
  add("eval.image_size", fmt(c.eval.image_size));
  add("eval.patch", fmt(c.eval.patch));
  add("eval.patches", fmt(c.eval.patches));
  add("eval.heldout_patches", fmt(c.eval.heldout_patches));
  add("eval.epochs", fmt(c.eval.epochs));
  add("eval.batch_size", fmt(c.eval.batch_size));
  add("eval.lr", fmt(c.eval.lr));
  add("eval.holdout", fmt(c.eval.holdout));
  add("eval.n_scenes", fmt(c.eval.n_scenes));
  add("eval.content_rule", c.eval.content_rule);
  add("data_root", c.data_root.string());
  add("out", c.out.string());
  add("checkpoint", c.checkpoint.string());
  add("input_dir", c.input_dir.string());
  add("labels", c.labels.string());
  add("styles_root", c.styles_root.string());
  add("negatives_root", c.negatives_root.string());
  add("classifiers", c.classifiers.string());
  add("manifest", c.manifest.string());
  add("style_id", c.style_id);
  return kv;
}

inline void set_field(RunConfig& c, const std::string& key, const std::string& value) {
  using config_detail::parse_number;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  if (key == "synth.n") c.synth.n = size();
  else if (key == "synth.n_test") c.synth.n_test = size();
  else if (key == "synth.image_size") c.synth.image_size = size();
  else if (key == "synth.n_styles") c.synth.n_styles = size();
  else if (key == "synth.style_images") c.synth.style_images = size();
  else if (key == "synth.negative_styles") c.synth.negative_styles = size();
  else if (key == "eval.image_size") c.eval.image_size = size();
  else if (key == "eval.patch") c.eval.patch = size();
  else if (key == "eval.patches") c.eval.patches = size();
  else if (key == "eval.heldout_patches") c.eval.heldout_patches = size();
  else if (key == "eval.epochs") c.eval.epochs = size();
  else if (key == "eval.batch_size") c.eval.batch_size = size();
  else if (key == "eval.lr") c.eval.lr = real();
  else if (key == "eval.holdout") c.eval.holdout = real();
  else if (key == "eval.n_scenes") c.eval.n_scenes = size();
  else if (key == "eval.content_rule") c.eval.content_rule = value;
  else if (key == "data_root") c.data_root = value;
  else if (key == "out") c.out = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "input_dir") c.input_dir = value;
  else if (key == "labels") c.labels = value;
  else if (key == "styles_root") c.styles_root = value;
  else if (key == "negatives_root") c.negatives_root = value;
  else if (key == "classifiers") c.classifiers = value;
  else if (key == "manifest") c.manifest = value;
  else if (key == "style_id") c.style_id = value;
  else set_field(c.train, key, value);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Reads `key = value` lines; '#' starts a comment. Errors carry file:line.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  for (const auto& [k, v] : read_config_file(path)) {
    try {
      set_field(c, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
}

/// Echo that fully determines a reproduction run.
inline void write_config_echo(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : to_key_values(c)) out << k << " = " << v << '\n';
}

}  // namespace ganilla

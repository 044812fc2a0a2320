// ganilla: train, translate, evaluate and inspect GANILLA models.
//
// Exit codes: 0 success, 2 bad configuration or command line, 1 runtime failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ganilla/commands.hpp"

namespace {

using namespace ganilla;

// Flag name -> config key. Values go through set_field so CLI and config
// file share one parser and one set of error messages.
struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"--seed", "seed", "Random seed"},
    {"--out", "out", "Output directory"},
    {"--checkpoint", "checkpoint", "Generator checkpoint (translate)"},
    {"--variant", "generator.variant", "ganilla | ablation1 | ablation2"},
    {"--epochs", "epochs", "Training epochs"},
    {"--lr", "lr", "Initial learning rate"},
    {"--data-root", "data_root", "Dataset root with trainA/ trainB/ [testA/ labels.csv]"},
    {"--input-dir", "input_dir", "Images to translate"},
    {"--labels", "labels", "labels.csv giving scene classes of the inputs"},
    {"--style-id", "style_id", "Target style id written to the manifest"},
    {"--styles-root", "styles_root", "One subdirectory of illustrations per style"},
    {"--negatives-root", "negatives_root", "Illustrations used as content negatives"},
    {"--classifiers", "classifiers", "Directory with style.ckpt and content.ckpt"},
    {"--manifest", "manifest", "Translation manifest.csv to score"},
    {"--n", "synth.n", "Images per synthetic training domain"},
    {"--n-test", "synth.n_test", "Synthetic labeled test inputs"},
    {"--image-size", "image_size", "Training image size"},
};

struct Cli {
  std::string config_file;
  std::vector<std::optional<std::string>> flag_values = std::vector<std::optional<std::string>>(std::size(kFlags));
  std::vector<std::string> sets;
  std::string resume;
  std::size_t stop_after = 0;
  bool all_variants = false;
  bool per_layer = false;

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (std::size_t i = 0; i < std::size(kFlags); ++i)
      if (flag_values[i]) set_field(cfg, kFlags[i].key, *flag_values[i]);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_field(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return cfg;
  }
};

void add_common(CLI::App& app, Cli& cli) {
  app.add_option("--config", cli.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
  for (std::size_t i = 0; i < std::size(kFlags); ++i)
    app.add_option(kFlags[i].name, cli.flag_values[i], kFlags[i].help);
  app.add_option("--set", cli.sets, "Override any config key (key=value), repeatable");
}

int run(int argc, char** argv) {
  CLI::App app{"GANILLA image-to-illustration translation"};
  app.require_subcommand(1);
  Cli cli;
  add_common(app, cli);
  app.fallthrough();

  auto* train = app.add_subcommand("train", "Train G, F, D_X, D_Y on an unpaired dataset");
  train->add_option("--resume", cli.resume, "Resume from a training checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after", cli.stop_after, "Stop after this epoch (0 = run to the end)");

  auto* translate = app.add_subcommand("translate", "Translate a directory of images with a trained G");

  auto* eval = app.add_subcommand("eval", "Evaluation classifiers and scoring");
  eval->require_subcommand(1);
  auto* eval_train = eval->add_subcommand("train-classifiers", "Train the style and content classifiers");
  auto* eval_score = eval->add_subcommand("score", "Score translated images");

  auto* params = app.add_subcommand("params", "Print generator parameter counts");
  params->add_flag("--all", cli.all_variants, "Report every generator variant");
  params->add_flag("--layers", cli.per_layer, "Also print the per-layer graph");

  auto* synth = app.add_subcommand("synth-data", "Write a small synthetic dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = cli.resolve();
    if (*train) {
      std::optional<fs::path> resume;
      if (!cli.resume.empty()) resume = cli.resume;
      const auto r = cmd_train(cfg, resume, cli.stop_after);
      std::cout << "trained " << r.metrics.size() << " steps; checkpoints:";
      for (const auto& c : r.checkpoints) std::cout << ' ' << c.string();
      std::cout << '\n';
    } else if (*translate) {
      const auto r = cmd_translate(cfg);
      std::cout << "translated " << r.count << " images; manifest " << r.manifest.string() << '\n';
    } else if (*eval_train) {
      const auto s = cmd_eval_train_classifiers(cfg);
      std::cout << "style classifier: " << s.style_classes << " classes, held-out accuracy " << s.style_heldout
                << " (" << s.style_heldout_size << " patches)\n"
                << "content classifier: " << s.content_classes << " classes, held-out accuracy " << s.content_heldout
                << " (" << s.content_heldout_size << " images)\n";
    } else if (*eval_score) {
      const auto rows = cmd_eval_score(cfg);
      for (const auto& r : rows)
        std::cout << r.style_id << ": content " << format1(r.content_acc) << " style " << format1(r.style_acc)
                  << " final " << format1(r.final) << '\n';
      const auto avg = average_row(rows);
      std::cout << "Avg: content " << format1(avg.content_acc) << " style " << format1(avg.style_acc) << " final "
                << format1(avg.final) << '\n';
    } else if (*params) {
      cfg.train.generator.validate();
      std::vector<GeneratorVariant> variants{cfg.train.generator.variant};
      if (cli.all_variants)
        variants = {GeneratorVariant::ganilla, GeneratorVariant::ablation1_additive_down,
                    GeneratorVariant::ablation2_deconv_up};
      cmd_params(cfg, variants, std::cout, cli.per_layer);
    } else if (*synth) {
      cfg.validate();
      std::cout << "wrote " << cmd_synth_data(cfg).string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }

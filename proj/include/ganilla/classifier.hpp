#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ganilla/checkpoint.hpp"
#include "ganilla/data.hpp"
#include "ganilla/nn.hpp"
#include "ganilla/ops.hpp"
#include "ganilla/optim.hpp"

// Compact from-scratch CNN used by both evaluation classifiers: four
// stride-2 conv blocks with leaky ReLU, global average pooling and a 1x1
// conv acting as the linear head. No normalization layers: the style cue
// is largely palette, which instance norm would erase.
namespace ganilla {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassifierNetSpec {
  std::size_t classes = 2;
  std::vector<std::size_t> widths{16, 32, 64, 64};
  std::size_t kernel = 3;
  double leaky_slope = 0.2;
  double init_std = 0.1;

  void validate() const {
    if (classes < 2) throw ConfigError("classifier: at least 2 classes are required");
    if (widths.empty()) throw ConfigError("classifier: widths must be non-empty");
    for (auto w : widths)
      if (w == 0) throw ConfigError("classifier: widths must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("classifier: kernel must be odd");
  }
};

template <typename T>
class ConvClassifier {
 public:
  ConvClassifier(const ClassifierNetSpec& spec, Engine& rng) : spec_(spec) {
    spec_.validate();
    LayerBuilder<T> b(params_, graph_, rng, spec_.init_std);
    std::size_t in = 3;
    for (std::size_t i = 0; i < spec_.widths.size(); ++i) {
      const std::string p = "cls.conv" + std::to_string(i + 1);
      blocks_.push_back(b.conv(p, in, spec_.widths[i], spec_.kernel, 2, spec_.kernel / 2, ops::PadMode::zero));
      b.mark(p + ".lrelu", "lrelu", 0, 1, spec_.widths[i], spec_.widths[i]);
      in = spec_.widths[i];
    }
    b.mark("cls.gap", "gap", 0, 1, in, in);
    head_ = b.conv("cls.head", in, spec_.classes, 1, 1, 0, ops::PadMode::zero);
  }

  ConvClassifier(const ConvClassifier&) = delete;
  ConvClassifier& operator=(const ConvClassifier&) = delete;
  ConvClassifier(ConvClassifier&&) noexcept = default;
  ConvClassifier& operator=(ConvClassifier&&) noexcept = default;

  const ClassifierNetSpec& spec() const noexcept { return spec_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  const std::vector<LayerInfo>& layer_graph() const noexcept { return graph_; }

  /// Logits [N, classes, 1, 1].
  Var<T> forward(const Var<T>& x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != 3) throw ShapeError("classifier input must be [N,3,H,W], got " + shape_str(s));
    Var<T> h = x;
    const T slope = static_cast<T>(spec_.leaky_slope);
    for (const auto& c : blocks_) h = ops::leaky_relu(apply(c, h), slope);
    return apply(head_, ops::global_avg_pool(h));
  }

  /// Arg-max class per batch entry; ties go to the lowest index.
  std::vector<int> predict(const Tensor<T>& x) const {
    const Tensor<T> z = forward(Var<T>::constant(x)).value();
    const std::size_t k = spec_.classes;
    std::vector<int> out(z.dim(0));
    for (std::size_t n = 0; n < out.size(); ++n) {
      const T* row = z.data() + n * k;
      out[n] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    return out;
  }

 private:
  ClassifierNetSpec spec_;
  ParamSet<T> params_;
  std::vector<LayerInfo> graph_;
  std::vector<Conv<T>> blocks_;
  Conv<T> head_;
};

struct LabeledSample {
  Tensor<float> x;  // [1,3,H,W]
  int label = 0;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
};

/// Percent of samples whose arg-max prediction equals the label.
template <typename T>
double accuracy(const ConvClassifier<T>& net, const std::vector<LabeledSample>& samples, std::size_t batch = 32) {
  if (samples.empty()) throw EvaluationError("accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    std::vector<Tensor<T>> xs;
    const std::size_t end = std::min(samples.size(), i + batch);
    for (std::size_t j = i; j < end; ++j) {
      if constexpr (std::is_same_v<T, float>) xs.push_back(samples[j].x);
      else xs.push_back(samples[j].x.template cast<T>());
    }
    const auto pred = net.predict(stack_batch<T>(xs));
    for (std::size_t j = i; j < end; ++j) correct += pred[j - i] == samples[j].label;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

/// Mini-batch Adam on softmax cross-entropy. `draw` supplies a fresh
/// training set each epoch (e.g. new random patches); `heldout` is fixed.
/// Returns the held-out accuracy after every epoch.
template <typename T, typename Draw>
std::vector<double> fit_classifier(ConvClassifier<T>& net, Draw&& draw, const std::vector<LabeledSample>& heldout,
                                   const ClassifierTrainConfig& cfg, Engine& rng) {
  Adam<T> opt(collect_params<T>({&net.params()}), {0.9, 0.999});
  std::vector<double> trace;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::vector<LabeledSample> train = draw(rng);
    if (train.empty()) throw EvaluationError("fit_classifier: empty training set");
    shuffle_in_place(train, rng);
    for (std::size_t i = 0; i < train.size(); i += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), i + cfg.batch_size);
      std::vector<Tensor<T>> xs;
      std::vector<int> labels;
      for (std::size_t j = i; j < end; ++j) {
        if constexpr (std::is_same_v<T, float>) xs.push_back(train[j].x);
        else xs.push_back(train[j].x.template cast<T>());
        labels.push_back(train[j].label);
      }
      opt.zero_grad();
      auto loss = ops::softmax_cross_entropy(net.forward(Var<T>::constant(stack_batch<T>(xs))), labels);
      if (!std::isfinite(loss.item())) throw EvaluationError("fit_classifier: non-finite loss");
      loss.backward();
      opt.step(cfg.lr);
    }
    if (!heldout.empty()) trace.push_back(accuracy(net, heldout));
  }
  return trace;
}

namespace classifier_detail {

/// Seeded per-class split; every class with >= 2 items keeps >= 1 on each side.
template <typename Item>
void split_holdout(std::vector<Item> items, double fraction, Engine& rng, std::vector<Item>& train,
                   std::vector<Item>& held) {
  shuffle_in_place(items, rng);
  std::size_t n_held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(items.size())));
  if (items.size() >= 2) n_held = std::clamp<std::size_t>(n_held, 1, items.size() - 1);
  else n_held = 0;
  held.insert(held.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_held));
  train.insert(train.end(), items.begin() + static_cast<std::ptrdiff_t>(n_held), items.end());
}

inline void put_spec(Archive& a, const ClassifierNetSpec& s) {
  a.meta["net.classes"] = std::to_string(s.classes);
  std::string w;
  for (std::size_t i = 0; i < s.widths.size(); ++i) w += (i ? "," : "") + std::to_string(s.widths[i]);
  a.meta["net.widths"] = w;
  a.meta["net.kernel"] = std::to_string(s.kernel);
  std::ostringstream slope;
  slope.precision(17);
  slope << s.leaky_slope;
  a.meta["net.leaky_slope"] = slope.str();
}

inline ClassifierNetSpec get_spec(const Archive& a) {
  ClassifierNetSpec s;
  s.classes = std::stoull(a.meta_at("net.classes"));
  s.widths.clear();
  std::stringstream ws(a.meta_at("net.widths"));
  for (std::string tok; std::getline(ws, tok, ',');) s.widths.push_back(std::stoull(tok));
  s.kernel = std::stoull(a.meta_at("net.kernel"));
  s.leaky_slope = std::stod(a.meta_at("net.leaky_slope"));
  return s;
}

template <typename T>
void put_params(Archive& a, const ParamSet<T>& ps) {
  for (const auto& p : ps) a.put(p.name, p.var.value());
}

template <typename T>
void get_params(const Archive& a, ParamSet<T>& ps) {
  for (auto& p : ps) {
    Tensor<T> t = a.get<T>(p.name);
    if (t.shape() != p.var.shape()) throw CheckpointError("shape mismatch for " + p.name);
    p.var.mutable_value() = std::move(t);
  }
}

}  // namespace classifier_detail

// ---- style classifier ----

/// Classes 0..n_styles-1 are illustration styles; class n_styles is "natural".
struct StyleClassifierSpec {
  std::size_t n_styles = 10;
  std::size_t patch = 100;
  std::size_t image_size = 256;
  std::size_t heldout_patches_per_image = 4;
  ClassifierNetSpec net;

  std::size_t classes() const { return n_styles + 1; }
  int natural_class() const { return static_cast<int>(n_styles); }
  void validate() const {
    if (n_styles < 1) throw ConfigError("style classifier: needs at least one style (2 classes)");
    if (patch == 0 || patch > image_size || image_size > 256)
      throw ConfigError("style classifier: need 0 < patch <= image_size <= 256");
  }
};

struct StyleClassifier {
  StyleClassifierSpec spec;
  std::vector<std::string> style_names;  // index = class id
  ConvClassifier<float> net;
  std::vector<double> heldout_trace;     // held-out patch accuracy per epoch
  std::vector<std::size_t> class_counts; // images per class
  double initial_accuracy = 0;           // held-out accuracy at random init
  std::size_t heldout_size = 0;

  int class_of(const std::string& style_id) const {
    auto it = std::find(style_names.begin(), style_names.end(), style_id);
    if (it == style_names.end()) throw EvaluationError("unknown style id '" + style_id + "'");
    return static_cast<int>(it - style_names.begin());
  }
  double heldout_accuracy() const { return heldout_trace.empty() ? 0.0 : heldout_trace.back(); }
};

struct StyleSet {
  std::string style_id;
  std::vector<fs::path> images;
};

/// Trains on random patches (one fresh patch per training image per epoch);
/// held-out accuracy uses fixed patches from a seeded per-class image split.
inline StyleClassifier train_style_classifier(const std::vector<StyleSet>& styles, const std::vector<fs::path>& natural,
                                              StyleClassifierSpec spec, const ClassifierTrainConfig& cfg) {
  if (styles.empty()) throw EvaluationError("style classifier: at least one style set is required");
  spec.n_styles = styles.size();
  spec.net.classes = spec.classes();
  spec.validate();
  std::vector<std::vector<fs::path>> per_class;
  std::vector<std::string> names;
  for (const auto& s : styles) {
    if (s.images.empty()) throw EvaluationError("style classifier: style '" + s.style_id + "' has no images");
    per_class.push_back(s.images);
    names.push_back(s.style_id);
  }
  if (natural.empty()) throw EvaluationError("style classifier: natural class has no images");
  per_class.push_back(natural);
  names.push_back("natural");

  Engine rng(cfg.seed);
  std::vector<LabeledSample> train_imgs, held_imgs;
  std::vector<std::size_t> counts;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    counts.push_back(per_class[c].size());
    std::vector<LabeledSample> items;
    for (const auto& p : per_class[c]) items.push_back({load_preprocessed(p, spec.image_size), static_cast<int>(c)});
    classifier_detail::split_holdout(std::move(items), cfg.holdout_fraction, rng, train_imgs, held_imgs);
  }
  std::vector<LabeledSample> heldout;
  for (const auto& s : held_imgs)
    for (std::size_t k = 0; k < spec.heldout_patches_per_image; ++k)
      heldout.push_back({random_patch(s.x, spec.patch, rng).data, s.label});

  StyleClassifier out{spec, names, ConvClassifier<float>(spec.net, rng), {}, counts};
  if (!heldout.empty()) out.initial_accuracy = accuracy(out.net, heldout);
  out.heldout_size = heldout.size();
  auto draw = [&](Engine& r) {
    std::vector<LabeledSample> batch;
    for (const auto& s : train_imgs) batch.push_back({random_patch(s.x, spec.patch, r).data, s.label});
    return batch;
  };
  out.heldout_trace = fit_classifier(out.net, draw, heldout, cfg, rng);
  return out;
}

inline void save_style_classifier(const StyleClassifier& c, const fs::path& path) {
  Archive a;
  a.meta["kind"] = "ganilla-style-classifier";
  classifier_detail::put_spec(a, c.spec.net);
  a.meta["patch"] = std::to_string(c.spec.patch);
  a.meta["image_size"] = std::to_string(c.spec.image_size);
  a.meta["n_styles"] = std::to_string(c.spec.n_styles);
  for (std::size_t i = 0; i < c.style_names.size(); ++i) a.meta["class." + std::to_string(i)] = c.style_names[i];
  a.meta["heldout_accuracy"] = std::to_string(c.heldout_accuracy());
  classifier_detail::put_params(a, c.net.params());
  a.save(path);
}

inline StyleClassifier load_style_classifier(const fs::path& path) {
  const Archive a = Archive::load(path);
  if (a.meta.count("kind") == 0 || a.meta.at("kind") != "ganilla-style-classifier")
    throw CheckpointError(path.string() + " is not a style classifier");
  StyleClassifierSpec spec;
  spec.net = classifier_detail::get_spec(a);
  spec.patch = std::stoull(a.meta_at("patch"));
  spec.image_size = std::stoull(a.meta_at("image_size"));
  spec.n_styles = std::stoull(a.meta_at("n_styles"));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.classes(); ++i) names.push_back(a.meta_at("class." + std::to_string(i)));
  Engine rng(0);
  StyleClassifier c{spec, names, ConvClassifier<float>(spec.net, rng), {std::stod(a.meta_at("heldout_accuracy"))}, {}};
  classifier_detail::get_params(a, c.net.params());
  return c;
}

// ---- content classifier ----

/// Classes 0..n_scenes-1 are scene classes; class n_scenes is the
/// "illustration" negative class.
struct ContentClassifierSpec {
  std::size_t n_scenes = 10;
  std::size_t image_size = 256;
  ClassifierNetSpec net;

  std::size_t classes() const { return n_scenes + 1; }
  int negative_class() const { return static_cast<int>(n_scenes); }
  void validate() const {
    if (n_scenes < 1) throw ConfigError("content classifier: needs at least one scene class (2 classes)");
    if (image_size == 0) throw ConfigError("content classifier: image_size must be positive");
  }
};

struct ContentClassifier {
  ContentClassifierSpec spec;
  ConvClassifier<float> net;
  std::vector<double> heldout_trace;
  std::vector<std::size_t> class_counts;
  double initial_accuracy = 0;
  std::size_t heldout_size = 0;

  double heldout_accuracy() const { return heldout_trace.empty() ? 0.0 : heldout_trace.back(); }
};

/// Full-image classifier over the labeled scenes plus illustration negatives.
inline ContentClassifier train_content_classifier(const std::map<fs::path, int>& scenes,
                                                  const std::vector<fs::path>& negatives, ContentClassifierSpec spec,
                                                  const ClassifierTrainConfig& cfg) {
  spec.net.classes = spec.classes();
  spec.validate();
  std::vector<std::vector<fs::path>> per_class(spec.classes());
  for (const auto& [p, c] : scenes) {
    if (c < 0 || static_cast<std::size_t>(c) >= spec.n_scenes)
      throw EvaluationError("content classifier: label " + std::to_string(c) + " of " + p.string() +
                            " outside [0," + std::to_string(spec.n_scenes) + ")");
    per_class[static_cast<std::size_t>(c)].push_back(p);
  }
  per_class.back() = negatives;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c].empty())
      throw EvaluationError("content classifier: class " + std::to_string(c) +
                            (c == spec.n_scenes ? " (illustration)" : "") + " has no images");

  Engine rng(cfg.seed);
  std::vector<LabeledSample> train, held;
  std::vector<std::size_t> counts;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    counts.push_back(per_class[c].size());
    std::vector<LabeledSample> items;
    for (const auto& p : per_class[c]) items.push_back({load_preprocessed(p, spec.image_size), static_cast<int>(c)});
    classifier_detail::split_holdout(std::move(items), cfg.holdout_fraction, rng, train, held);
  }
  ContentClassifier out{spec, ConvClassifier<float>(spec.net, rng), {}, counts};
  if (!held.empty()) out.initial_accuracy = accuracy(out.net, held);
  out.heldout_size = held.size();
  auto draw = [&](Engine&) { return train; };
  out.heldout_trace = fit_classifier(out.net, draw, held, cfg, rng);
  return out;
}

inline void save_content_classifier(const ContentClassifier& c, const fs::path& path) {
  Archive a;
  a.meta["kind"] = "ganilla-content-classifier";
  classifier_detail::put_spec(a, c.spec.net);
  a.meta["image_size"] = std::to_string(c.spec.image_size);
  a.meta["n_scenes"] = std::to_string(c.spec.n_scenes);
  a.meta["heldout_accuracy"] = std::to_string(c.heldout_accuracy());
  classifier_detail::put_params(a, c.net.params());
  a.save(path);
}

inline ContentClassifier load_content_classifier(const fs::path& path) {
  const Archive a = Archive::load(path);
  if (a.meta.count("kind") == 0 || a.meta.at("kind") != "ganilla-content-classifier")
    throw CheckpointError(path.string() + " is not a content classifier");
  ContentClassifierSpec spec;
  spec.net = classifier_detail::get_spec(a);
  spec.image_size = std::stoull(a.meta_at("image_size"));
  spec.n_scenes = std::stoull(a.meta_at("n_scenes"));
  Engine rng(0);
  ContentClassifier c{spec, ConvClassifier<float>(spec.net, rng), {std::stod(a.meta_at("heldout_accuracy"))}, {}};
  classifier_detail::get_params(a, c.net.params());
  return c;
}

}  // namespace ganilla

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ganilla/classifier.hpp"
#include "ganilla/data.hpp"

namespace ganilla {

/// Batch of [N,3,h,w] images in, one class id per image out.
using Predictor = std::function<std::vector<int>(const Tensor<float>&)>;

inline Predictor predictor_of(const ConvClassifier<float>& net) {
  return [&net](const Tensor<float>& x) { return net.predict(x); };
}

/// A translated image with its source label, as listed in the manifest.
struct GeneratedImage {
  fs::path filename;
  Tensor<float> image;  // [1,3,S,S]
  std::optional<int> scene_label;
};

/// Image-level style prediction: majority vote over `patches` random crops,
/// ties to the lowest class id.
inline int vote_style(const Tensor<float>& image, const Predictor& predict, std::size_t patches, std::size_t patch,
                      Engine& rng) {
  std::vector<Tensor<float>> crops;
  for (std::size_t k = 0; k < patches; ++k) crops.push_back(random_patch(image, patch, rng).data);
  std::map<int, std::size_t> votes;
  for (int c : predict(stack_batch<float>(crops))) ++votes[c];
  int best = -1;
  std::size_t best_n = 0;
  for (const auto& [c, n] : votes)  // ascending class id, so ">" keeps the lowest on ties
    if (n > best_n) best = c, best_n = n;
  return best;
}

/// Percent of images whose voted style equals `target_class`. Each image's
/// patches come from an rng seeded by (seed, filename), so the score does not
/// depend on the order of the set.
inline double style_score(const std::vector<GeneratedImage>& images, const Predictor& predict, int target_class,
                          std::size_t patch, std::size_t patches = 10, std::uint64_t seed = 0) {
  if (images.empty()) throw EvaluationError("style_score: empty image set");
  if (patches == 0) throw EvaluationError("style_score: patches must be positive");
  std::size_t hits = 0;
  for (const auto& g : images) {
    Engine rng(seed ^ std::hash<std::string>{}(g.filename.generic_string()));
    hits += vote_style(g.image, predict, patches, patch, rng) == target_class;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(images.size());
}

/// correct_class: a hit is a prediction equal to the source scene label.
/// non_negative: a hit is any scene class, i.e. anything but the
/// illustration class (looser; not used by default).
enum class ContentRule { correct_class, non_negative };

inline std::string to_string(ContentRule r) { return r == ContentRule::correct_class ? "correct_class" : "non_negative"; }

inline ContentRule parse_content_rule(const std::string& s) {
  if (s == "correct_class") return ContentRule::correct_class;
  if (s == "non_negative") return ContentRule::non_negative;
  throw ConfigError("eval.content_rule: expected correct_class or non_negative, got '" + s + "'");
}

/// Percent of images whose content survived translation. Under
/// correct_class the negative class can never match a scene label, so
/// predicting it always counts as wrong.
inline double content_score(const std::vector<GeneratedImage>& images, const Predictor& predict,
                            ContentRule rule = ContentRule::correct_class, int negative_class = -1) {
  if (images.empty()) throw EvaluationError("content_score: empty image set");
  std::size_t hits = 0;
  for (const auto& g : images) {
    const int pred = predict(g.image).at(0);
    if (rule == ContentRule::non_negative) {
      hits += pred != negative_class;
      continue;
    }
    if (!g.scene_label) throw EvaluationError("content_score: no scene label for " + g.filename.string());
    hits += pred == *g.scene_label;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(images.size());
}

/// One decimal, halves rounded up. The small slack absorbs binary
/// representation error of decimal inputs such as 45.15.
inline double round1(double v) { return std::floor(v * 10.0 + 0.5 + 1e-9) / 10.0; }

inline double final_score(double content_acc, double style_acc) { return round1((content_acc + style_acc) / 2.0); }

struct EvalReport {
  std::string style_id;
  double content_acc = 0;
  double style_acc = 0;
  double final = 0;
};

inline EvalReport make_report(std::string style_id, double content_acc, double style_acc) {
  return {std::move(style_id), content_acc, style_acc, final_score(content_acc, style_acc)};
}

/// Avg row: column means of the accuracies; the Avg final is the mean of
/// the per-style finals (this is how the reference results table's Avg row adds up).
inline EvalReport average_row(const std::vector<EvalReport>& rows) {
  if (rows.empty()) throw EvaluationError("emit_report: no rows");
  EvalReport avg{"Avg", 0, 0, 0};
  for (const auto& r : rows) {
    avg.content_acc += r.content_acc;
    avg.style_acc += r.style_acc;
    avg.final += r.final;
  }
  const double n = static_cast<double>(rows.size());
  avg.content_acc = round1(avg.content_acc / n);
  avg.style_acc = round1(avg.style_acc / n);
  avg.final = round1(avg.final / n);
  return avg;
}

inline std::string format1(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

/// Writes report.csv (style,content_acc,style_acc,final) and an aligned
/// report.txt, both ending with the Avg row. Returns the Avg row.
inline EvalReport emit_report(const std::vector<EvalReport>& rows, const fs::path& csv_path,
                              const fs::path& txt_path) {
  const EvalReport avg = average_row(rows);
  std::vector<EvalReport> all = rows;
  all.push_back(avg);

  std::ofstream csv(csv_path);
  if (!csv) throw EvaluationError("cannot write " + csv_path.string());
  csv << "style,content_acc,style_acc,final\n";
  for (const auto& r : all)
    csv << r.style_id << ',' << format1(r.content_acc) << ',' << format1(r.style_acc) << ',' << format1(r.final)
        << '\n';

  std::size_t w = 5;
  for (const auto& r : all) w = std::max(w, r.style_id.size());
  std::ofstream txt(txt_path);
  if (!txt) throw EvaluationError("cannot write " + txt_path.string());
  txt << std::left << std::setw(static_cast<int>(w)) << "Style" << std::right << std::setw(14) << "Content (%)"
      << std::setw(12) << "Style (%)" << std::setw(12) << "Final (%)" << '\n';
  txt << std::string(w + 38, '-') << '\n';
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i + 1 == all.size()) txt << std::string(w + 38, '-') << '\n';
    const auto& r = all[i];
    txt << std::left << std::setw(static_cast<int>(w)) << r.style_id << std::right << std::setw(14)
        << format1(r.content_acc) << std::setw(12) << format1(r.style_acc) << std::setw(12) << format1(r.final)
        << '\n';
  }
  return avg;
}

// ---- manifest ----

struct ManifestRow {
  std::string filename;         // relative to the manifest's directory
  std::string source_filename;  // as listed in the source labels
  std::optional<int> scene_class_id;
  std::string target_style_id;
};

inline constexpr const char* kManifestHeader = "filename,source_filename,scene_class_id,target_style_id";

inline void write_manifest(const std::vector<ManifestRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw EvaluationError("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows)
    out << r.filename << ',' << r.source_filename << ',' << (r.scene_class_id ? std::to_string(*r.scene_class_id) : "")
        << ',' << r.target_style_id << '\n';
}

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot read manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw EvaluationError(path.string() + ": expected header '" + kManifestHeader + "'");
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw EvaluationError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    ManifestRow r{f[0], f[1], std::nullopt, f[3]};
    if (!f[2].empty()) {
      try {
        r.scene_class_id = std::stoi(f[2]);
      } catch (const std::exception&) {
        throw EvaluationError(path.string() + ":" + std::to_string(lineno) + ": bad scene_class_id '" + f[2] + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Loads the images a manifest lists, grouped by target style id.
inline std::map<std::string, std::vector<GeneratedImage>> load_generated(const fs::path& manifest,
                                                                        std::size_t image_size) {
  std::map<std::string, std::vector<GeneratedImage>> by_style;
  const fs::path dir = manifest.parent_path();
  for (const auto& r : read_manifest(manifest))
    by_style[r.target_style_id].push_back({r.filename, load_preprocessed(dir / r.filename, image_size), r.scene_class_id});
  if (by_style.empty()) throw EvaluationError(manifest.string() + ": no generated images listed");
  return by_style;
}

/// Scores every style group in a manifest with the two classifiers.
inline std::vector<EvalReport> score_generated(const std::map<std::string, std::vector<GeneratedImage>>& by_style,
                                               const StyleClassifier& style, const ContentClassifier& content,
                                               std::size_t patches = 10, std::uint64_t seed = 0,
                                               ContentRule rule = ContentRule::correct_class) {
  std::vector<EvalReport> rows;
  for (const auto& [sid, images] : by_style) {
    const double s = style_score(images, predictor_of(style.net), style.class_of(sid), style.spec.patch, patches, seed);
    const double c = content_score(images, predictor_of(content.net), rule, content.spec.negative_class());
    rows.push_back(make_report(sid, c, s));
  }
  return rows;
}

}  // namespace ganilla

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ganilla/evaluation.hpp"
#include "ganilla/synth.hpp"
#include "support/tempdir.hpp"

namespace ganilla {
namespace {

using testing::TempDir;

GeneratedImage gen(const std::string& name, std::optional<int> label = std::nullopt, float fill = 0.f) {
  return {name, Tensor<float>({1, 3, 16, 16}, fill), label};
}

Predictor constant_stub(int c) {
  return [c](const Tensor<float>& x) { return std::vector<int>(x.dim(0), c); };
}

// Predicts the class stored in the image's first value.
Predictor echo_stub() {
  return [](const Tensor<float>& x) {
    std::vector<int> out;
    const std::size_t per = x.size() / x.dim(0);
    for (std::size_t n = 0; n < x.dim(0); ++n) out.push_back(static_cast<int>(x[n * per]));
    return out;
  };
}

// ---- final score against the reference results table ----

struct TableRow {
  const char* style;
  double content[4];  // CartoonGAN, CycleGAN, DualGAN, GANILLA
  double style_acc[4];
  double final[4];
};

const TableRow kTable[] = {
    {"AS", {16.4, 9.6, 33.2, 41.2}, {77.8, 99.2, 94.8, 95.3}, {47.1, 54.4, 64.0, 68.3}},
    {"DM", {1.0, 0.4, 87.0, 11.0}, {64.4, 88.8, 0.5, 81.4}, {32.7, 44.6, 43.8, 46.2}},
    {"KH", {0.4, 1.2, 87.4, 9.5}, {87.1, 99.0, 0.2, 81.6}, {43.8, 50.1, 43.8, 45.6}},
    {"KP", {89.6, 15.4, 31.0, 26.6}, {0.7, 99.2, 94.1, 89.6}, {45.2, 57.3, 62.6, 58.1}},
    {"MB", {85.6, 4.4, 87.4, 15.0}, {0.1, 94.0, 1.4, 67.0}, {42.9, 49.2, 44.4, 41.0}},
    {"PP", {8.2, 10.2, 36.0, 26.8}, {85.0, 96.4, 86.1, 91.7}, {46.6, 53.3, 61.1, 59.3}},
    {"RC", {1.0, 0.4, 87.4, 25.4}, {98.9, 99.8, 0.1, 85.6}, {50.0, 50.1, 43.8, 55.5}},
    {"SC", {3.8, 2.6, 85.2, 18.6}, {92.8, 99.8, 1.3, 59.4}, {48.3, 51.2, 43.3, 39.0}},
    {"SD", {3.8, 1.0, 5.8, 4.8}, {68.0, 96.6, 94.0, 98.4}, {35.9, 48.8, 49.9, 51.6}},
    {"TR", {22.0, 6.6, 34.4, 20.6}, {30.9, 99.3, 92.0, 94.7}, {26.5, 53.0, 63.2, 57.7}},
};
const TableRow kAvg{"Avg", {23.2, 5.2, 57.5, 20.0}, {60.6, 97.2, 46.5, 84.5}, {41.9, 51.2, 52.0, 52.2}};

TEST(FinalScore, Examples) {
  EXPECT_DOUBLE_EQ(final_score(41.2, 95.3), 68.3);
  EXPECT_DOUBLE_EQ(final_score(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(final_score(100, 100), 100.0);
}

// Exact .x5 midpoints round up; this is the rule every per-style row obeys.
TEST(FinalScore, HalfwayValuesRoundUp) {
  EXPECT_DOUBLE_EQ(final_score(20.0, 84.5), 52.3);
  EXPECT_DOUBLE_EQ(final_score(89.6, 0.7), 45.2);  // 45.15 is not exact in binary
  EXPECT_DOUBLE_EQ(final_score(9.5, 81.6), 45.6);
}

TEST(FinalScore, ReproducesEveryPerStyleRowOfTheReferenceTable) {
  for (const auto& row : kTable)
    for (int m = 0; m < 4; ++m)
      EXPECT_DOUBLE_EQ(final_score(row.content[m], row.style_acc[m]), row.final[m]) << row.style << " method " << m;
}

TEST(FinalScore, ReportAverageRowReproducesTheReferenceAvgRow) {
  for (int m = 0; m < 4; ++m) {
    std::vector<EvalReport> rows;
    for (const auto& row : kTable) rows.push_back(make_report(row.style, row.content[m], row.style_acc[m]));
    const EvalReport avg = average_row(rows);
    EXPECT_NEAR(avg.content_acc, kAvg.content[m], 0.05 + 1e-9) << m;
    EXPECT_NEAR(avg.style_acc, kAvg.style_acc[m], 0.05 + 1e-9) << m;
    EXPECT_DOUBLE_EQ(avg.final, kAvg.final[m]) << m;
  }
}

TEST(FinalScore, SymmetricAndIdempotent) {
  Engine rng(1);
  for (int i = 0; i < 200; ++i) {
    const double a = std::round(1000 * uniform01(rng)) / 10, b = std::round(1000 * uniform01(rng)) / 10;
    EXPECT_EQ(final_score(a, b), final_score(b, a));
    EXPECT_DOUBLE_EQ(final_score(a, a), a);
    EXPECT_GE(final_score(a, b), 0);
    EXPECT_LE(final_score(a, b), 100);
  }
}

// ---- scoring with stub classifiers ----

TEST(StyleScore, StubExamples) {
  std::vector<GeneratedImage> imgs{gen("a"), gen("b"), gen("c"), gen("d")};
  EXPECT_DOUBLE_EQ(style_score(imgs, constant_stub(2), 2, 8), 100.0);
  EXPECT_DOUBLE_EQ(style_score(imgs, constant_stub(3), 2, 8), 0.0);
  imgs = {gen("a", {}, 2), gen("b", {}, 2), gen("c", {}, 3), gen("d", {}, 2)};
  EXPECT_DOUBLE_EQ(style_score(imgs, echo_stub(), 2, 16), 75.0);
  EXPECT_THROW(style_score({}, constant_stub(0), 0, 8), EvaluationError);
}

TEST(StyleScore, MajorityVoteTiesGoToLowestClass) {
  Engine rng(0);
  int call = 0;
  // Ten patches: five votes for 4, five for 1.
  Predictor split = [&](const Tensor<float>& x) {
    ++call;
    std::vector<int> out;
    for (std::size_t n = 0; n < x.dim(0); ++n) out.push_back(n % 2 ? 4 : 1);
    return out;
  };
  EXPECT_EQ(vote_style(Tensor<float>({1, 3, 16, 16}), split, 10, 8, rng), 1);
  EXPECT_EQ(call, 1);
  Predictor three = [](const Tensor<float>& x) {
    std::vector<int> out;
    for (std::size_t n = 0; n < x.dim(0); ++n) out.push_back(n < 4 ? 7 : static_cast<int>(n % 3));
    return out;
  };
  EXPECT_EQ(vote_style(Tensor<float>({1, 3, 16, 16}), three, 10, 8, rng), 7);
}

TEST(StyleScore, PermutationInvariantWithPatchDependentStub) {
  // The stub's answer depends on where the patch was cut, so scores would
  // change with order if patches were drawn from a shared stream.
  Predictor by_content = [](const Tensor<float>& x) {
    std::vector<int> out;
    const std::size_t per = x.size() / x.dim(0);
    for (std::size_t n = 0; n < x.dim(0); ++n) out.push_back(x[n * per] > 0.5f ? 1 : 0);
    return out;
  };
  Engine rng(3);
  std::vector<GeneratedImage> imgs;
  for (int i = 0; i < 12; ++i) {
    GeneratedImage g = gen("img" + std::to_string(i));
    for (auto& v : g.image.values()) v = static_cast<float>(uniform01(rng));
    imgs.push_back(std::move(g));
  }
  const double base = style_score(imgs, by_content, 1, 4);
  for (int t = 0; t < 5; ++t) {
    shuffle_in_place(imgs, rng);
    EXPECT_DOUBLE_EQ(style_score(imgs, by_content, 1, 4), base);
  }
}

TEST(ContentScore, StubExamples) {
  std::vector<GeneratedImage> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(gen("g" + std::to_string(i), i % 3, static_cast<float>(i % 3)));
  EXPECT_DOUBLE_EQ(content_score(imgs, echo_stub()), 100.0);
  EXPECT_DOUBLE_EQ(content_score(imgs, constant_stub(10)), 0.0);  // negative class
  // labels 0,1,2,0,1; stub says 1 for all -> 2 of 5
  EXPECT_DOUBLE_EQ(content_score(imgs, constant_stub(1)), 40.0);
}

TEST(ContentScore, NonNegativeRuleOnlyPenalisesTheIllustrationClass) {
  std::vector<GeneratedImage> imgs{gen("a", 0, 0.f), gen("b", 1, 2.f), gen("c"), gen("d", 2, 10.f)};
  // a wrong scene still counts; the negative class (10) does not; labels are optional
  EXPECT_DOUBLE_EQ(content_score(imgs, echo_stub(), ContentRule::non_negative, 10), 75.0);
  EXPECT_DOUBLE_EQ(content_score(imgs, constant_stub(10), ContentRule::non_negative, 10), 0.0);
  EXPECT_EQ(parse_content_rule(to_string(ContentRule::non_negative)), ContentRule::non_negative);
  EXPECT_THROW(parse_content_rule("loose"), ConfigError);
}

TEST(ContentScore, MissingLabelNamesTheFile) {
  std::vector<GeneratedImage> imgs{gen("ok.png", 1), gen("lost_label.png")};
  try {
    content_score(imgs, constant_stub(1));
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("lost_label.png"), std::string::npos);
  }
  EXPECT_THROW(content_score({}, constant_stub(1)), EvaluationError);
}

TEST(ContentScore, PermutationInvariantAndBounded) {
  Engine rng(5);
  std::vector<GeneratedImage> imgs;
  for (int i = 0; i < 20; ++i) {
    const int lab = static_cast<int>(uniform_index(rng, 4));
    imgs.push_back(gen("x" + std::to_string(i), lab, static_cast<float>(uniform_index(rng, 4))));
  }
  const double s = content_score(imgs, echo_stub());
  EXPECT_GE(s, 0);
  EXPECT_LE(s, 100);
  shuffle_in_place(imgs, rng);
  EXPECT_DOUBLE_EQ(content_score(imgs, echo_stub()), s);
}

// ---- report ----

TEST(Report, SingleStyleAvgRowIsIdentical) {
  TempDir dir;
  const auto avg = emit_report({make_report("AS", 41.2, 95.3)}, dir / "r.csv", dir / "r.txt");
  EXPECT_DOUBLE_EQ(avg.content_acc, 41.2);
  EXPECT_DOUBLE_EQ(avg.style_acc, 95.3);
  EXPECT_DOUBLE_EQ(avg.final, 68.3);
  std::ifstream in(dir / "r.csv");
  std::string a, b, c;
  std::getline(in, a);
  std::getline(in, b);
  std::getline(in, c);
  EXPECT_EQ(a, "style,content_acc,style_acc,final");
  EXPECT_EQ(b, "AS,41.2,95.3,68.3");
  EXPECT_EQ(c, "Avg,41.2,95.3,68.3");
  EXPECT_TRUE(fs::file_size(dir / "r.txt") > 0);
}

TEST(Report, AvgColumnsMatchRecomputedMeans) {
  Engine rng(8);
  TempDir dir;
  for (int t = 0; t < 20; ++t) {
    std::vector<EvalReport> rows;
    const std::size_t n = 1 + uniform_index(rng, 12);
    double sc = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::round(1000 * uniform01(rng)) / 10, s = std::round(1000 * uniform01(rng)) / 10;
      sc += c;
      ss += s;
      rows.push_back(make_report("S" + std::to_string(i), c, s));
    }
    const auto avg = emit_report(rows, dir / "r.csv", dir / "r.txt");
    EXPECT_NEAR(avg.content_acc, sc / static_cast<double>(n), 0.05 + 1e-9);
    EXPECT_NEAR(avg.style_acc, ss / static_cast<double>(n), 0.05 + 1e-9);
  }
}

TEST(Report, EmptyRejected) {
  TempDir dir;
  EXPECT_THROW(emit_report({}, dir / "r.csv", dir / "r.txt"), EvaluationError);
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  const std::vector<ManifestRow> rows{{"S0/a.png", "testA/a.png", 3, "S0"}, {"S0/b.png", "testA/b.png", {}, "S0"}};
  write_manifest(rows, dir / "manifest.csv");
  const auto back = read_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].filename, "S0/a.png");
  EXPECT_EQ(back[0].scene_class_id, 3);
  EXPECT_EQ(back[1].source_filename, "testA/b.png");
  EXPECT_FALSE(back[1].scene_class_id.has_value());
  EXPECT_EQ(back[1].target_style_id, "S0");
  std::ofstream(dir / "bad.csv") << "wrong,header\n";
  EXPECT_THROW(read_manifest(dir / "bad.csv"), EvaluationError);
}

// ---- classifiers on the synthetic domains ----

struct ToyStyles {
  TempDir dir;
  std::vector<StyleSet> styles;
  std::vector<fs::path> natural;
  std::map<fs::path, int> scenes;
  std::vector<fs::path> illustrations;

  ToyStyles(std::size_t n_styles, std::size_t per_class) {
    synth_style_sets(11, n_styles, per_class, dir / "styles", 64);
    for (std::size_t s = 0; s < n_styles; ++s) styles.push_back({style_name(s), list_images(dir / "styles" / style_name(s))});
    SynthOptions opt;
    opt.image_size = 64;
    const auto root = synth_toy_domains(12, 10 * per_class, dir / "toy", opt);
    const auto data = load_unpaired_dataset(root);
    natural = data.source_train;
    for (const auto& [rel, c] : data.source_labels) scenes[root / rel] = c;
    illustrations = data.target_train;
  }
};

// Untrained nets tend to answer one class for everything, which on a
// balanced held-out set lands exactly on chance.
void expect_within_chance_band(double acc, std::size_t classes, std::size_t n) {
  const double p = 1.0 / static_cast<double>(classes);
  const double sigma = 100.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(acc, 100.0 * p, 3 * sigma) << "n=" << n;
}

StyleClassifierSpec toy_style_spec() {
  StyleClassifierSpec s;
  s.patch = 32;
  s.image_size = 64;
  return s;
}

ContentClassifierSpec toy_content_spec() {
  ContentClassifierSpec s;
  s.image_size = 64;
  return s;
}

TEST(StyleClassifier, SeparatesThreeToyStylesAndIsDeterministic) {
  ToyStyles toy(3, 20);
  ClassifierTrainConfig cfg;
  cfg.epochs = 15;
  const std::vector<fs::path> natural(toy.natural.begin(), toy.natural.begin() + 20);
  const auto a = train_style_classifier(toy.styles, natural, toy_style_spec(), cfg);
  EXPECT_GT(a.heldout_accuracy(), 90.0);
  expect_within_chance_band(a.initial_accuracy, 4, a.heldout_size);
  EXPECT_EQ(a.style_names.back(), "natural");
  EXPECT_EQ(a.class_of("S2"), 2);
  EXPECT_EQ(a.class_counts, (std::vector<std::size_t>{20, 20, 20, 20}));
  const auto b = train_style_classifier(toy.styles, natural, toy_style_spec(), cfg);
  ASSERT_EQ(a.heldout_trace.size(), b.heldout_trace.size());
  for (std::size_t i = 0; i < a.heldout_trace.size(); ++i) EXPECT_NEAR(a.heldout_trace[i], b.heldout_trace[i], 1e-6);

  TempDir out;
  save_style_classifier(a, out / "style.ckpt");
  const auto c = load_style_classifier(out / "style.ckpt");
  EXPECT_EQ(c.style_names, a.style_names);
  const auto x = load_preprocessed(toy.styles[1].images[0], 64);
  Engine rng(1);
  const auto patch = random_patch(x, 32, rng).data;
  EXPECT_EQ(c.net.predict(patch), a.net.predict(patch));
}

TEST(StyleClassifier, DegenerateInputsRejected) {
  ToyStyles toy(1, 2);
  EXPECT_THROW(train_style_classifier({}, toy.natural, toy_style_spec(), {}), EvaluationError);
  EXPECT_THROW(train_style_classifier({{"S0", {}}}, toy.natural, toy_style_spec(), {}), EvaluationError);
  EXPECT_THROW(train_style_classifier(toy.styles, {}, toy_style_spec(), {}), EvaluationError);
}

TEST(ContentClassifier, SeparatesTenToyScenes) {
  ToyStyles toy(1, 12);
  ClassifierTrainConfig cfg;
  cfg.epochs = 25;
  const auto c = train_content_classifier(toy.scenes, toy.illustrations, toy_content_spec(), cfg);
  EXPECT_GT(c.heldout_accuracy(), 90.0);
  ASSERT_EQ(c.class_counts.size(), 11u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(c.class_counts[k], 12u);
  EXPECT_EQ(c.class_counts[10], 120u);

  TempDir out;
  save_content_classifier(c, out / "content.ckpt");
  const auto d = load_content_classifier(out / "content.ckpt");
  const auto x = load_preprocessed(toy.natural[3], 64);
  EXPECT_EQ(d.net.predict(x), c.net.predict(x));
}

TEST(ContentClassifier, EmptyClassRejected) {
  ToyStyles toy(1, 2);
  EXPECT_THROW(train_content_classifier(toy.scenes, {}, toy_content_spec(), {}), EvaluationError);
  std::map<fs::path, int> partial{{toy.natural[0], 0}};
  EXPECT_THROW(train_content_classifier(partial, toy.illustrations, toy_content_spec(), {}), EvaluationError);
}

}  // namespace
}  // namespace ganilla

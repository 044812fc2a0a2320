#include <gtest/gtest.h>

#include <set>

#include "ganilla/generator.hpp"
#include "support/gradcheck.hpp"
#include "support/param_oracle.hpp"

namespace ganilla {
namespace {

using testing::generator_param_oracle;
using testing::tiny_generator_spec;

TEST(Generator, DefaultSpecMatchesLayerArithmetic) {
  Engine rng(0);
  for (auto v : {GeneratorVariant::ganilla, GeneratorVariant::ablation1_additive_down,
                 GeneratorVariant::ablation2_deconv_up}) {
    GeneratorSpec spec;
    spec.variant = v;
    auto net = build_generator<float>(spec, rng);
    EXPECT_EQ(count_parameters(net), generator_param_oracle(spec)) << to_string(v);
  }
}

TEST(Generator, SinglePointwiseConvCount) {
  ParamSet<float> params;
  std::vector<LayerInfo> graph;
  Engine rng(0);
  LayerBuilder<float> b(params, graph, rng);
  b.conv("c", 2, 3, 1, 1, 0, ops::PadMode::zero);
  EXPECT_EQ(params.scalar_count(), 9u);
  EXPECT_EQ(graph.front().params, 9u);
}

TEST(Generator, GraphHasFourLayersOfTwoBlocks) {
  Engine rng(0);
  auto net = build_generator<float>(GeneratorSpec{}, rng);
  std::set<std::string> blocks;
  std::size_t concats = 0;
  for (const auto& l : net.layer_graph()) {
    if (l.name.rfind("layer", 0) == 0 && l.name.find(".block") != std::string::npos)
      blocks.insert(l.name.substr(0, l.name.find('.', l.name.find(".block") + 1)));
    if (l.kind == "concat") ++concats;
  }
  EXPECT_EQ(blocks.size(), 8u);
  EXPECT_EQ(concats, 8u);
  EXPECT_EQ(upsampling_sources(net.layer_graph()), (std::set<std::string>{"layer1", "layer2", "layer3", "layer4"}));
}

TEST(Generator, DeconvAblationConsumesOnlyLastLayer) {
  Engine rng(0);
  GeneratorSpec spec;
  spec.variant = GeneratorVariant::ablation2_deconv_up;
  auto net = build_generator<float>(spec, rng);
  EXPECT_EQ(upsampling_sources(net.layer_graph()), (std::set<std::string>{"layer4"}));
  std::size_t deconvs = 0;
  for (const auto& l : net.layer_graph()) deconvs += l.kind == "deconv";
  EXPECT_EQ(deconvs, 5u);
}

TEST(Generator, AdditiveAblationHasNoConcat) {
  Engine rng(0);
  auto net = build_generator<float>(tiny_generator_spec(GeneratorVariant::ablation1_additive_down), rng);
  for (const auto& l : net.layer_graph()) EXPECT_NE(l.kind, "concat") << l.name;
}

TEST(Generator, ShapeCalculus) {
  const auto t = downsampling_trace(256);
  EXPECT_EQ(t, (std::array<std::size_t, 5>{128, 64, 32, 16, 8}));
  Engine rng(1);
  auto net = build_generator<float>(tiny_generator_spec(), rng);
  ForwardTrace trace;
  auto y = net.forward(Var<float>::constant(Tensor<float>({1, 3, 256, 256})), &trace);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 256, 256}));
  EXPECT_EQ(trace.heights, (std::vector<std::size_t>{128, 64, 32, 16, 8}));
}

TEST(Generator, ZeroInputGivesFiniteBoundedOutput) {
  Engine rng(2);
  for (auto v : {GeneratorVariant::ganilla, GeneratorVariant::ablation1_additive_down,
                 GeneratorVariant::ablation2_deconv_up}) {
    auto net = build_generator<float>(tiny_generator_spec(v), rng);
    auto y = forward_generate(net, Tensor<float>({2, 3, 32, 64}));
    ASSERT_EQ(y.shape(), (Shape{2, 3, 32, 64}));
    for (float val : y.values()) {
      ASSERT_TRUE(std::isfinite(val));
      ASSERT_LE(std::abs(val), 1.0f);
    }
  }
}

TEST(Generator, RandomShapesPreserved) {
  Engine rng(3);
  auto net = build_generator<float>(tiny_generator_spec(), rng);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 2);
    const std::size_t h = 32 * (1 + uniform_index(rng, 3));
    const std::size_t w = 32 * (1 + uniform_index(rng, 3));
    Tensor<float> x({n, 3, h, w});
    for (auto& v : x.values()) v = static_cast<float>(2 * uniform01(rng) - 1);
    auto y = net.forward(x);
    EXPECT_EQ(y.shape(), x.shape());
    for (float v : y.values()) ASSERT_LE(std::abs(v), 1.0f);
  }
}

TEST(Generator, RejectsBadInputsAndSpecs) {
  Engine rng(4);
  auto net = build_generator<float>(tiny_generator_spec(), rng);
  try {
    net.forward(Tensor<float>({1, 3, 48, 64}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }
  try {
    net.forward(Tensor<float>({1, 3, 64, 40}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  auto bad = tiny_generator_spec();
  bad.layer_widths[2] = 0;
  EXPECT_THROW(build_generator<float>(bad, rng), ConfigError);
  bad = tiny_generator_spec();
  bad.fpn_width = 0;
  EXPECT_THROW(build_generator<float>(bad, rng), ConfigError);
  EXPECT_THROW(parse_variant("cyclegan"), ConfigError);
}

TEST(Generator, DeterministicForward) {
  Engine rng(5);
  auto net = build_generator<float>(tiny_generator_spec(), rng);
  Tensor<float> x({1, 3, 64, 64});
  for (auto& v : x.values()) v = static_cast<float>(2 * uniform01(rng) - 1);
  EXPECT_EQ(net.forward(x), net.forward(x));
}

TEST(Generator, VariantsDiffer) {
  Engine rng(6);
  std::set<std::size_t> counts;
  std::set<std::string> dumps;
  for (auto v : {GeneratorVariant::ganilla, GeneratorVariant::ablation1_additive_down,
                 GeneratorVariant::ablation2_deconv_up}) {
    auto net = build_generator<float>(tiny_generator_spec(v), rng);
    counts.insert(count_parameters(net));
    dumps.insert(dump_layer_graph(net.layer_graph()));
  }
  EXPECT_EQ(counts.size(), 3u);
  EXPECT_EQ(dumps.size(), 3u);
}

TEST(Generator, GradientsMatchFiniteDifferences) {
  for (auto v : {GeneratorVariant::ganilla, GeneratorVariant::ablation1_additive_down,
                 GeneratorVariant::ablation2_deconv_up}) {
    Engine rng(7);
    auto net = build_generator<double>(tiny_generator_spec(v), rng);
    // Larger weights than the 0.02 init keep activations away from degenerate scales.
    for (auto& p : net.params())
      if (p.name.ends_with(".weight"))
        for (auto& w : p.var.mutable_value().values()) w *= 10;
    auto x = Var<double>::constant(testing::random_tensor({1, 3, 32, 32}, rng));
    auto target = Var<double>::constant(testing::random_tensor({1, 3, 32, 32}, rng, 0.5));
    std::vector<Var<double>> vars;
    for (auto& p : net.params()) vars.push_back(p.var);
    auto res = testing::check_gradients(vars, [&] { return ops::mean_abs_diff(net.forward(x), target); }, 60, rng);
    EXPECT_EQ(res.checked, 60u);
    EXPECT_LT(res.max_rel_error, 1e-3) << to_string(v);
  }
}

}  // namespace
}  // namespace ganilla

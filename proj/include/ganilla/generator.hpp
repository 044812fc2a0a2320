#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ganilla/autograd.hpp"
#include "ganilla/nn.hpp"
#include "ganilla/ops.hpp"
#include "ganilla/rng.hpp"

namespace ganilla {

enum class GeneratorVariant { ganilla, ablation1_additive_down, ablation2_deconv_up };

inline std::string to_string(GeneratorVariant v) {
  switch (v) {
    case GeneratorVariant::ganilla: return "ganilla";
    case GeneratorVariant::ablation1_additive_down: return "ablation1_additive_down";
    case GeneratorVariant::ablation2_deconv_up: return "ablation2_deconv_up";
  }
  throw ConfigError("unknown generator variant");
}

inline GeneratorVariant parse_variant(const std::string& s) {
  if (s == "ganilla") return GeneratorVariant::ganilla;
  if (s == "ablation1_additive_down" || s == "ablation1") return GeneratorVariant::ablation1_additive_down;
  if (s == "ablation2_deconv_up" || s == "ablation2") return GeneratorVariant::ablation2_deconv_up;
  throw ConfigError("unknown generator variant '" + s + "'");
}

inline ops::PadMode parse_padding(const std::string& s) {
  if (s == "reflect") return ops::PadMode::reflect;
  if (s == "zero") return ops::PadMode::zero;
  throw ConfigError("unknown padding policy '" + s + "'");
}

inline std::string to_string(ops::PadMode m) { return m == ops::PadMode::reflect ? "reflect" : "zero"; }

/// Generator configuration. Widths are free; the defaults give about 6M
/// parameters.
struct GeneratorSpec {
  GeneratorVariant variant = GeneratorVariant::ganilla;
  std::size_t stem_width = 64;
  std::array<std::size_t, 4> layer_widths{64, 128, 256, 256};
  std::size_t fpn_width = 128;
  ops::PadMode padding = ops::PadMode::reflect;

  void validate() const {
    if (stem_width == 0) throw ConfigError("generator stem_width must be positive");
    for (std::size_t i = 0; i < 4; ++i)
      if (layer_widths[i] == 0) throw ConfigError("generator layer_widths[" + std::to_string(i) + "] must be positive");
    if (fpn_width == 0) throw ConfigError("generator fpn_width must be positive");
  }

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Total spatial reduction between the input and Layer-IV.
inline constexpr std::size_t kGeneratorStride = 32;

/// Spatial extents after stem conv, max pool (= Layer-I), Layer-II, -III, -IV.
inline std::array<std::size_t, 5> downsampling_trace(std::size_t extent) {
  // 7x7/2 pad 3, 3x3/2 pad 1, then three 3x3/2 pad 1.
  auto down = [](std::size_t n, std::size_t k, std::size_t p) { return (n + 2 * p - k) / 2 + 1; };
  std::array<std::size_t, 5> t{};
  t[0] = down(extent, 7, 3);
  t[1] = down(t[0], 3, 1);
  for (std::size_t i = 2; i < 5; ++i) t[i] = down(t[i - 1], 3, 1);
  return t;
}

/// Spatial sizes recorded during a forward pass.
struct ForwardTrace {
  std::vector<std::size_t> heights;  // stem, pool/Layer-I, Layer-II, Layer-III, Layer-IV
};

/// The GANILLA generator and its two ablations.
///
/// Downsampling: 7x7/2 conv, IN, ReLU, 3x3/2 max pool, then four layers of two
/// residual blocks (stride 2 on the first block of Layers II-IV). GANILLA
/// blocks concatenate the block input to the block output and project back
/// with a 1x1 conv + ReLU; ablation 1 adds them instead (ResNet-18 style).
/// Upsampling: 1x1 lateral convs and nearest x2 upsample + sum from Layer-IV
/// down to Layer-I, a final x4 recovery of the stem/pool strides and a 7x7
/// conv to RGB with tanh. Ablation 2 replaces that stage with a chain of
/// stride-2 transposed convs fed only by Layer-IV.
template <typename T>
class GeneratorNet {
 public:
  GeneratorNet(const GeneratorSpec& spec, Engine& rng, double init_std = 0.02) : spec_(spec) {
    spec_.validate();
    LayerBuilder<T> b(params_, graph_, rng, init_std);
    const auto pad = spec_.padding;
    const bool additive = spec_.variant == GeneratorVariant::ablation1_additive_down;

    stem_ = b.conv("stem.conv", 3, spec_.stem_width, 7, 2, 3, pad, {"input"});
    stem_norm_ = b.norm("stem.norm", spec_.stem_width);
    b.mark("stem.relu", "relu", 0, 1, spec_.stem_width, spec_.stem_width);
    b.mark("stem.pool", "maxpool", 3, 2, spec_.stem_width, spec_.stem_width);

    std::size_t in = spec_.stem_width;
    std::string prev = "stem.pool";
    for (std::size_t l = 0; l < 4; ++l) {
      const std::size_t out = spec_.layer_widths[l];
      for (std::size_t k = 0; k < 2; ++k) {
        const std::string p = "layer" + std::to_string(l + 1) + ".block" + std::to_string(k);
        const std::size_t stride = (l > 0 && k == 0) ? 2 : 1;
        const std::size_t block_in = k == 0 ? in : out;
        Block blk;
        blk.conv1 = b.conv(p + ".conv1", block_in, out, 3, stride, 1, pad, {prev});
        blk.norm1 = b.norm(p + ".norm1", out);
        b.mark(p + ".relu1", "relu", 0, 1, out, out);
        blk.conv2 = b.conv(p + ".conv2", out, out, 3, 1, 1, pad);
        blk.norm2 = b.norm(p + ".norm2", out);
        std::size_t skip_width = block_in;
        if (stride != 1 || block_in != out) {
          blk.shortcut = b.conv(p + ".shortcut", block_in, out, 1, stride, 0, pad, {prev});
          skip_width = out;
        }
        if (additive) {
          b.mark(p + ".add", "sum", 0, 1, out, out, {p + ".norm2", prev});
        } else {
          b.mark(p + ".concat", "concat", 0, 1, out + skip_width, out + skip_width, {p + ".norm2", prev});
          blk.reduce = b.conv(p + ".reduce", out + skip_width, out, 1, 1, 0, pad);
        }
        b.mark(p + ".relu2", "relu", 0, 1, out, out);
        layers_[l][k] = std::move(blk);
        prev = p + ".relu2";
      }
      const std::string lname = "layer" + std::to_string(l + 1);
      b.mark(lname, "output", 0, 1, out, out, {prev});
      prev = lname;
      in = out;
    }

    const std::size_t f = spec_.fpn_width;
    if (spec_.variant == GeneratorVariant::ablation2_deconv_up) {
      std::size_t w = spec_.layer_widths[3];
      std::string src = "layer4";
      for (std::size_t i = 0; i < 5; ++i) {
        const std::string p = "up.deconv" + std::to_string(i + 1);
        deconvs_.push_back(b.deconv(p, w, f, 3, 2, 1, 1, {src}));
        deconv_norms_.push_back(b.norm(p + ".norm", f));
        b.mark(p + ".relu", "relu", 0, 1, f, f);
        src = p + ".relu";
        w = f;
      }
      out_ = b.conv("out.conv", f, 3, 7, 1, 3, pad, {src});
    } else {
      for (std::size_t l = 4; l-- > 0;) {
        const std::string lname = "layer" + std::to_string(l + 1);
        lateral_[l] = b.conv("up.lateral" + std::to_string(l + 1), spec_.layer_widths[l], f, 1, 1, 0, pad, {lname});
        if (l < 3) {
          const std::string u = "up.upsample" + std::to_string(l + 2);
          b.mark(u, "upsample", 0, 2, f, f);
          b.mark("up.sum" + std::to_string(l + 1), "sum", 0, 1, f, f, {u, "up.lateral" + std::to_string(l + 1)});
        }
      }
      b.mark("up.upsample_final", "upsample", 0, 4, f, f, {"up.sum1"});
      out_ = b.conv("out.conv", f, 3, 7, 1, 3, pad, {"up.upsample_final"});
    }
    b.mark("out.tanh", "tanh", 0, 1, 3, 3);
  }

  GeneratorNet(const GeneratorNet&) = delete;
  GeneratorNet& operator=(const GeneratorNet&) = delete;
  GeneratorNet(GeneratorNet&&) noexcept = default;
  GeneratorNet& operator=(GeneratorNet&&) noexcept = default;

  const GeneratorSpec& spec() const noexcept { return spec_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  const std::vector<LayerInfo>& layer_graph() const noexcept { return graph_; }

  /// Differentiable forward pass. Input must be [N,3,H,W], H and W multiples of 32.
  Var<T> forward(const Var<T>& x, ForwardTrace* trace = nullptr) const {
    check_input(x.shape());
    const bool additive = spec_.variant == GeneratorVariant::ablation1_additive_down;
    Var<T> h = ops::relu(apply(stem_norm_, apply(stem_, x)));
    if (trace) trace->heights = {h.shape()[2]};
    h = ops::max_pool2d(h, 3, 2, 1);
    std::array<Var<T>, 4> feats;
    for (std::size_t l = 0; l < 4; ++l) {
      for (const Block& blk : layers_[l]) {
        Var<T> y = ops::relu(apply(blk.norm1, apply(blk.conv1, h)));
        y = apply(blk.norm2, apply(blk.conv2, y));
        const Var<T> skip = blk.shortcut ? apply(*blk.shortcut, h) : h;
        if (additive)
          h = ops::relu(ops::add(y, skip));
        else
          h = ops::relu(apply(*blk.reduce, ops::concat_channels(y, skip)));
      }
      feats[l] = h;
      if (trace) trace->heights.push_back(h.shape()[2]);
    }

    Var<T> u;
    if (spec_.variant == GeneratorVariant::ablation2_deconv_up) {
      u = feats[3];
      for (std::size_t i = 0; i < deconvs_.size(); ++i) u = ops::relu(apply(deconv_norms_[i], apply(deconvs_[i], u)));
    } else {
      u = apply(lateral_[3], feats[3]);
      for (std::size_t l = 3; l-- > 0;) u = ops::add(ops::upsample_nearest(u, 2), apply(lateral_[l], feats[l]));
      u = ops::upsample_nearest(u, 4);
    }
    return ops::tanh(apply(out_, u));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return forward(Var<T>::constant(x)).value(); }

 private:
  struct Block {
    Conv<T> conv1;
    Norm<T> norm1;
    Conv<T> conv2;
    Norm<T> norm2;
    std::optional<Conv<T>> shortcut;
    std::optional<Conv<T>> reduce;
  };

  static void check_input(const Shape& s) {
    if (s.size() != 4 || s[1] != 3) throw ShapeError("generator input must be [N,3,H,W], got " + shape_str(s));
    if (s[0] == 0) throw ShapeError("generator input batch is empty");
    if (s[2] == 0 || s[2] % kGeneratorStride)
      throw ShapeError("generator input height " + std::to_string(s[2]) + " is not a positive multiple of 32");
    if (s[3] == 0 || s[3] % kGeneratorStride)
      throw ShapeError("generator input width " + std::to_string(s[3]) + " is not a positive multiple of 32");
  }

  GeneratorSpec spec_;
  ParamSet<T> params_;
  std::vector<LayerInfo> graph_;
  Conv<T> stem_;
  Norm<T> stem_norm_;
  std::array<std::array<Block, 2>, 4> layers_;
  std::array<Conv<T>, 4> lateral_;
  std::vector<Conv<T>> deconvs_;
  std::vector<Norm<T>> deconv_norms_;
  Conv<T> out_;
};

template <typename T>
GeneratorNet<T> build_generator(const GeneratorSpec& spec, Engine& rng) {
  return GeneratorNet<T>(spec, rng);
}

template <typename T>
Tensor<T> forward_generate(const GeneratorNet<T>& net, const Tensor<T>& x) {
  return net.forward(x);
}

/// Exact number of scalar parameters, norm affine terms included.
template <typename T>
std::size_t count_parameters(const GeneratorNet<T>& net) {
  return net.params().scalar_count();
}

/// Downsampling outputs ("layer1".."layer4") read by upsampling-stage rows.
inline std::set<std::string> upsampling_sources(const std::vector<LayerInfo>& graph) {
  std::set<std::string> out;
  for (const auto& l : graph) {
    if (l.name.rfind("up.", 0) != 0) continue;
    for (const auto& in : l.inputs)
      if (in.rfind("layer", 0) == 0 && in.find('.') == std::string::npos) out.insert(in);
  }
  return out;
}

}  // namespace ganilla

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ganilla/autograd.hpp"
#include "ganilla/nn.hpp"
#include "ganilla/ops.hpp"
#include "ganilla/rng.hpp"

namespace ganilla {

struct ConvLayerSpec {
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t out_width = 64;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Patch discriminator layout. Every conv uses zero padding 1; the first and
/// last layers skip normalization, all but the last use leaky ReLU.
struct DiscriminatorSpec {
  std::size_t base_width = 64;
  std::vector<ConvLayerSpec> conv_layers;
  double leaky_slope = 0.2;

  /// C64s2 - C128s2 - C256s2 - C512s1 - C1s1, all 4x4.
  static DiscriminatorSpec patch70(std::size_t base_width = 64) {
    DiscriminatorSpec s;
    s.base_width = base_width;
    s.conv_layers = {{4, 2, base_width}, {4, 2, base_width * 2}, {4, 2, base_width * 4}, {4, 1, base_width * 8}, {4, 1, 1}};
    return s;
  }

  void validate() const {
    if (base_width == 0) throw ConfigError("discriminator base_width must be positive");
    if (conv_layers.empty()) throw ConfigError("discriminator needs at least one conv layer");
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
      const auto& l = conv_layers[i];
      if (l.kernel == 0 || l.stride == 0 || l.out_width == 0)
        throw ConfigError("discriminator layer " + std::to_string(i) + " has a zero kernel, stride or width");
    }
    if (conv_layers.back().out_width != 1) throw ConfigError("discriminator must end in a 1-channel score map");
  }

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

/// Receptive field of one output unit: rf += (k - 1) * jump; jump *= s.
inline std::size_t compute_receptive_field(std::span<const std::pair<std::size_t, std::size_t>> layers) {
  if (layers.empty()) throw std::invalid_argument("compute_receptive_field: empty layer list");
  std::size_t rf = 1, jump = 1;
  for (const auto& [k, s] : layers) {
    if (k == 0 || s == 0) throw std::invalid_argument("compute_receptive_field: kernel and stride must be >= 1");
    rf += (k - 1) * jump;
    jump *= s;
  }
  return rf;
}

inline std::size_t compute_receptive_field(const DiscriminatorSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> ks;
  for (const auto& l : spec.conv_layers) ks.emplace_back(l.kernel, l.stride);
  return compute_receptive_field(ks);
}

/// Score-map extent for an input extent, or 0 when the stack does not fit.
inline std::size_t score_map_extent(const DiscriminatorSpec& spec, std::size_t extent) {
  for (const auto& l : spec.conv_layers) {
    if (extent + 2 < l.kernel) return 0;
    extent = (extent + 2 - l.kernel) / l.stride + 1;
  }
  return extent;
}

template <typename T>
class DiscriminatorNet {
 public:
  DiscriminatorNet(const DiscriminatorSpec& spec, Engine& rng, double init_std = 0.02) : spec_(spec) {
    spec_.validate();
    LayerBuilder<T> b(params_, graph_, rng, init_std);
    std::size_t in = 3;
    const std::size_t n = spec_.conv_layers.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = spec_.conv_layers[i];
      const std::string p = "disc.conv" + std::to_string(i + 1);
      Stage st;
      st.conv = b.conv(p, in, l.out_width, l.kernel, l.stride, 1, ops::PadMode::zero);
      st.normalized = i > 0 && i + 1 < n;
      if (st.normalized) st.norm = b.norm(p + ".norm", l.out_width);
      st.activated = i + 1 < n;
      if (st.activated) b.mark(p + ".lrelu", "lrelu", 0, 1, l.out_width, l.out_width);
      stages_.push_back(std::move(st));
      in = l.out_width;
    }
  }

  DiscriminatorNet(const DiscriminatorNet&) = delete;
  DiscriminatorNet& operator=(const DiscriminatorNet&) = delete;
  DiscriminatorNet(DiscriminatorNet&&) noexcept = default;
  DiscriminatorNet& operator=(DiscriminatorNet&&) noexcept = default;

  const DiscriminatorSpec& spec() const noexcept { return spec_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  const std::vector<LayerInfo>& layer_graph() const noexcept { return graph_; }

  /// Raw per-patch scores [N,1,h,w].
  Var<T> forward(const Var<T>& x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != 3) throw ShapeError("discriminator input must be [N,3,H,W], got " + shape_str(s));
    if (score_map_extent(spec_, s[2]) == 0 || score_map_extent(spec_, s[3]) == 0)
      throw ShapeError("discriminator input " + shape_str(s) + " is too small for the conv stack");
    Var<T> h = x;
    const T slope = static_cast<T>(spec_.leaky_slope);
    for (const Stage& st : stages_) {
      h = apply(st.conv, h);
      if (st.normalized) h = apply(st.norm, h);
      if (st.activated) h = ops::leaky_relu(h, slope);
    }
    return h;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return forward(Var<T>::constant(x)).value(); }

 private:
  struct Stage {
    Conv<T> conv;
    Norm<T> norm;
    bool normalized = false;
    bool activated = false;
  };

  DiscriminatorSpec spec_;
  ParamSet<T> params_;
  std::vector<LayerInfo> graph_;
  std::vector<Stage> stages_;
};

template <typename T>
DiscriminatorNet<T> build_patch_discriminator(const DiscriminatorSpec& spec, Engine& rng) {
  return DiscriminatorNet<T>(spec, rng);
}

template <typename T>
Tensor<T> forward_discriminate(const DiscriminatorNet<T>& net, const Tensor<T>& x) {
  return net.forward(x);
}

}  // namespace ganilla

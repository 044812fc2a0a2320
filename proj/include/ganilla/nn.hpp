#pragma once

#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ganilla/autograd.hpp"
#include "ganilla/ops.hpp"
#include "ganilla/rng.hpp"

namespace ganilla {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

/// Ordered, named collection of trainable arrays.
template <typename T>
class ParamSet {
 public:
  Var<T> add(std::string name, Tensor<T> init) {
    items_.push_back({std::move(name), Var<T>::parameter(std::move(init))});
    return items_.back().var;
  }

  std::size_t size() const noexcept { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  NamedParam<T>& operator[](std::size_t i) { return items_[i]; }
  const NamedParam<T>& operator[](std::size_t i) const { return items_[i]; }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& p : items_) total += p.var.value().size();
    return total;
  }

  void zero_grad() {
    for (auto& p : items_) p.var.zero_grad();
  }

 private:
  std::vector<NamedParam<T>> items_;
};

/// One row of a network's layer graph.
struct LayerInfo {
  std::string name;
  std::string kind;  // conv, deconv, norm, pool, upsample, sum, concat, ...
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  std::size_t params = 0;
  std::vector<std::string> inputs;  // names of layers feeding this one
};

/// Human-readable dump: one line per layer.
inline std::string dump_layer_graph(const std::vector<LayerInfo>& graph) {
  std::ostringstream os;
  std::size_t total = 0;
  for (const auto& l : graph) {
    os << std::left << std::setw(28) << l.name << ' ' << std::setw(8) << l.kind;
    if (l.kernel) {
      os << " k=" << l.kernel << " s=" << l.stride;
    } else {
      os << "         ";
    }
    os << ' ' << std::right << std::setw(5) << l.in_width << "->" << std::left << std::setw(5) << l.out_width
       << " params=" << l.params;
    if (!l.inputs.empty()) {
      os << " from=";
      for (std::size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "," : "") << l.inputs[i];
    }
    os << '\n';
    total += l.params;
  }
  os << "total params=" << total << '\n';
  return os.str();
}

template <typename T>
struct Conv {
  Var<T> weight;
  Var<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
  ops::PadMode pad_mode = ops::PadMode::zero;
  bool transposed = false;
  std::size_t output_pad = 0;
};

template <typename T>
struct Norm {
  Var<T> gamma;
  Var<T> beta;
};

template <typename T>
Var<T> apply(const Conv<T>& c, const Var<T>& x) {
  if (c.transposed) return ops::conv_transpose2d(x, c.weight, c.bias, c.stride, c.pad, c.output_pad);
  if (c.pad && c.pad_mode == ops::PadMode::reflect)
    return ops::conv2d(ops::pad2d(x, c.pad, ops::PadMode::reflect), c.weight, c.bias, c.stride, 0);
  return ops::conv2d(x, c.weight, c.bias, c.stride, c.pad);
}

template <typename T>
Var<T> apply(const Norm<T>& n, const Var<T>& x) {
  return ops::instance_norm(x, n.gamma, n.beta);
}

/// Registers parameters and layer-graph rows while a network is assembled.
/// Weights draw from N(0, init_std); biases start at 0, norm scales at 1.
template <typename T>
class LayerBuilder {
 public:
  LayerBuilder(ParamSet<T>& params, std::vector<LayerInfo>& graph, Engine& rng, double init_std = 0.02)
      : params_(params), graph_(graph), rng_(rng), init_std_(init_std) {}

  Conv<T> conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
               std::size_t pad, ops::PadMode mode, std::vector<std::string> inputs = {}) {
    Conv<T> c;
    c.weight = params_.add(name + ".weight", random_normal({out, in, kernel, kernel}));
    c.bias = params_.add(name + ".bias", Tensor<T>({out}));
    c.stride = stride;
    c.pad = pad;
    c.pad_mode = mode;
    graph_.push_back({name, "conv", kernel, stride, in, out, out * in * kernel * kernel + out, std::move(inputs)});
    return c;
  }

  Conv<T> deconv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                 std::size_t pad, std::size_t output_pad, std::vector<std::string> inputs = {}) {
    Conv<T> c;
    c.weight = params_.add(name + ".weight", random_normal({in, out, kernel, kernel}));
    c.bias = params_.add(name + ".bias", Tensor<T>({out}));
    c.stride = stride;
    c.pad = pad;
    c.transposed = true;
    c.output_pad = output_pad;
    graph_.push_back({name, "deconv", kernel, stride, in, out, out * in * kernel * kernel + out, std::move(inputs)});
    return c;
  }

  Norm<T> norm(const std::string& name, std::size_t channels) {
    Norm<T> n{params_.add(name + ".gamma", Tensor<T>({channels}, T{1})),
              params_.add(name + ".beta", Tensor<T>({channels}))};
    graph_.push_back({name, "inorm", 0, 1, channels, channels, 2 * channels, {}});
    return n;
  }

  /// Parameter-free graph row (activation, pooling, upsampling, joins).
  void mark(const std::string& name, const std::string& kind, std::size_t kernel, std::size_t stride, std::size_t in,
            std::size_t out, std::vector<std::string> inputs = {}) {
    graph_.push_back({name, kind, kernel, stride, in, out, 0, std::move(inputs)});
  }

 private:
  Tensor<T> random_normal(Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(init_std_ * standard_normal(rng_));
    return t;
  }

  ParamSet<T>& params_;
  std::vector<LayerInfo>& graph_;
  Engine& rng_;
  double init_std_;
};

}  // namespace ganilla

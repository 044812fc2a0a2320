#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ganilla/nn.hpp"

namespace ganilla {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed list of parameters.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var<T>> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(lr / c1), inv_c2 = static_cast<T>(1.0 / c2), eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].mutable_value();
      const auto& g = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T{1} - b1) * g[j];
        v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
        w[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }
  void set_steps(std::size_t t) noexcept { t_ = t; }
  std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Var<T>> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::size_t t_ = 0;
};

template <typename T>
std::vector<Var<T>> collect_params(std::initializer_list<const ParamSet<T>*> sets) {
  std::vector<Var<T>> out;
  for (const auto* s : sets)
    for (const auto& p : *s) out.push_back(p.var);
  return out;
}

}  // namespace ganilla

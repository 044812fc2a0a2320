#pragma once

#include <array>
#include <string>
#include <vector>

#include "ganilla/autograd.hpp"
#include "ganilla/ops.hpp"
#include "ganilla/tensor.hpp"

namespace ganilla {

enum class GanLoss { least_squares, cross_entropy };

inline std::string to_string(GanLoss g) { return g == GanLoss::least_squares ? "least_squares" : "cross_entropy"; }

inline GanLoss parse_gan_loss(const std::string& s) {
  if (s == "least_squares" || s == "lsgan") return GanLoss::least_squares;
  if (s == "cross_entropy" || s == "vanilla") return GanLoss::cross_entropy;
  throw ConfigError("unknown gan_loss '" + s + "'");
}

/// Least squares: mean((s - t)^2). Cross entropy: mean BCE of logits s vs t.
/// t is 1 for "real", 0 for "fake".
template <typename T>
Var<T> adversarial_loss(const Var<T>& scores, bool target_is_real, GanLoss kind = GanLoss::least_squares) {
  const T target = target_is_real ? T{1} : T{0};
  return kind == GanLoss::least_squares ? ops::mean_sq_to(scores, target) : ops::bce_with_logits_to(scores, target);
}

template <typename T>
T adversarial_loss(const Tensor<T>& scores, bool target_is_real, GanLoss kind = GanLoss::least_squares) {
  return adversarial_loss(Var<T>::constant(scores), target_is_real, kind).item();
}

/// Mean absolute difference between an image batch and its reconstruction.
template <typename T>
Var<T> cycle_loss(const Var<T>& x, const Var<T>& x_reconstructed) {
  return ops::mean_abs_diff(x, x_reconstructed);
}

template <typename T>
T cycle_loss(const Tensor<T>& x, const Tensor<T>& x_reconstructed) {
  return cycle_loss(Var<T>::constant(x), Var<T>::constant(x_reconstructed)).item();
}

/// L1 penalty for changing an image already in the generator's output domain.
template <typename T>
Var<T> identity_loss(const Var<T>& y, const Var<T>& g_of_y) {
  return ops::mean_abs_diff(y, g_of_y);
}

template <typename T>
T identity_loss(const Tensor<T>& y, const Tensor<T>& g_of_y) {
  return identity_loss(Var<T>::constant(y), Var<T>::constant(g_of_y)).item();
}

/// The six terms of the joint generator objective.
template <typename S>
struct GeneratorLossParts {
  S adv_g;
  S adv_f;
  S cycle_src;
  S cycle_tgt;
  S idt_src;
  S idt_tgt;
};

/// adv_g + adv_f + lambda_cycle * (cycle_src + cycle_tgt) + lambda_identity * (idt_src + idt_tgt)
inline double total_generator_objective(const GeneratorLossParts<double>& p, double lambda_cycle,
                                        double lambda_identity) {
  return p.adv_g + p.adv_f + lambda_cycle * (p.cycle_src + p.cycle_tgt) + lambda_identity * (p.idt_src + p.idt_tgt);
}

/// Differentiable form. Undefined identity terms are skipped (lambda_identity = 0).
template <typename T>
Var<T> total_generator_objective(const GeneratorLossParts<Var<T>>& p, double lambda_cycle, double lambda_identity) {
  std::vector<Var<T>> terms{p.adv_g, p.adv_f, ops::scale(p.cycle_src, static_cast<T>(lambda_cycle)),
                            ops::scale(p.cycle_tgt, static_cast<T>(lambda_cycle))};
  if (p.idt_src.defined()) terms.push_back(ops::scale(p.idt_src, static_cast<T>(lambda_identity)));
  if (p.idt_tgt.defined()) terms.push_back(ops::scale(p.idt_tgt, static_cast<T>(lambda_identity)));
  return ops::add_scalars<T>(terms);
}

}  // namespace ganilla

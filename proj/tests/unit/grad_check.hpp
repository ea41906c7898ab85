#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uscore/layers.hpp"

namespace test_support {

// Gradients below kGradFloor * max(1, |loss|) are compared on an absolute scale;
// central-difference rounding noise grows with the loss magnitude.
inline constexpr double kGradFloor = 1e-6;
inline constexpr double kFdStep = 1e-5;

inline double relative_error(double analytic, double numeric, double loss_scale = 1.0) {
  const double floor = kGradFloor * std::max(1.0, std::abs(loss_scale));
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
  double max_abs_invariant = 0.0;  // parameters the loss does not depend on

  double loss_scale = 1.0;

  void record(double analytic, double numeric, const std::string& where) {
    const double e = relative_error(analytic, numeric, loss_scale);
    ++checked;
    if (e > max_rel_error) {
      max_rel_error = e;
      worst = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
  }
};

/// Biases feeding straight into a batchnorm in train mode cancel out of the loss.
inline std::vector<bool> bias_before_batchnorm(const std::vector<uscore::nn::LayerSpec>& stack) {
  std::vector<bool> out(stack.size(), false);
  for (std::size_t l = 0; l + 1 < stack.size(); ++l)
    out[l] = stack[l + 1].kind == uscore::nn::LayerKind::batchnorm;
  return out;
}

/// Central differences of `loss` against every trainable entry of `params`.
inline void check_params(uscore::nn::ParamStore& params, const uscore::nn::ParamStore& grads,
                         const std::function<double()>& loss, GradCheck& out, const std::string& tag,
                         const std::vector<bool>& invariant_bias = {}) {
  out.loss_scale = loss();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    auto& g = grads.layers[l];
    for (auto [tensor, grad, name] : {std::tuple{&p.weight, &g.weight, "weight"}, std::tuple{&p.bias, &g.bias, "bias"}}) {
      const bool invariant = tensor == &p.bias && l < invariant_bias.size() && invariant_bias[l];
      for (std::size_t i = 0; i < tensor->size(); ++i) {
        const double saved = (*tensor)[i];
        (*tensor)[i] = saved + kFdStep;
        const double up = loss();
        (*tensor)[i] = saved - kFdStep;
        const double down = loss();
        (*tensor)[i] = saved;
        if (invariant) {
          out.max_abs_invariant = std::max({out.max_abs_invariant, std::abs((*grad)[i]), std::abs(up - down) / (2.0 * kFdStep)});
          continue;
        }
        out.record((*grad)[i], (up - down) / (2.0 * kFdStep),
                   tag + " layer " + std::to_string(l) + " " + name + "[" + std::to_string(i) + "]");
      }
    }
  }
}

}  // namespace test_support

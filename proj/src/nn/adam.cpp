#include "uscore/adam.hpp"

#include <cmath>
#include <string>

#include "uscore/errors.hpp"

namespace uscore::nn {

AdamState AdamState::for_params(const ParamStore& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment = zeros_like_trainable(params);
  state.second_moment = zeros_like_trainable(params);
  return state;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, const AdamConfig& config) {
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + config.weight_decay * param[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    param[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size())
    throw ShapeError("adam_step: gradient/state layer count does not match parameters");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& g = grads.layers[i];
    auto& p = params.layers[i];
    if (g.weight.size() != p.weight.size() || g.bias.size() != p.bias.size())
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(i));
    if (!g.weight.all_finite() || !g.bias.all_finite())
      throw NumericalError("adam_step: non-finite gradient at layer " + std::to_string(i));
  }
  ++state.step;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    auto& m = state.first_moment.layers[i];
    auto& v = state.second_moment.layers[i];
    adam_update(p.weight.data(), g.weight.data(), m.weight.data(), v.weight.data(), state.step, state.config);
    adam_update(p.bias.data(), g.bias.data(), m.bias.data(), v.bias.data(), state.step, state.config);
  }
  ++params.generation;
}

}  // namespace uscore::nn

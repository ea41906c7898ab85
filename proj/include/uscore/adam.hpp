#pragma once

#include <cstdint>
#include <span>

#include "uscore/layers.hpp"

namespace uscore::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;  // classic L2: added to the gradient before the moment updates
};

struct AdamState {
  AdamConfig config;
  ParamStore first_moment;
  ParamStore second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamStore& params, const AdamConfig& config = {});
};

/// One bias-corrected Adam update on a flat parameter block. `step` is the
/// already-incremented step counter (t >= 1).
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, const AdamConfig& config);

/// Applies one Adam step to every trainable tensor in `params` and bumps its
/// generation. Throws NumericalError on a non-finite gradient.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

}  // namespace uscore::nn

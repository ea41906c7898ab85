#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uscore/rng.hpp"
#include "uscore/tensor.hpp"

namespace uscore::nn {

enum class LayerKind : std::uint8_t { dense = 1, conv2d = 2, batchnorm = 3, relu = 4 };
enum class Mode { train, eval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Geometry of a 2-D convolution over [channels, height, width] features.
/// A transposed convolution maps the `in_*` grid up to the `out_*` grid and
/// is the exact adjoint of the forward convolution with swapped geometry.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;
  bool transposed = false;

  std::size_t out_height() const;
  std::size_t out_width() const;
  std::size_t in_features() const { return in_channels * in_height * in_width; }
  std::size_t out_features() const { return out_channels * out_height() * out_width(); }
  void validate() const;
  bool operator==(const ConvGeometry&) const = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  ConvGeometry conv{};
  std::size_t channels = 0;  // batchnorm: statistics are shared across in_features / channels positions

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(const ConvGeometry& geometry);
  static LayerSpec batchnorm(std::size_t channels, std::size_t spatial = 1);
  static LayerSpec relu(std::size_t features);

  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

/// Parameters of one layer. For batchnorm, `weight` is the scale and `bias`
/// the shift. Convolution weights are stored as [out_channels, in_channels*k*k]
/// (transposed: [in_channels, out_channels*k*k]).
struct LayerParams {
  Tensor weight;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;

  bool operator==(const LayerParams&) const = default;
};

struct ParamStore {
  std::vector<LayerParams> layers;
  /// Bumped on every mutation of trainable values; caches record it.
  std::uint64_t generation = 0;
};

/// Activation record of one forward pass.
struct ForwardCache {
  Mode mode = Mode::eval;
  std::uint64_t generation = 0;
  std::size_t batch = 0;
  std::vector<Tensor> inputs;       // input to each layer
  std::vector<Tensor> normalized;   // batchnorm x-hat (empty for other kinds)
  std::vector<Tensor> inv_std;      // batchnorm 1/sqrt(var+eps) per channel
  std::vector<Tensor> batch_mean;   // batchnorm batch statistics (train mode)
  std::vector<Tensor> batch_var;
};

struct ForwardResult {
  Tensor output;
  ForwardCache cache;
};

struct BackwardResult {
  Tensor grad_input;
  ParamStore grads;  // weight/bias gradients; running statistics left empty
};

/// Glorot-uniform weights, zero biases, unit batchnorm scale.
ParamStore init_params(std::span<const LayerSpec> stack, Rng& rng);

/// Checks that consecutive layers agree on feature counts and that `params`
/// matches the stack.
void validate_stack(std::span<const LayerSpec> stack, const ParamStore& params);

/// Runs `input` ([batch, features]) through the stack. Pure: in train mode
/// batchnorm uses batch statistics, which are recorded in the cache and
/// committed to the running statistics by `commit_batch_statistics`.
ForwardResult forward(std::span<const LayerSpec> stack, const ParamStore& params, const Tensor& input, Mode mode);

/// Exact reverse-mode derivative of the forward pass recorded in `cache`.
BackwardResult backward(std::span<const LayerSpec> stack, const ParamStore& params, const ForwardCache& cache,
                        const Tensor& grad_output);

/// Exponential-moving-average update of batchnorm running statistics.
void commit_batch_statistics(std::span<const LayerSpec> stack, ParamStore& params, const ForwardCache& cache);

/// Zero-valued gradient store shaped like the trainable parameters.
ParamStore zeros_like_trainable(const ParamStore& params);

/// A layer stack bundled with its parameters.
struct Network {
  std::vector<LayerSpec> layers;
  ParamStore params;

  std::size_t input_features() const { return layers.front().in_features; }
  std::size_t output_features() const { return layers.back().out_features; }

  Tensor infer(const Tensor& input) const { return forward(layers, params, input, Mode::eval).output; }
  ForwardResult forward_train(const Tensor& input);
  BackwardResult backprop(const ForwardCache& cache, const Tensor& grad_output) const {
    return backward(layers, params, cache, grad_output);
  }
};

}  // namespace uscore::nn

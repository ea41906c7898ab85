#include "uscore/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

#include "uscore/errors.hpp"

namespace uscore::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Unfolds one image [channels, height, width] into columns
// [channels*k*k, grid_h*grid_w] where column (gy, gx) holds the receptive field
// anchored at (gy*stride - pad, gx*stride - pad).
void im2col(const double* image, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
            std::size_t stride, std::size_t pad, std::size_t grid_h, std::size_t grid_w, double* cols) {
  const std::size_t grid = grid_h * grid_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        double* dst = cols + ((c * kernel + ki) * kernel + kj) * grid;
        for (std::size_t gy = 0; gy < grid_h; ++gy) {
          const auto y = static_cast<std::ptrdiff_t>(gy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t gx = 0; gx < grid_w; ++gx) {
            const auto x = static_cast<std::ptrdiff_t>(gx * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(height) &&
                                x < static_cast<std::ptrdiff_t>(width);
            dst[gy * grid_w + gx] = inside ? image[(c * height + static_cast<std::size_t>(y)) * width +
                                                   static_cast<std::size_t>(x)]
                                           : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into `image`.
void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
            std::size_t stride, std::size_t pad, std::size_t grid_h, std::size_t grid_w, double* image) {
  const std::size_t grid = grid_h * grid_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        const double* src = cols + ((c * kernel + ki) * kernel + kj) * grid;
        for (std::size_t gy = 0; gy < grid_h; ++gy) {
          const auto y = static_cast<std::ptrdiff_t>(gy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t gx = 0; gx < grid_w; ++gx) {
            const auto x = static_cast<std::ptrdiff_t>(gx * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
            image[(c * height + static_cast<std::size_t>(y)) * width + static_cast<std::size_t>(x)] +=
                src[gy * grid_w + gx];
          }
        }
      }
    }
  }
}

void check_finite(const Tensor& t, std::size_t layer) {
  if (!t.all_finite()) throw NumericalError("non-finite activation at output of layer " + std::to_string(layer));
}

std::size_t spatial_of(const LayerSpec& spec) { return spec.in_features / spec.channels; }

// ---- dense -----------------------------------------------------------------

Tensor dense_forward(const LayerSpec& spec, const LayerParams& p, const Tensor& x, std::size_t batch) {
  Tensor y({batch, spec.out_features});
  auto out = as_matrix(y, batch, spec.out_features);
  out.noalias() = as_matrix(x, batch, spec.in_features) * as_matrix(p.weight, spec.out_features, spec.in_features).transpose();
  out.rowwise() += ConstVecMap(p.bias.data().data(), static_cast<Eigen::Index>(spec.out_features)).transpose();
  return y;
}

void dense_backward(const LayerSpec& spec, const LayerParams& p, const Tensor& x, const Tensor& gy, std::size_t batch,
                    Tensor& gx, LayerParams& g) {
  const auto G = as_matrix(gy, batch, spec.out_features);
  as_matrix(g.weight, spec.out_features, spec.in_features).noalias() = G.transpose() * as_matrix(x, batch, spec.in_features);
  VecMap(g.bias.data().data(), static_cast<Eigen::Index>(spec.out_features)) = G.colwise().sum().transpose();
  gx = Tensor({batch, spec.in_features});
  as_matrix(gx, batch, spec.in_features).noalias() = G * as_matrix(p.weight, spec.out_features, spec.in_features);
}

// ---- conv2d ----------------------------------------------------------------

Tensor conv_forward(const ConvGeometry& g, const LayerParams& p, const Tensor& x, std::size_t batch) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kk = g.kernel * g.kernel;
  Tensor y({batch, g.out_features()});
  if (!g.transposed) {
    const std::size_t grid = oh * ow;
    RowMat cols(static_cast<Eigen::Index>(g.in_channels * kk), static_cast<Eigen::Index>(grid));
    const auto W = as_matrix(p.weight, g.out_channels, g.in_channels * kk);
    for (std::size_t b = 0; b < batch; ++b) {
      im2col(x.data().data() + b * g.in_features(), g.in_channels, g.in_height, g.in_width, g.kernel, g.stride,
             g.padding, oh, ow, cols.data());
      MatMap out(y.data().data() + b * g.out_features(), static_cast<Eigen::Index>(g.out_channels),
                 static_cast<Eigen::Index>(grid));
      out.noalias() = W * cols;
      out.colwise() += ConstVecMap(p.bias.data().data(), static_cast<Eigen::Index>(g.out_channels));
    }
  } else {
    const std::size_t grid = g.in_height * g.in_width;
    RowMat cols(static_cast<Eigen::Index>(g.out_channels * kk), static_cast<Eigen::Index>(grid));
    const auto W = as_matrix(p.weight, g.in_channels, g.out_channels * kk);
    for (std::size_t b = 0; b < batch; ++b) {
      ConstMatMap in(x.data().data() + b * g.in_features(), static_cast<Eigen::Index>(g.in_channels),
                     static_cast<Eigen::Index>(grid));
      cols.noalias() = W.transpose() * in;
      double* out = y.data().data() + b * g.out_features();
      col2im(cols.data(), g.out_channels, oh, ow, g.kernel, g.stride, g.padding, g.in_height, g.in_width, out);
      MatMap(out, static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(oh * ow)).colwise() +=
          ConstVecMap(p.bias.data().data(), static_cast<Eigen::Index>(g.out_channels));
    }
  }
  return y;
}

void conv_backward(const ConvGeometry& g, const LayerParams& p, const Tensor& x, const Tensor& gy, std::size_t batch,
                   Tensor& gx, LayerParams& grads) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kk = g.kernel * g.kernel;
  gx = Tensor({batch, g.in_features()});
  auto dB = VecMap(grads.bias.data().data(), static_cast<Eigen::Index>(g.out_channels));
  if (!g.transposed) {
    const std::size_t grid = oh * ow;
    RowMat cols(static_cast<Eigen::Index>(g.in_channels * kk), static_cast<Eigen::Index>(grid));
    RowMat dcols(cols.rows(), cols.cols());
    const auto W = as_matrix(p.weight, g.out_channels, g.in_channels * kk);
    auto dW = as_matrix(grads.weight, g.out_channels, g.in_channels * kk);
    for (std::size_t b = 0; b < batch; ++b) {
      im2col(x.data().data() + b * g.in_features(), g.in_channels, g.in_height, g.in_width, g.kernel, g.stride,
             g.padding, oh, ow, cols.data());
      ConstMatMap G(gy.data().data() + b * g.out_features(), static_cast<Eigen::Index>(g.out_channels),
                    static_cast<Eigen::Index>(grid));
      dW.noalias() += G * cols.transpose();
      dB += G.rowwise().sum();
      dcols.noalias() = W.transpose() * G;
      col2im(dcols.data(), g.in_channels, g.in_height, g.in_width, g.kernel, g.stride, g.padding, oh, ow,
             gx.data().data() + b * g.in_features());
    }
  } else {
    const std::size_t grid = g.in_height * g.in_width;
    RowMat gcols(static_cast<Eigen::Index>(g.out_channels * kk), static_cast<Eigen::Index>(grid));
    const auto W = as_matrix(p.weight, g.in_channels, g.out_channels * kk);
    auto dW = as_matrix(grads.weight, g.in_channels, g.out_channels * kk);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gout = gy.data().data() + b * g.out_features();
      im2col(gout, g.out_channels, oh, ow, g.kernel, g.stride, g.padding, g.in_height, g.in_width, gcols.data());
      ConstMatMap in(x.data().data() + b * g.in_features(), static_cast<Eigen::Index>(g.in_channels),
                     static_cast<Eigen::Index>(grid));
      dW.noalias() += in * gcols.transpose();
      dB += ConstMatMap(gout, static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(oh * ow))
                .rowwise()
                .sum();
      MatMap(gx.data().data() + b * g.in_features(), static_cast<Eigen::Index>(g.in_channels),
             static_cast<Eigen::Index>(grid))
          .noalias() = W * gcols;
    }
  }
}

// ---- batchnorm ---------------------------------------------------------------

// Feature index f of a [batch, channels*spatial] row belongs to channel f / spatial.
Tensor batchnorm_forward(const LayerSpec& spec, const LayerParams& p, const Tensor& x, std::size_t batch, Mode mode,
                         ForwardCache& cache, std::size_t layer) {
  const std::size_t channels = spec.channels, spatial = spatial_of(spec);
  Tensor y({batch, spec.in_features});
  Tensor xhat({batch, spec.in_features});
  Tensor inv_std({channels});
  Tensor mean({channels}), var({channels});
  const double count = static_cast<double>(batch * spatial);
  for (std::size_t c = 0; c < channels; ++c) {
    double mu, sigma2;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) sum += x(b, c * spatial + s);
      mu = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) {
          const double d = x(b, c * spatial + s) - mu;
          sq += d * d;
        }
      sigma2 = sq / count;
    } else {
      mu = p.running_mean[c];
      sigma2 = p.running_var[c];
    }
    mean[c] = mu;
    var[c] = sigma2;
    const double is = 1.0 / std::sqrt(sigma2 + kBatchNormEpsilon);
    inv_std[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t f = c * spatial + s;
        const double h = (x(b, f) - mu) * is;
        xhat(b, f) = h;
        y(b, f) = p.weight[c] * h + p.bias[c];
      }
    }
  }
  cache.normalized[layer] = std::move(xhat);
  cache.inv_std[layer] = std::move(inv_std);
  cache.batch_mean[layer] = std::move(mean);
  cache.batch_var[layer] = std::move(var);
  return y;
}

void batchnorm_backward(const LayerSpec& spec, const LayerParams& p, const ForwardCache& cache, std::size_t layer,
                        const Tensor& gy, std::size_t batch, Tensor& gx, LayerParams& g) {
  const std::size_t channels = spec.channels, spatial = spatial_of(spec);
  const Tensor& xhat = cache.normalized[layer];
  const Tensor& inv_std = cache.inv_std[layer];
  gx = Tensor({batch, spec.in_features});
  const double count = static_cast<double>(batch * spatial);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gh = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t f = c * spatial + s;
        sum_g += gy(b, f);
        sum_gh += gy(b, f) * xhat(b, f);
      }
    g.weight[c] = sum_gh;
    g.bias[c] = sum_g;
    const double gamma = p.weight[c];
    if (cache.mode == Mode::eval) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) gx(b, c * spatial + s) = gy(b, c * spatial + s) * gamma * inv_std[c];
      continue;
    }
    // d/dx of gamma * (x - mean) / sqrt(var + eps) with batch statistics.
    const double scale = gamma * inv_std[c] / count;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t f = c * spatial + s;
        gx(b, f) = scale * (count * gy(b, f) - sum_g - xhat(b, f) * sum_gh);
      }
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i)
    if (!(x[i] > 0.0)) gx[i] = 0.0;
}

std::size_t batch_of(const Tensor& input, std::size_t features) {
  if (input.rank() != 2 || input.dim(1) != features) {
    throw ShapeError("input shape " + shape_string(input.shape()) + " does not match layer input of " +
                     std::to_string(features) + " features");
  }
  return input.dim(0);
}

}  // namespace

// ---- geometry / specs --------------------------------------------------------

std::size_t ConvGeometry::out_height() const {
  if (transposed) return (in_height - 1) * stride + kernel - 2 * padding;
  return (in_height + 2 * padding - kernel) / stride + 1;
}

std::size_t ConvGeometry::out_width() const {
  if (transposed) return (in_width - 1) * stride + kernel - 2 * padding;
  return (in_width + 2 * padding - kernel) / stride + 1;
}

void ConvGeometry::validate() const {
  if (in_channels == 0 || out_channels == 0 || in_height == 0 || in_width == 0 || kernel == 0 || stride == 0) {
    throw ConfigError("conv2d geometry has a zero dimension");
  }
  if (!transposed) {
    if (in_height + 2 * padding < kernel || in_width + 2 * padding < kernel)
      throw ConfigError("conv2d kernel larger than padded input");
    if ((in_height + 2 * padding - kernel) % stride != 0 || (in_width + 2 * padding - kernel) % stride != 0)
      throw ConfigError("conv2d kernel/stride/padding do not yield an integer output size");
  } else if ((in_height - 1) * stride + kernel < 2 * padding + 1) {
    throw ConfigError("transposed conv2d output would be empty");
  }
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  s.validate();
  return s;
}

LayerSpec LayerSpec::conv2d(const ConvGeometry& geometry) {
  geometry.validate();
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.conv = geometry;
  s.in_features = geometry.in_features();
  s.out_features = geometry.out_features();
  return s;
}

LayerSpec LayerSpec::batchnorm(std::size_t channels, std::size_t spatial) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.channels = channels;
  s.in_features = s.out_features = channels * spatial;
  s.validate();
  return s;
}

LayerSpec LayerSpec::relu(std::size_t features) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.in_features = s.out_features = features;
  s.validate();
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::dense:
      if (in_features == 0 || out_features == 0) throw ConfigError("dense layer dimensions must be positive");
      break;
    case LayerKind::conv2d:
      conv.validate();
      if (in_features != conv.in_features() || out_features != conv.out_features())
        throw ConfigError("conv2d feature counts disagree with geometry");
      break;
    case LayerKind::batchnorm:
      if (channels == 0 || in_features == 0 || in_features % channels != 0 || out_features != in_features)
        throw ConfigError("batchnorm features must be a positive multiple of channels");
      break;
    case LayerKind::relu:
      if (in_features == 0 || out_features != in_features) throw ConfigError("relu width must be positive");
      break;
    default:
      throw ConfigError("unknown layer kind");
  }
}

// ---- parameters --------------------------------------------------------------

ParamStore init_params(std::span<const LayerSpec> stack, Rng& rng) {
  ParamStore store;
  store.layers.reserve(stack.size());
  for (const auto& spec : stack) {
    spec.validate();
    LayerParams p;
    std::size_t fan_in = 0, fan_out = 0;
    switch (spec.kind) {
      case LayerKind::dense:
        p.weight = Tensor({spec.out_features, spec.in_features});
        p.bias = Tensor({spec.out_features});
        fan_in = spec.in_features;
        fan_out = spec.out_features;
        break;
      case LayerKind::conv2d: {
        const auto& g = spec.conv;
        const std::size_t kk = g.kernel * g.kernel;
        p.weight = g.transposed ? Tensor({g.in_channels, g.out_channels * kk}) : Tensor({g.out_channels, g.in_channels * kk});
        p.bias = Tensor({g.out_channels});
        fan_in = g.in_channels * kk;
        fan_out = g.out_channels * kk;
        break;
      }
      case LayerKind::batchnorm:
        p.weight = Tensor({spec.channels}, 1.0);
        p.bias = Tensor({spec.channels});
        p.running_mean = Tensor({spec.channels});
        p.running_var = Tensor({spec.channels}, 1.0);
        break;
      case LayerKind::relu:
        break;
    }
    if (fan_in + fan_out > 0) {
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-a, a);
      for (double& w : p.weight.values()) w = dist(rng);
    }
    store.layers.push_back(std::move(p));
  }
  return store;
}

ParamStore zeros_like_trainable(const ParamStore& params) {
  ParamStore out;
  out.layers.reserve(params.layers.size());
  for (const auto& p : params.layers) {
    LayerParams g;
    g.weight = Tensor::zeros_like(p.weight);
    g.bias = Tensor::zeros_like(p.bias);
    out.layers.push_back(std::move(g));
  }
  return out;
}

void validate_stack(std::span<const LayerSpec> stack, const ParamStore& params) {
  if (stack.empty()) throw ConfigError("empty layer stack");
  if (params.layers.size() != stack.size())
    throw ShapeError("parameter store has " + std::to_string(params.layers.size()) + " layers, stack has " +
                     std::to_string(stack.size()));
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& spec = stack[i];
    spec.validate();
    if (i > 0 && stack[i - 1].out_features != spec.in_features)
      throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(spec.in_features) +
                       " features but previous layer emits " + std::to_string(stack[i - 1].out_features));
    const auto& p = params.layers[i];
    std::size_t wsize = 0, bsize = 0;
    switch (spec.kind) {
      case LayerKind::dense:
        wsize = spec.in_features * spec.out_features;
        bsize = spec.out_features;
        break;
      case LayerKind::conv2d:
        wsize = spec.conv.in_channels * spec.conv.out_channels * spec.conv.kernel * spec.conv.kernel;
        bsize = spec.conv.out_channels;
        break;
      case LayerKind::batchnorm:
        wsize = bsize = spec.channels;
        if (p.running_mean.size() != spec.channels || p.running_var.size() != spec.channels)
          throw ShapeError("batchnorm running statistics mismatch at layer " + std::to_string(i));
        for (double v : p.running_var.values())
          if (!(v >= 0.0)) throw NumericalError("negative running variance at layer " + std::to_string(i));
        break;
      case LayerKind::relu:
        break;
    }
    if (p.weight.size() != wsize || p.bias.size() != bsize)
      throw ShapeError("parameter shapes do not match layer " + std::to_string(i));
  }
}

// ---- passes ------------------------------------------------------------------

ForwardResult forward(std::span<const LayerSpec> stack, const ParamStore& params, const Tensor& input, Mode mode) {
  if (stack.empty()) throw ConfigError("empty layer stack");
  if (params.layers.size() != stack.size()) throw ShapeError("parameter store does not match layer stack");
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = mode;
  cache.generation = params.generation;
  cache.batch = batch_of(input, stack.front().in_features);
  cache.inputs.resize(stack.size());
  cache.normalized.resize(stack.size());
  cache.inv_std.resize(stack.size());
  cache.batch_mean.resize(stack.size());
  cache.batch_var.resize(stack.size());

  Tensor current = input;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& spec = stack[i];
    const auto& p = params.layers[i];
    batch_of(current, spec.in_features);
    Tensor next;
    switch (spec.kind) {
      case LayerKind::dense:
        next = dense_forward(spec, p, current, cache.batch);
        break;
      case LayerKind::conv2d:
        next = conv_forward(spec.conv, p, current, cache.batch);
        break;
      case LayerKind::batchnorm:
        next = batchnorm_forward(spec, p, current, cache.batch, mode, cache, i);
        break;
      case LayerKind::relu:
        next = relu_forward(current);
        break;
    }
    check_finite(next, i);
    cache.inputs[i] = std::move(current);
    current = std::move(next);
  }
  result.output = std::move(current);
  return result;
}

BackwardResult backward(std::span<const LayerSpec> stack, const ParamStore& params, const ForwardCache& cache,
                        const Tensor& grad_output) {
  if (cache.generation != params.generation)
    throw std::logic_error("forward cache is stale: parameters changed since the forward pass");
  if (cache.inputs.size() != stack.size()) throw std::logic_error("forward cache does not match layer stack");
  batch_of(grad_output, stack.back().out_features);
  if (grad_output.dim(0) != cache.batch) throw ShapeError("gradient batch size does not match forward batch");
  if (!grad_output.all_finite()) throw NumericalError("non-finite output gradient");

  BackwardResult result;
  result.grads = zeros_like_trainable(params);
  Tensor grad = grad_output;
  for (std::size_t i = stack.size(); i-- > 0;) {
    const auto& spec = stack[i];
    const auto& x = cache.inputs[i];
    Tensor gx;
    switch (spec.kind) {
      case LayerKind::dense:
        dense_backward(spec, params.layers[i], x, grad, cache.batch, gx, result.grads.layers[i]);
        break;
      case LayerKind::conv2d:
        conv_backward(spec.conv, params.layers[i], x, grad, cache.batch, gx, result.grads.layers[i]);
        break;
      case LayerKind::batchnorm:
        batchnorm_backward(spec, params.layers[i], cache, i, grad, cache.batch, gx, result.grads.layers[i]);
        break;
      case LayerKind::relu:
        relu_backward(x, grad, gx);
        break;
    }
    grad = std::move(gx);
  }
  result.grad_input = std::move(grad);
  return result;
}

void commit_batch_statistics(std::span<const LayerSpec> stack, ParamStore& params, const ForwardCache& cache) {
  if (cache.mode != Mode::train) return;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (stack[i].kind != LayerKind::batchnorm) continue;
    auto& p = params.layers[i];
    const double count = static_cast<double>(cache.batch * spatial_of(stack[i]));
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (std::size_t c = 0; c < stack[i].channels; ++c) {
      p.running_mean[c] = (1.0 - kBatchNormMomentum) * p.running_mean[c] + kBatchNormMomentum * cache.batch_mean[i][c];
      p.running_var[c] =
          (1.0 - kBatchNormMomentum) * p.running_var[c] + kBatchNormMomentum * cache.batch_var[i][c] * unbias;
    }
  }
}

ForwardResult Network::forward_train(const Tensor& input) {
  auto result = forward(layers, params, input, Mode::train);
  commit_batch_statistics(layers, params, result.cache);
  return result;
}

}  // namespace uscore::nn

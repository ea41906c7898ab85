#include "uscore/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "uscore/checkpoint.hpp"
#include "uscore/errors.hpp"

namespace uscore::vae {
namespace {

using nn::LayerSpec;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double clamp_log_var(double v) { return std::clamp(v, kLogVarMin, kLogVarMax); }
bool inside_clamp(double v) { return v > kLogVarMin && v < kLogVarMax; }

// Splits a [batch, 2n] head into its first and second halves; the second half is clamped.
void split_head(const Tensor& head, std::size_t n, Tensor& first, Tensor& second) {
  const std::size_t batch = head.dim(0);
  first = Tensor({batch, n});
  second = Tensor({batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      first(b, j) = head(b, j);
      second(b, j) = clamp_log_var(head(b, n + j));
    }
  }
}

std::size_t output_channels(const VaeConfig& c) {
  return c.mode == ModelMode::vae ? 2 * c.image_channels : c.image_channels;
}

}  // namespace

std::string to_string(ModelMode mode) { return mode == ModelMode::vae ? "vae" : "ae"; }
std::string to_string(Architecture arch) { return arch == Architecture::conv ? "conv" : "dense"; }

ModelMode parse_mode(const std::string& text) {
  if (text == "vae") return ModelMode::vae;
  if (text == "ae") return ModelMode::ae;
  throw ConfigError("unknown model mode '" + text + "' (expected vae or ae)");
}

Architecture parse_architecture(const std::string& text) {
  if (text == "conv") return Architecture::conv;
  if (text == "dense") return Architecture::dense;
  throw ConfigError("unknown architecture '" + text + "' (expected conv or dense)");
}

void VaeConfig::validate() const {
  if (n_size == 0 || image_channels == 0 || n_z == 0) throw ConfigError("n_size, channels and n_z must be positive");
  if (arch == Architecture::conv) {
    if (n_c == 0 || n_conv == 0) throw ConfigError("n_c and n_conv must be positive");
    if (n_conv >= 8 || n_size % (std::size_t{1} << n_conv) != 0)
      throw ConfigError("n_size " + std::to_string(n_size) + " must be divisible by 2^n_conv");
  } else {
    if (hidden.empty()) throw ConfigError("dense architecture needs at least one hidden layer");
    for (auto h : hidden)
      if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
}

std::vector<LayerSpec> encoder_stack(const VaeConfig& c) {
  c.validate();
  std::vector<LayerSpec> stack;
  if (c.arch == Architecture::dense) {
    std::size_t in = c.input_features();
    for (auto h : c.hidden) {
      stack.push_back(LayerSpec::dense(in, h));
      stack.push_back(LayerSpec::relu(h));
      in = h;
    }
    stack.push_back(LayerSpec::dense(in, c.encoder_head_width()));
    return stack;
  }
  std::size_t channels = c.image_channels, size = c.n_size;
  for (std::size_t n = 0; n < c.n_conv; ++n) {
    nn::ConvGeometry g;
    g.in_channels = channels;
    g.out_channels = c.n_c << n;
    g.in_height = g.in_width = size;
    stack.push_back(LayerSpec::conv2d(g));
    channels = g.out_channels;
    size = g.out_height();
    stack.push_back(LayerSpec::batchnorm(channels, size * size));
    stack.push_back(LayerSpec::relu(channels * size * size));
  }
  stack.push_back(LayerSpec::dense(channels * size * size, c.encoder_head_width()));
  return stack;
}

std::vector<LayerSpec> decoder_stack(const VaeConfig& c) {
  c.validate();
  std::vector<LayerSpec> stack;
  const std::size_t out_features = output_channels(c) * c.n_size * c.n_size;
  if (c.arch == Architecture::dense) {
    std::size_t in = c.n_z;
    for (auto it = c.hidden.rbegin(); it != c.hidden.rend(); ++it) {
      stack.push_back(LayerSpec::dense(in, *it));
      stack.push_back(LayerSpec::relu(*it));
      in = *it;
    }
    stack.push_back(LayerSpec::dense(in, out_features));
    return stack;
  }
  std::size_t size = c.n_size >> c.n_conv;
  std::size_t channels = c.n_c << (c.n_conv - 1);
  stack.push_back(LayerSpec::dense(c.n_z, channels * size * size));
  stack.push_back(LayerSpec::relu(channels * size * size));
  for (std::size_t n = c.n_conv; n-- > 0;) {
    nn::ConvGeometry g;
    g.transposed = true;
    g.in_channels = channels;
    g.out_channels = n == 0 ? output_channels(c) : (c.n_c << (n - 1));
    g.in_height = g.in_width = size;
    stack.push_back(LayerSpec::conv2d(g));
    channels = g.out_channels;
    size = g.out_height();
    if (n != 0) {
      stack.push_back(LayerSpec::batchnorm(channels, size * size));
      stack.push_back(LayerSpec::relu(channels * size * size));
    }
  }
  return stack;
}

VaeModel::VaeModel(VaeConfig config, nn::Network encoder, nn::Network decoder)
    : config_(std::move(config)), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  config_.validate();
  nn::validate_stack(encoder_.layers, encoder_.params);
  nn::validate_stack(decoder_.layers, decoder_.params);
  if (encoder_.input_features() != config_.input_features() ||
      encoder_.output_features() != config_.encoder_head_width())
    throw ConfigError("encoder does not match model configuration");
  if (decoder_.input_features() != config_.n_z ||
      decoder_.output_features() != output_channels(config_) * config_.n_size * config_.n_size)
    throw ConfigError("decoder does not match model configuration");
}

VaeModel VaeModel::create(const VaeConfig& config, Rng& rng) {
  nn::Network enc{encoder_stack(config), {}};
  enc.params = nn::init_params(enc.layers, rng);
  nn::Network dec{decoder_stack(config), {}};
  dec.params = nn::init_params(dec.layers, rng);
  return VaeModel(config, std::move(enc), std::move(dec));
}

Tensor as_batch(const VaeModel& model, const Tensor& x) {
  const std::size_t nx = model.config().input_features();
  if (x.rank() == 2 && x.dim(1) == nx) return x;
  if (x.size() == nx) return x.reshaped({1, nx});
  throw ShapeError("input of shape " + nn::shape_string(x.shape()) + " does not match model input of " +
                   std::to_string(nx) + " features");
}

EncoderOutput encode(const VaeModel& model, const Tensor& x) {
  const Tensor batch = as_batch(model, x);
  const Tensor head = model.encoder().infer(batch);
  EncoderOutput out;
  if (model.config().mode == ModelMode::vae) {
    split_head(head, model.config().n_z, out.mu_z, out.log_var_z);
  } else {
    out.mu_z = head;
    out.log_var_z = Tensor::zeros_like(head);
  }
  return out;
}

Tensor reparameterize(const EncoderOutput& enc, const Tensor& noise) {
  if (noise.shape() != enc.mu_z.shape() || enc.log_var_z.shape() != enc.mu_z.shape())
    throw ShapeError("noise shape " + nn::shape_string(noise.shape()) + " does not match latent shape " +
                     nn::shape_string(enc.mu_z.shape()));
  Tensor z = enc.mu_z;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * enc.log_var_z[i]) * noise[i];
  return z;
}

DecoderOutput decode(const VaeModel& model, const Tensor& z) {
  const std::size_t nz = model.config().n_z;
  Tensor batch = z;
  if (z.rank() == 1 && z.size() == nz) batch.reshape({1, nz});
  if (batch.rank() != 2 || batch.dim(1) != nz)
    throw ShapeError("latent of shape " + nn::shape_string(z.shape()) + " does not match n_z = " + std::to_string(nz));
  const Tensor out = model.decoder().infer(batch);
  DecoderOutput dec;
  const std::size_t nx = model.config().input_features();
  if (model.config().mode == ModelMode::vae) {
    split_head(out, nx, dec.mu_x, dec.log_var_x);
  } else {
    dec.mu_x = out;
    dec.log_var_x = Tensor::zeros_like(out);
  }
  return dec;
}

ScoreBreakdown negative_elbo(std::span<const double> x, std::span<const double> mu_z,
                             std::span<const double> log_var_z, std::span<const double> mu_x,
                             std::span<const double> log_var_x) {
  if (mu_z.size() != log_var_z.size() || x.size() != mu_x.size() || x.size() != log_var_x.size())
    throw ShapeError("negative_elbo: mismatched term lengths");
  double d = 0.0;
  for (std::size_t j = 0; j < mu_z.size(); ++j)
    d += 0.5 * (-log_var_z[j] - 1.0 + std::exp(log_var_z[j]) + mu_z[j] * mu_z[j]);
  double a = 0.0, m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    a += 0.5 * (kLog2Pi + log_var_x[i]);
    const double r = mu_x[i] - x[i];
    m += 0.5 * r * r * std::exp(-log_var_x[i]);
  }
  if (!std::isfinite(d) || !std::isfinite(a) || !std::isfinite(m)) throw NumericalError("non-finite negative ELBO term");
  return ScoreBreakdown::from_terms(d, a, m);
}

std::vector<ScoreBreakdown> negative_elbo(const Tensor& x, const EncoderOutput& enc, const DecoderOutput& dec) {
  const std::size_t batch = enc.mu_z.dim(0);
  if (x.rank() != 2 || x.dim(0) != batch || dec.mu_x.dim(0) != batch)
    throw ShapeError("negative_elbo: batch sizes disagree");
  std::vector<ScoreBreakdown> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b)
    out.push_back(negative_elbo(x.row(b), enc.mu_z.row(b), enc.log_var_z.row(b), dec.mu_x.row(b), dec.log_var_x.row(b)));
  return out;
}

std::vector<double> ae_scores(const VaeModel& model, const Tensor& x) {
  if (model.config().mode != ModelMode::ae) throw ConfigError("ae_score requires an ae-mode model");
  const Tensor batch = as_batch(model, x);
  const Tensor recon = model.decoder().infer(model.encoder().infer(batch));
  const std::size_t nx = batch.dim(1);
  std::vector<double> out(batch.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      const double r = batch(b, i) - recon(b, i);
      s += r * r;
    }
    out[b] = s / static_cast<double>(nx);
  }
  return out;
}

double ae_score(const VaeModel& model, const Tensor& x) { return ae_scores(model, x).at(0); }

LossGradients loss_and_gradients(const VaeModel& model, const Tensor& x, const Tensor& noise, nn::Mode mode) {
  const auto& cfg = model.config();
  const std::size_t nz = cfg.n_z, nx = cfg.input_features();
  const Tensor batch = as_batch(model, x);
  const std::size_t bsz = batch.dim(0);
  const double inv_b = 1.0 / static_cast<double>(bsz);

  LossGradients out;
  auto enc_pass = nn::forward(model.encoder().layers, model.encoder().params, batch, mode);
  const Tensor& head = enc_pass.output;

  if (cfg.mode == ModelMode::ae) {
    auto dec_pass = nn::forward(model.decoder().layers, model.decoder().params, head, mode);
    const Tensor& recon = dec_pass.output;
    Tensor grad_out({bsz, nx});
    double total = 0.0;
    for (std::size_t b = 0; b < bsz; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < nx; ++i) {
        const double r = recon(b, i) - batch(b, i);
        s += r * r;
        grad_out(b, i) = 2.0 * r / static_cast<double>(nx) * inv_b;
      }
      total += s / static_cast<double>(nx);
    }
    out.loss = total * inv_b;
    out.mean_terms = ScoreBreakdown::from_terms(0.0, 0.0, out.loss);
    auto dec_back = nn::backward(model.decoder().layers, model.decoder().params, dec_pass.cache, grad_out);
    auto enc_back = nn::backward(model.encoder().layers, model.encoder().params, enc_pass.cache, dec_back.grad_input);
    out.encoder_grads = std::move(enc_back.grads);
    out.decoder_grads = std::move(dec_back.grads);
    out.encoder_cache = std::move(enc_pass.cache);
    out.decoder_cache = std::move(dec_pass.cache);
    if (!std::isfinite(out.loss)) throw NumericalError("non-finite training loss");
    return out;
  }

  if (noise.rank() != 2 || noise.dim(0) != bsz || noise.dim(1) != nz)
    throw ShapeError("noise must have shape [batch, n_z]");
  EncoderOutput enc;
  split_head(head, nz, enc.mu_z, enc.log_var_z);
  const Tensor z = reparameterize(enc, noise);
  auto dec_pass = nn::forward(model.decoder().layers, model.decoder().params, z, mode);
  const Tensor& dec_out = dec_pass.output;

  Tensor grad_dec({bsz, 2 * nx});
  double d_sum = 0.0, a_sum = 0.0, m_sum = 0.0;
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double mu = dec_out(b, i);
      const double raw = dec_out(b, nx + i);
      const double lv = clamp_log_var(raw);
      const double prec = std::exp(-lv);
      const double r = mu - batch(b, i);
      a_sum += 0.5 * (kLog2Pi + lv);
      m_sum += 0.5 * r * r * prec;
      grad_dec(b, i) = r * prec * inv_b;
      grad_dec(b, nx + i) = inside_clamp(raw) ? (0.5 - 0.5 * r * r * prec) * inv_b : 0.0;
    }
    for (std::size_t j = 0; j < nz; ++j) {
      const double lv = enc.log_var_z(b, j), mu = enc.mu_z(b, j);
      d_sum += 0.5 * (-lv - 1.0 + std::exp(lv) + mu * mu);
    }
  }
  out.mean_terms = ScoreBreakdown::from_terms(d_sum * inv_b, a_sum * inv_b, m_sum * inv_b);
  out.loss = out.mean_terms.l;
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite training loss");

  auto dec_back = nn::backward(model.decoder().layers, model.decoder().params, dec_pass.cache, grad_dec);
  const Tensor& grad_z = dec_back.grad_input;
  Tensor grad_head({bsz, 2 * nz});
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t j = 0; j < nz; ++j) {
      const double lv = enc.log_var_z(b, j);
      const double sigma = std::exp(0.5 * lv);
      grad_head(b, j) = grad_z(b, j) + enc.mu_z(b, j) * inv_b;
      const double g_lv = grad_z(b, j) * noise(b, j) * 0.5 * sigma + 0.5 * (std::exp(lv) - 1.0) * inv_b;
      grad_head(b, nz + j) = inside_clamp(head(b, nz + j)) ? g_lv : 0.0;
    }
  }
  auto enc_back = nn::backward(model.encoder().layers, model.encoder().params, enc_pass.cache, grad_head);
  out.encoder_grads = std::move(enc_back.grads);
  out.decoder_grads = std::move(dec_back.grads);
  out.encoder_cache = std::move(enc_pass.cache);
  out.decoder_cache = std::move(dec_pass.cache);
  return out;
}

void save_model(const VaeModel& model, const std::string& weights_path, const std::string& sidecar_path) {
  const nn::Network nets[] = {model.encoder(), model.decoder()};
  nn::save_networks(weights_path, nets);
  const auto& c = model.config();
  nlohmann::ordered_json j;
  j["format"] = "uscore-vae";
  j["version"] = 1;
  j["mode"] = to_string(c.mode);
  j["arch"] = to_string(c.arch);
  j["n_size"] = c.n_size;
  j["image_channels"] = c.image_channels;
  j["n_z"] = c.n_z;
  j["n_c"] = c.n_c;
  j["n_conv"] = c.n_conv;
  j["hidden"] = c.hidden;
  j["pixel_min"] = 0.0;
  j["pixel_max"] = 1.0;
  std::ofstream out(sidecar_path);
  if (!out) throw DataError("cannot open " + sidecar_path + " for writing");
  out << j.dump(2) << '\n';
}

VaeModel load_model(const std::string& weights_path, const std::string& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw DataError("cannot open " + sidecar_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("malformed model sidecar " + sidecar_path + ": " + e.what());
  }
  if (j.value("format", "") != "uscore-vae") throw DataError(sidecar_path + " is not a vae sidecar");
  VaeConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.arch = parse_architecture(j.at("arch").get<std::string>());
  c.n_size = j.at("n_size").get<std::size_t>();
  c.image_channels = j.at("image_channels").get<std::size_t>();
  c.n_z = j.at("n_z").get<std::size_t>();
  c.n_c = j.at("n_c").get<std::size_t>();
  c.n_conv = j.at("n_conv").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  auto nets = nn::load_networks(weights_path);
  if (nets.size() != 2) throw DataError(weights_path + " does not hold an encoder/decoder pair");
  return VaeModel(c, std::move(nets[0]), std::move(nets[1]));
}

}  // namespace uscore::vae

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uscore/adam.hpp"
#include "uscore/layers.hpp"
#include "uscore/score.hpp"

namespace uscore::vae {

using nn::Tensor;

enum class ModelMode { vae, ae };
enum class Architecture { conv, dense };

/// Both log-variance heads are clamped to this range.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

std::string to_string(ModelMode mode);
std::string to_string(Architecture arch);
ModelMode parse_mode(const std::string& text);
Architecture parse_architecture(const std::string& text);

struct VaeConfig {
  ModelMode mode = ModelMode::vae;
  Architecture arch = Architecture::conv;
  std::size_t n_size = 32;          // input crop is n_size x n_size
  std::size_t image_channels = 1;
  std::size_t n_z = 20;
  std::size_t n_c = 32;             // channels of the first feature map
  std::size_t n_conv = 4;
  std::vector<std::size_t> hidden = {512, 256};  // dense architecture only

  std::size_t input_features() const { return image_channels * n_size * n_size; }
  std::size_t encoder_head_width() const { return mode == ModelMode::vae ? 2 * n_z : n_z; }
  void validate() const;
};

struct EncoderOutput {
  Tensor mu_z;       // [batch, n_z]
  Tensor log_var_z;  // [batch, n_z]; all zeros in ae mode
};

struct DecoderOutput {
  Tensor mu_x;       // [batch, n_x]
  Tensor log_var_x;  // [batch, n_x]; all zeros in ae mode
};

class VaeModel {
 public:
  VaeModel(VaeConfig config, nn::Network encoder, nn::Network decoder);

  /// Builds the encoder/decoder stacks for `config` with freshly initialized parameters.
  static VaeModel create(const VaeConfig& config, Rng& rng);

  const VaeConfig& config() const { return config_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }
  nn::Network& encoder() { return encoder_; }
  nn::Network& decoder() { return decoder_; }

 private:
  VaeConfig config_;
  nn::Network encoder_;
  nn::Network decoder_;
};

std::vector<nn::LayerSpec> encoder_stack(const VaeConfig& config);
std::vector<nn::LayerSpec> decoder_stack(const VaeConfig& config);

/// Flattens a single image ([H,W], [C,H,W] or [N_x]) or a batch ([B, N_x]) into [B, N_x].
Tensor as_batch(const VaeModel& model, const Tensor& x);

/// Eval-mode inference of the variational posterior parameters.
EncoderOutput encode(const VaeModel& model, const Tensor& x);
/// z = mu_z + exp(log_var_z / 2) * noise.
Tensor reparameterize(const EncoderOutput& enc, const Tensor& noise);
/// Eval-mode decoder pass.
DecoderOutput decode(const VaeModel& model, const Tensor& z);

/// Negative ELBO of one sample split into D (KL to the standard normal prior),
/// A (Gaussian log-normalizer) and M (variance-normalized squared residual).
ScoreBreakdown negative_elbo(std::span<const double> x, std::span<const double> mu_z,
                             std::span<const double> log_var_z, std::span<const double> mu_x,
                             std::span<const double> log_var_x);
std::vector<ScoreBreakdown> negative_elbo(const Tensor& x, const EncoderOutput& enc, const DecoderOutput& dec);

/// Mean squared reconstruction error (1/N_x) sum_i (x_i - x~_i)^2 for an ae-mode model.
std::vector<double> ae_scores(const VaeModel& model, const Tensor& x);
double ae_score(const VaeModel& model, const Tensor& x);

struct LossGradients {
  double loss = 0.0;           // batch mean
  ScoreBreakdown mean_terms;   // batch means of D, A, M (vae) or M = L = MSE (ae)
  nn::ParamStore encoder_grads;
  nn::ParamStore decoder_grads;
  nn::ForwardCache encoder_cache;
  nn::ForwardCache decoder_cache;
};

/// Batch-mean training loss and its exact gradient. `noise` ([batch, n_z]) is
/// the reparameterization sample; ignored in ae mode. Does not mutate the model.
LossGradients loss_and_gradients(const VaeModel& model, const Tensor& x, const Tensor& noise,
                                 nn::Mode mode = nn::Mode::train);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  nn::AdamConfig adam{};
  std::size_t steps_per_epoch = 0;  // 0: one pass over the dataset
  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<ScoreBreakdown> epoch_terms;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Minimizes the mean negative ELBO (or MSE in ae mode) over random n_size crops
/// of `images` (each [H,W] or [C,H,W], values in [0,1]). Throws NumericalError on
/// divergence.
TrainReport train(VaeModel& model, std::span<const Tensor> images, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Checkpoint: networks in the nn format plus a JSON sidecar of hyperparameters.
void save_model(const VaeModel& model, const std::string& weights_path, const std::string& sidecar_path);
VaeModel load_model(const std::string& weights_path, const std::string& sidecar_path);

}  // namespace uscore::vae

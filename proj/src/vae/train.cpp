#include <algorithm>
#include <cmath>
#include <numeric>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"
#include "uscore/vae.hpp"

namespace uscore::vae {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch size must be positive");
  if (!(adam.learning_rate > 0.0) || !(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0) || adam.weight_decay < 0.0)
    throw ConfigError("invalid optimizer constants");
}

TrainReport train(VaeModel& model, std::span<const Tensor> images, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (images.empty()) throw DataError("training set is empty");
  const auto& cfg = model.config();
  const std::size_t nx = cfg.input_features();
  const std::size_t steps_per_epoch = config.steps_per_epoch
                                          ? config.steps_per_epoch
                                          : (images.size() + config.batch_size - 1) / config.batch_size;

  Rng rng = make_rng(config.seed, 17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  nn::AdamState enc_state = nn::AdamState::for_params(model.encoder().params, config.adam);
  nn::AdamState dec_state = nn::AdamState::for_params(model.decoder().params, config.adam);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0, d_sum = 0.0, a_sum = 0.0, m_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t bsz = std::min(config.batch_size, images.size());
      Tensor batch({bsz, nx});
      for (std::size_t b = 0; b < bsz; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const Tensor sample = data::random_crop(images[order[cursor++]], cfg.n_size, rng);
        if (sample.size() != nx) throw ShapeError("training image channels do not match the model");
        std::copy(sample.values().begin(), sample.values().end(), batch.row(b).begin());
      }
      Tensor noise({bsz, cfg.n_z});
      if (cfg.mode == ModelMode::vae)
        for (double& v : noise.values()) v = gauss(rng);

      LossGradients lg = loss_and_gradients(model, batch, noise, nn::Mode::train);
      if (!std::isfinite(lg.loss))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1));
      nn::commit_batch_statistics(model.encoder().layers, model.encoder().params, lg.encoder_cache);
      nn::commit_batch_statistics(model.decoder().layers, model.decoder().params, lg.decoder_cache);
      try {
        nn::adam_step(model.encoder().params, lg.encoder_grads, enc_state);
        nn::adam_step(model.decoder().params, lg.decoder_grads, dec_state);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1) + ": " + e.what());
      }
      const double w = static_cast<double>(bsz);
      loss_sum += lg.loss * w;
      d_sum += lg.mean_terms.d * w;
      a_sum += lg.mean_terms.a * w;
      m_sum += lg.mean_terms.m * w;
      seen += bsz;
      ++report.steps;
    }
    const double n = static_cast<double>(seen);
    report.epoch_loss.push_back(loss_sum / n);
    report.epoch_terms.push_back(ScoreBreakdown::from_terms(d_sum / n, a_sum / n, m_sum / n));
    if (on_epoch) on_epoch(epoch + 1, report.epoch_loss.back());
  }
  return report;
}

}  // namespace uscore::vae

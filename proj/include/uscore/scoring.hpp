#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "uscore/data.hpp"
#include "uscore/gmm.hpp"
#include "uscore/score.hpp"
#include "uscore/vae.hpp"

namespace uscore::scoring {

using nn::Tensor;

/// Breakdown of one sample at the MAP latent z = mu_z. An ae-mode model
/// reports its MSE as both M and L with D = A = 0.
ScoreBreakdown score_vae(const vae::VaeModel& model, const Tensor& x);
/// Batched form; rows of `batch` are flattened inputs.
std::vector<ScoreBreakdown> score_vae_batch(const vae::VaeModel& model, const Tensor& batch);

/// Breakdown -log p(x | z = k) = D + A + M for the MAP class k.
ScoreBreakdown score_gmm(const gmm::GmmModel& model, const gmm::Vector& x);

double select(const ScoreBreakdown& breakdown, ScoreKind kind);

/// Scores image patches of a fixed size. Implementations are immutable after
/// construction and safe to call from several threads.
class PatchScorer {
 public:
  virtual ~PatchScorer() = default;
  virtual std::size_t patch_size() const = 0;
  virtual std::vector<ScoreBreakdown> score(std::span<const Tensor> patches) const = 0;
};

class VaeScorer final : public PatchScorer {
 public:
  explicit VaeScorer(const vae::VaeModel& model) : model_(model) {}
  std::size_t patch_size() const override { return model_.config().n_size; }
  std::vector<ScoreBreakdown> score(std::span<const Tensor> patches) const override;

 private:
  const vae::VaeModel& model_;
};

/// Flattens each patch, projects it with the optional PCA and scores it with the GMM.
class GmmScorer final : public PatchScorer {
 public:
  GmmScorer(const gmm::GmmModel& model, const std::optional<gmm::PcaModel>& pca, std::size_t patch_size)
      : model_(model), pca_(pca), patch_size_(patch_size) {}
  std::size_t patch_size() const override { return patch_size_; }
  std::vector<ScoreBreakdown> score(std::span<const Tensor> patches) const override;

 private:
  const gmm::GmmModel& model_;
  const std::optional<gmm::PcaModel>& pca_;
  std::size_t patch_size_;
};

/// One line of the score dump.
struct ScoreRow {
  std::size_t sample_id = 0;
  std::size_t patch_row = 0;
  std::size_t patch_col = 0;
  ScoreBreakdown score;
  int label = 0;
  std::size_t cluster_id = 0;
};

/// Scores every grid patch of every image.
std::vector<ScoreRow> score_dataset(const PatchScorer& scorer, std::span<const data::LabeledImage> images,
                                    const data::PatchGrid& grid);

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

}  // namespace uscore::scoring

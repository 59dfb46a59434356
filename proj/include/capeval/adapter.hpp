#ifndef CAPEVAL_ADAPTER_HPP
#define CAPEVAL_ADAPTER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <ostream>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "capeval/embedding_store.hpp"
#include "capeval/error.hpp"
#include "capeval/metric.hpp"

namespace capeval {

/// Per-modality linear maps over frozen embeddings plus the contrastive
/// temperature, stored as log(tau) so it stays positive under SGD.
struct AdapterState {
  Eigen::MatrixXd w_text;
  Eigen::MatrixXd w_image;
  double log_tau = std::log(0.07);
  std::int64_t step = 0;

  static AdapterState identity(std::size_t dim, double tau = 0.07);

  std::size_t dimension() const { return static_cast<std::size_t>(w_text.rows()); }
  double tau() const { return std::exp(log_tau); }
};

/// Same shape as the trainable part of AdapterState.
struct AdapterGradient {
  Eigen::MatrixXd w_text;
  Eigen::MatrixXd w_image;
  double log_tau = 0.0;

  static AdapterGradient zero(std::size_t dim);
  AdapterGradient& operator+=(const AdapterGradient& other);
  AdapterGradient& operator*=(double factor);
};

/// cos(normalize(W_image v), normalize(W_text c)).
template <typename DerivedV, typename DerivedC>
double adapted_cosine(const AdapterState& state, const Eigen::MatrixBase<DerivedV>& v,
                      const Eigen::MatrixBase<DerivedC>& c) {
  const Eigen::VectorXd a = state.w_image * v.template cast<double>();
  const Eigen::VectorXd b = state.w_text * c.template cast<double>();
  const double r = a.dot(b) / (a.norm() * b.norm());
  if (!std::isfinite(r)) throw NumericError("adapted cosine is not finite");
  return r;
}

/// N image/text pairs aligned by row (one embedding per row).
struct ContrastiveBatch {
  Eigen::MatrixXd images;
  Eigen::MatrixXd texts;

  Eigen::Index size() const { return images.rows(); }
};

/// Rated image/text pairs; x is computed from the adapted embeddings.
struct PearsonBatch {
  Eigen::MatrixXd images;
  Eigen::MatrixXd texts;
  Eigen::VectorXd ratings;

  Eigen::Index size() const { return images.rows(); }
};

struct LossResult {
  double loss = 0.0;
  AdapterGradient grad;
};

/// Symmetric InfoNCE on a precomputed similarity matrix s (rows: images,
/// columns: texts). Returns the loss with dL/ds and dL/dlog(tau).
struct SimilarityLoss {
  double loss = 0.0;
  Eigen::MatrixXd d_similarity;
  double d_log_tau = 0.0;
};
SimilarityLoss symmetric_infonce(const Eigen::MatrixXd& similarity, double tau);

/// Contrastive loss over adapted cosines, gradients by analytic backprop.
LossResult contrastive_loss(const AdapterState& state, const ContrastiveBatch& batch);

/// Thrown for Pearson batches whose x or y is (numerically) constant.
class DegenerateBatch : public NumericError {
 public:
  using NumericError::NumericError;
};

/// 1 - r(x, y) where x_k = w * max(cos_k, 0) (or w * cos_k when raw_cos).
LossResult pearson_loss(const AdapterState& state, const PearsonBatch& batch,
                        const ClipScoreConfig& cfg = {}, bool raw_cos = false);

enum class LossMode { contrastive_only, pearson_only, combined };

LossMode parse_loss_mode(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::combined;
  double contrastive_weight = 1.0;
  double pearson_weight = 1.0;
  bool pearson_raw_cos = false;
  ClipScoreConfig clip;
  double tau_min = 1e-3;
  double tau_max = 100.0;
};

struct LossPoint {
  std::int64_t step = 0;
  std::optional<double> contrastive;
  std::optional<double> pearson;
};

struct EpochSummary {
  int epoch = 0;
  std::size_t updates = 0;
  std::size_t skipped = 0;
  double mean_contrastive = std::nan("");  ///< NaN when no contrastive batch ran
  double mean_pearson = std::nan("");      ///< mean L_P over non-skipped batches
};

struct TrainResult {
  AdapterState state;
  std::vector<LossPoint> curve;
  std::vector<EpochSummary> epochs;
  std::size_t skipped_batches = 0;
};

/// SGD over alternating tasks: each update accumulates the gradient of one
/// contrastive batch and one Pearson batch (combined mode) before a single
/// parameter step. Instances are put in a canonical order and then shuffled
/// per epoch from `cfg.seed`, so results depend only on the data set and seed.
TrainResult train(AdapterState state, const ContrastiveBatch& contrastive_data,
                  const PearsonBatch& rated_data, const TrainConfig& cfg);

/// Maps each vector through the modality's matrix and re-normalizes.
EmbeddingStore export_adapted_store(const AdapterState& state, const EmbeddingStore& store);

/// Gathers store vectors into a row matrix.
Eigen::MatrixXd gather_rows(const EmbeddingStore& store, std::span<const std::string> ids);

// Checkpoint: one JSON line {"dim","tau","step"} then W_text and W_image as
// row-major little-endian f64.
void save_checkpoint(const AdapterState& state, const std::filesystem::path& path);
AdapterState load_checkpoint(const std::filesystem::path& path);

/// `step,loss_contrastive,loss_pearson`; empty fields for absent losses.
void write_loss_curve_csv(std::span<const LossPoint> curve, std::ostream& out);

}  // namespace capeval

#endif  // CAPEVAL_ADAPTER_HPP

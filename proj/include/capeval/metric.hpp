#ifndef CAPEVAL_METRIC_HPP
#define CAPEVAL_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "capeval/dataset.hpp"
#include "capeval/embedding_store.hpp"
#include "capeval/error.hpp"

namespace capeval {

struct ClipScoreConfig {
  double w = 2.5;  ///< rescale parameter
};

/// Cosine similarity accumulated in double regardless of the input scalar.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw UsageError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double denom = ad.norm() * bd.norm();
  if (denom == 0.0) throw DataError("cosine of a zero vector is undefined");
  return ad.dot(bd) / denom;
}

/// w * max(cos(c, v), 0).
template <typename DerivedC, typename DerivedV>
double clip_score(const Eigen::MatrixBase<DerivedC>& c, const Eigen::MatrixBase<DerivedV>& v,
                  const ClipScoreConfig& cfg = {}) {
  return cfg.w * std::max(cosine(c, v), 0.0);
}

/// Harmonic mean with H(0, x) = H(x, 0) = 0.
inline double harmonic_mean(double a, double b) {
  if (a <= 0.0 || b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

/// H-Mean(clip_score(c, v), max(max_r cos(c, r), 0)). The reference term is a
/// raw cosine in [0, 1] and is deliberately not rescaled by w.
template <typename DerivedC, typename Refs, typename DerivedV>
double ref_clip_score(const Eigen::MatrixBase<DerivedC>& c, const Refs& refs,
                      const Eigen::MatrixBase<DerivedV>& v, const ClipScoreConfig& cfg = {}) {
  if (std::empty(refs)) throw UsageError("ref_clip_score: reference set is empty");
  double best = -1.0;
  for (const auto& r : refs) best = std::max(best, cosine(c, r));
  return harmonic_mean(clip_score(c, v, cfg), std::max(best, 0.0));
}

struct ScoreRecord {
  std::string instance_id;
  std::string language;
  double clipscore = 0.0;
  std::optional<double> refclipscore;
};

/// Scores every pair in input order; refclipscore is computed iff the pair has
/// references. Unresolved ids throw DataError naming the instance and the id.
/// `jobs` > 1 splits the work across threads without changing the output.
std::vector<ScoreRecord> score_dataset(std::span<const RatedPairRecord> pairs,
                                       const EmbeddingStore& images, const EmbeddingStore& texts,
                                       const ClipScoreConfig& cfg = {}, unsigned jobs = 1);

/// Arithmetic mean in double; throws UsageError when empty.
double corpus_mean(std::span<const double> values);
double corpus_mean(std::span<const ScoreRecord> records);

/// CSV: `instance_id,language,clipscore,refclipscore`, 6 decimals, empty
/// refclipscore when absent.
void write_scores_csv(std::span<const ScoreRecord> records, std::ostream& out);
std::vector<ScoreRecord> read_scores_csv(std::istream& in, const std::string& source = "<stream>");

}  // namespace capeval

#endif  // CAPEVAL_METRIC_HPP

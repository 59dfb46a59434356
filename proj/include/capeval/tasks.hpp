#ifndef CAPEVAL_TASKS_HPP
#define CAPEVAL_TASKS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "capeval/dataset.hpp"
#include "capeval/embedding_store.hpp"
#include "capeval/metric.hpp"

namespace capeval {

struct Accuracy {
  std::int64_t correct = 0;
  std::int64_t total = 0;

  double value() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
  void add(bool ok) {
    ++total;
    correct += ok ? 1 : 0;
  }
};

struct TaskReport {
  std::string task;
  std::string language;
  std::map<std::string, Accuracy> breakdown;
  Accuracy overall;
  std::int64_t skipped = 0;
  /// Unweighted mean of the breakdown accuracies (VALSE phenomena).
  std::optional<double> macro_average;

  /// {"task","language","breakdown":{...},"correct","total","accuracy","skipped"}
  std::string to_json() const;
};

/// Looks up embeddings and computes CLIPScore for (text, image) id pairs.
class PairScorer {
 public:
  PairScorer(const EmbeddingStore& images, const EmbeddingStore& texts, ClipScoreConfig cfg = {});

  double clip(const std::string& text_id, const std::string& image_id) const;
  double ref_clip(const std::string& text_id, std::span<const std::string> reference_ids,
                  const std::string& image_id) const;

 private:
  const EmbeddingStore& images_;
  const EmbeddingStore& texts_;
  ClipScoreConfig cfg_;
};

/// Correct iff score(caption) > score(foil), strictly. Breakdown by phenomenon.
TaskReport valse_accuracy(std::span<const FoilRecord> foils, const PairScorer& scorer);

/// Contradiction/entailment pairs on the same image; correct iff the
/// entailment caption scores strictly higher.
TaskReport xvnli_task1(std::span<const NliRecord> records, const PairScorer& scorer);
/// All pairs with distinct labels on the same image; correct iff the score
/// order strictly matches the label order.
TaskReport xvnli_task2(std::span<const NliRecord> records, const PairScorer& scorer);
/// Triples (entailment, neutral, contradiction) on the same image; correct iff
/// the scores are strictly decreasing in that order.
TaskReport xvnli_task3(std::span<const NliRecord> records, const PairScorer& scorer);

/// Every (true, false) instance pair within a group; correct iff the max image
/// score of the true instance beats the min image score of the false one.
/// Groups without both labels are skipped.
TaskReport marvl_task1(std::span<const TwoImageInstance> instances, const PairScorer& scorer);
/// Groups of exactly 2 true + 2 false; correct iff both true maxima exceed
/// both false minima. Malformed groups are skipped.
TaskReport marvl_task2(std::span<const TwoImageInstance> instances, const PairScorer& scorer);

enum class PairwiseMetric { clipscore, refclipscore };

/// Correct iff the majority-preferred caption scores strictly higher; exact
/// score ties are settled by a coin flip keyed on (seed, record index).
/// Instances with equal votes are skipped.
TaskReport pascal_pairwise(std::span<const PreferenceRecord> preferences,
                           const PairScorer& scorer, PairwiseMetric metric, std::uint64_t seed);

enum class HeatmapMode { all, bottom25, top25 };

struct Heatmap {
  std::vector<std::string> languages;
  Eigen::MatrixXd values;  ///< NaN marks a missing cell

  void write_csv(std::ostream& out) const;
};

/// Pearson r between per-language score vectors aligned on a shared instance
/// index. In percentile modes each cell is restricted to instances below the
/// 25th (bottom25) or above the 75th (top25) QE percentile: the mask of the
/// language that has QE scores, or the intersection when both do. Cells with
/// fewer than 3 instances (or undefined r) are NaN; the diagonal is 1.
Heatmap language_heatmap(const std::map<std::string, std::vector<double>>& scores,
                         const std::map<std::string, std::vector<double>>& qe,
                         HeatmapMode mode);

}  // namespace capeval

#endif  // CAPEVAL_TASKS_HPP

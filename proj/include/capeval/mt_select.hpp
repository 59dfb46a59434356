#ifndef CAPEVAL_MT_SELECT_HPP
#define CAPEVAL_MT_SELECT_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "capeval/dataset.hpp"

namespace capeval {

struct DroppedGroup {
  std::string source_id;
  std::string target_language;
  std::size_t candidates = 0;

  std::string to_jsonl() const;
};

struct SelectionResult {
  /// One chosen candidate per surviving (source_id, target_language) group,
  /// ordered by that key.
  std::vector<MtCandidate> selected;
  std::vector<DroppedGroup> dropped;
};

/// Within each (source_id, target_language) group: drop lang_ok == false,
/// keep the maximum qe_score, break QE ties by the smallest candidate_id.
/// Groups with no survivors are reported in `dropped`.
SelectionResult select_best(std::span<const MtCandidate> candidates);

SelectedTranslation to_selected(const MtCandidate& candidate);

/// Percentile with linear interpolation between order statistics
/// (position p/100 * (n-1) in the sorted sample).
double linear_percentile(std::span<const double> values, double p);

enum class PercentileSide { below, above };

/// below: qe < P_p; above: qe > P_(100-p). Strict on both sides, so the two
/// masks never overlap for p < 50. Requires at least 4 values and 0 < p < 100.
std::vector<bool> qe_percentile_mask(std::span<const double> qe, double p, PercentileSide side);

}  // namespace capeval

#endif  // CAPEVAL_MT_SELECT_HPP

#include "capeval/mt_select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include <json.hpp>

#include "capeval/error.hpp"

namespace capeval {

std::string DroppedGroup::to_jsonl() const {
  nlohmann::ordered_json j;
  j["source_id"] = source_id;
  j["language"] = target_language;
  j["candidates"] = candidates;
  j["reason"] = "no candidate passed the language check";
  return j.dump();
}

SelectionResult select_best(std::span<const MtCandidate> candidates) {
  if (candidates.empty()) throw UsageError("mt selection over an empty candidate list");

  std::map<std::pair<std::string, std::string>, std::vector<const MtCandidate*>> groups;
  for (const auto& c : candidates) {
    if (!std::isfinite(c.qe_score)) {
      throw DataError("candidate '" + c.candidate_id + "' has a non-finite qe_score");
    }
    groups[{c.source_id, c.target_language}].push_back(&c);
  }

  SelectionResult result;
  for (const auto& [key, members] : groups) {
    const MtCandidate* best = nullptr;
    for (const MtCandidate* c : members) {
      if (!c->lang_ok) continue;
      if (best == nullptr || c->qe_score > best->qe_score ||
          (c->qe_score == best->qe_score && c->candidate_id < best->candidate_id)) {
        best = c;
      }
    }
    if (best == nullptr) {
      result.dropped.push_back(DroppedGroup{key.first, key.second, members.size()});
    } else {
      result.selected.push_back(*best);
    }
  }
  return result;
}

SelectedTranslation to_selected(const MtCandidate& c) {
  return SelectedTranslation{c.source_id, c.target_language, c.candidate_id, c.text, c.qe_score};
}

double linear_percentile(std::span<const double> values, double p) {
  if (values.empty()) throw UsageError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw UsageError("percentile must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<bool> qe_percentile_mask(std::span<const double> qe, double p, PercentileSide side) {
  if (qe.size() < 4) {
    throw UsageError("percentile mask needs at least 4 QE scores, got " +
                     std::to_string(qe.size()));
  }
  if (!(p > 0.0 && p < 100.0)) throw UsageError("percentile must lie in (0, 100)");
  std::vector<bool> mask(qe.size(), false);
  if (side == PercentileSide::below) {
    const double threshold = linear_percentile(qe, p);
    for (std::size_t i = 0; i < qe.size(); ++i) mask[i] = qe[i] < threshold;
  } else {
    const double threshold = linear_percentile(qe, 100.0 - p);
    for (std::size_t i = 0; i < qe.size(); ++i) mask[i] = qe[i] > threshold;
  }
  return mask;
}

}  // namespace capeval

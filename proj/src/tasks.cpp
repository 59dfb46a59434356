#include "capeval/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include <json.hpp>

#include "capeval/csv.hpp"
#include "capeval/error.hpp"
#include "capeval/mt_select.hpp"
#include "capeval/random.hpp"
#include "capeval/rank_correlation.hpp"

namespace capeval {

std::string TaskReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["language"] = language;
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (const auto& [key, acc] : breakdown) {
    b[key] = {{"correct", acc.correct}, {"total", acc.total}, {"accuracy", acc.value()}};
  }
  j["breakdown"] = std::move(b);
  j["correct"] = overall.correct;
  j["total"] = overall.total;
  j["accuracy"] = overall.value();
  j["skipped"] = skipped;
  if (macro_average) j["macro_average"] = *macro_average;
  return j.dump();
}

PairScorer::PairScorer(const EmbeddingStore& images, const EmbeddingStore& texts,
                       ClipScoreConfig cfg)
    : images_(images), texts_(texts), cfg_(cfg) {
  if (images.dimension() != texts.dimension()) {
    throw DataError("image and text stores have different dimensions");
  }
}

double PairScorer::clip(const std::string& text_id, const std::string& image_id) const {
  return clip_score(texts_.at(text_id).vector, images_.at(image_id).vector, cfg_);
}

double PairScorer::ref_clip(const std::string& text_id, std::span<const std::string> reference_ids,
                            const std::string& image_id) const {
  std::vector<Eigen::VectorXf> refs;
  refs.reserve(reference_ids.size());
  for (const auto& id : reference_ids) refs.push_back(texts_.at(id).vector);
  return ref_clip_score(texts_.at(text_id).vector, refs, images_.at(image_id).vector, cfg_);
}

namespace {

template <typename Range, typename LangOf>
std::string common_language(const Range& records, LangOf lang_of) {
  std::string language;
  for (const auto& r : records) {
    const std::string& l = lang_of(r);
    if (language.empty()) {
      language = l;
    } else if (language != l) {
      return "mixed";
    }
  }
  return language;
}

void require_nonempty(const TaskReport& report) {
  if (report.overall.total == 0) throw DataError(report.task + ": empty task");
}

// NLI records grouped by (language, image), each carrying its precomputed score.
struct ScoredNli {
  NliLabel label;
  double score;
};

std::map<std::pair<std::string, std::string>, std::vector<ScoredNli>> group_nli(
    std::span<const NliRecord> records, const PairScorer& scorer) {
  std::map<std::pair<std::string, std::string>, std::vector<ScoredNli>> groups;
  for (const auto& r : records) {
    groups[{r.language, r.image_id}].push_back({r.label, scorer.clip(r.caption_id, r.image_id)});
  }
  return groups;
}

TaskReport nli_report(const char* name, std::span<const NliRecord> records) {
  TaskReport report;
  report.task = name;
  report.language = common_language(records, [](const NliRecord& r) -> const std::string& {
    return r.language;
  });
  return report;
}

struct ScoredTwoImage {
  bool label;
  double max_score;
  double min_score;
};

std::map<std::pair<std::string, std::string>, std::vector<ScoredTwoImage>> group_marvl(
    std::span<const TwoImageInstance> instances, const PairScorer& scorer) {
  std::map<std::pair<std::string, std::string>, std::vector<ScoredTwoImage>> groups;
  for (const auto& inst : instances) {
    const double left = scorer.clip(inst.caption_id, inst.image_left);
    const double right = scorer.clip(inst.caption_id, inst.image_right);
    groups[{inst.language, inst.group_id}].push_back(
        {inst.label, std::max(left, right), std::min(left, right)});
  }
  return groups;
}

TaskReport marvl_report(const char* name, std::span<const TwoImageInstance> instances) {
  TaskReport report;
  report.task = name;
  report.language = common_language(
      instances, [](const TwoImageInstance& r) -> const std::string& { return r.language; });
  return report;
}

}  // namespace

TaskReport valse_accuracy(std::span<const FoilRecord> foils, const PairScorer& scorer) {
  TaskReport report;
  report.task = "valse";
  report.language = common_language(foils, [](const FoilRecord& r) -> const std::string& {
    return r.language;
  });
  for (const auto& f : foils) {
    const bool ok = scorer.clip(f.caption_id, f.image_id) > scorer.clip(f.foil_id, f.image_id);
    report.breakdown[f.phenomenon].add(ok);
    report.overall.add(ok);
  }
  require_nonempty(report);
  double sum = 0.0;
  for (const auto& [phenomenon, acc] : report.breakdown) sum += acc.value();
  report.macro_average = sum / static_cast<double>(report.breakdown.size());
  return report;
}

TaskReport xvnli_task1(std::span<const NliRecord> records, const PairScorer& scorer) {
  TaskReport report = nli_report("xvnli_task1", records);
  for (const auto& [key, group] : group_nli(records, scorer)) {
    for (const auto& a : group) {
      if (a.label != NliLabel::contradiction) continue;
      for (const auto& b : group) {
        if (b.label != NliLabel::entailment) continue;
        const bool ok = b.score > a.score;
        report.breakdown[key.first].add(ok);
        report.overall.add(ok);
      }
    }
  }
  require_nonempty(report);
  return report;
}

TaskReport xvnli_task2(std::span<const NliRecord> records, const PairScorer& scorer) {
  TaskReport report = nli_report("xvnli_task2", records);
  for (const auto& [key, group] : group_nli(records, scorer)) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        const auto& a = group[i];
        const auto& b = group[j];
        if (a.label == b.label) continue;
        const bool a_higher_label = static_cast<int>(a.label) > static_cast<int>(b.label);
        const bool ok = a_higher_label ? a.score > b.score : b.score > a.score;
        report.breakdown[key.first].add(ok);
        report.overall.add(ok);
      }
    }
  }
  require_nonempty(report);
  return report;
}

TaskReport xvnli_task3(std::span<const NliRecord> records, const PairScorer& scorer) {
  TaskReport report = nli_report("xvnli_task3", records);
  for (const auto& [key, group] : group_nli(records, scorer)) {
    std::array<std::vector<double>, 3> by_label;
    for (const auto& r : group) by_label[static_cast<int>(r.label)].push_back(r.score);
    for (double e : by_label[2]) {
      for (double n : by_label[1]) {
        for (double c : by_label[0]) {
          const bool ok = e > n && n > c;
          report.breakdown[key.first].add(ok);
          report.overall.add(ok);
        }
      }
    }
  }
  require_nonempty(report);
  return report;
}

TaskReport marvl_task1(std::span<const TwoImageInstance> instances, const PairScorer& scorer) {
  TaskReport report = marvl_report("marvl_task1", instances);
  for (const auto& [key, group] : group_marvl(instances, scorer)) {
    const bool has_true = std::any_of(group.begin(), group.end(), [](auto& g) { return g.label; });
    const bool has_false =
        std::any_of(group.begin(), group.end(), [](auto& g) { return !g.label; });
    if (!has_true || !has_false) {
      ++report.skipped;
      continue;
    }
    for (const auto& t : group) {
      if (!t.label) continue;
      for (const auto& f : group) {
        if (f.label) continue;
        const bool ok = t.max_score > f.min_score;
        report.breakdown[key.first].add(ok);
        report.overall.add(ok);
      }
    }
  }
  require_nonempty(report);
  return report;
}

TaskReport marvl_task2(std::span<const TwoImageInstance> instances, const PairScorer& scorer) {
  TaskReport report = marvl_report("marvl_task2", instances);
  for (const auto& [key, group] : group_marvl(instances, scorer)) {
    const auto n_true = std::count_if(group.begin(), group.end(), [](auto& g) { return g.label; });
    if (group.size() != 4 || n_true != 2) {
      ++report.skipped;
      continue;
    }
    double weakest_true = std::numeric_limits<double>::infinity();
    double strongest_false = -std::numeric_limits<double>::infinity();
    for (const auto& g : group) {
      if (g.label) {
        weakest_true = std::min(weakest_true, g.max_score);
      } else {
        strongest_false = std::max(strongest_false, g.min_score);
      }
    }
    const bool ok = weakest_true > strongest_false;
    report.breakdown[key.first].add(ok);
    report.overall.add(ok);
  }
  require_nonempty(report);
  return report;
}

TaskReport pascal_pairwise(std::span<const PreferenceRecord> preferences,
                           const PairScorer& scorer, PairwiseMetric metric, std::uint64_t seed) {
  TaskReport report;
  report.task = metric == PairwiseMetric::clipscore ? "pascal_clipscore" : "pascal_refclipscore";
  report.language = "und";
  const std::uint64_t tie_seed = derive_seed(seed, "pascal");
  for (std::size_t i = 0; i < preferences.size(); ++i) {
    const auto& p = preferences[i];
    if (metric == PairwiseMetric::refclipscore && p.reference_ids.empty()) {
      throw UsageError("pascal instance " + std::to_string(i) +
                       " has no reference_ids but the metric is refclipscore");
    }
    if (p.votes_a == p.votes_b) {
      ++report.skipped;
      continue;
    }
    auto score = [&](const std::string& candidate) {
      return metric == PairwiseMetric::clipscore
                 ? scorer.clip(candidate, p.image_id)
                 : scorer.ref_clip(candidate, p.reference_ids, p.image_id);
    };
    const double a = score(p.candidate_a);
    const double b = score(p.candidate_b);
    const bool prefer_a = p.votes_a > p.votes_b;
    bool ok;
    if (a == b) {
      CounterRng rng(stream_seed(tie_seed, i));
      ok = rng.coin();
    } else {
      ok = prefer_a ? a > b : b > a;
    }
    report.breakdown[std::string(to_string(p.category))].add(ok);
    report.overall.add(ok);
  }
  require_nonempty(report);
  return report;
}

Heatmap language_heatmap(const std::map<std::string, std::vector<double>>& scores,
                         const std::map<std::string, std::vector<double>>& qe,
                         HeatmapMode mode) {
  if (scores.empty()) throw UsageError("heatmap needs at least one language");
  const std::size_t n = scores.begin()->second.size();
  for (const auto& [lang, v] : scores) {
    if (v.size() != n) {
      throw DataError("heatmap: language '" + lang + "' has " + std::to_string(v.size()) +
                      " instances, expected " + std::to_string(n));
    }
  }

  std::map<std::string, std::vector<bool>> masks;
  if (mode != HeatmapMode::all) {
    if (qe.empty()) throw UsageError("heatmap percentile modes require QE scores");
    const auto side = mode == HeatmapMode::bottom25 ? PercentileSide::below : PercentileSide::above;
    for (const auto& [lang, q] : qe) {
      if (!scores.contains(lang)) continue;
      if (q.size() != n) {
        throw DataError("heatmap: QE vector for '" + lang + "' is not aligned with its scores");
      }
      masks[lang] = qe_percentile_mask(q, 25.0, side);
    }
  }

  Heatmap map;
  for (const auto& [lang, v] : scores) map.languages.push_back(lang);
  const auto L = static_cast<Eigen::Index>(map.languages.size());
  map.values = Eigen::MatrixXd::Constant(L, L, std::numeric_limits<double>::quiet_NaN());

  for (Eigen::Index i = 0; i < L; ++i) {
    map.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < L; ++j) {
      const auto& li = map.languages[static_cast<std::size_t>(i)];
      const auto& lj = map.languages[static_cast<std::size_t>(j)];
      const auto& si = scores.at(li);
      const auto& sj = scores.at(lj);
      std::vector<double> xi, xj;
      const auto* mi = masks.contains(li) ? &masks.at(li) : nullptr;
      const auto* mj = masks.contains(lj) ? &masks.at(lj) : nullptr;
      if (mode != HeatmapMode::all && mi == nullptr && mj == nullptr) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (mi != nullptr && !(*mi)[k]) continue;
        if (mj != nullptr && !(*mj)[k]) continue;
        xi.push_back(si[k]);
        xj.push_back(sj[k]);
      }
      if (xi.size() < 3) continue;
      double r;
      try {
        r = pearson(xi, xj);
      } catch (const NumericError&) {
        continue;
      }
      map.values(i, j) = r;
      map.values(j, i) = r;
    }
  }
  return map;
}

void Heatmap::write_csv(std::ostream& out) const {
  out << "language";
  for (const auto& l : languages) out << ',' << csv::escape(l);
  out << '\n';
  for (std::size_t i = 0; i < languages.size(); ++i) {
    out << csv::escape(languages[i]);
    for (std::size_t j = 0; j < languages.size(); ++j) {
      out << ',';
      const double v = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!std::isnan(v)) out << csv::format_fixed(v);
    }
    out << '\n';
  }
}

}  // namespace capeval

#include "capeval/metric.hpp"

#include <istream>

#include "capeval/csv.hpp"
#include "capeval/parallel.hpp"

namespace capeval {

namespace {

const Eigen::VectorXf& resolve(const EmbeddingStore& store, const std::string& id,
                               const RatedPairRecord& pair, const char* role) {
  const EmbeddingRecord* record = store.find(id);
  if (record == nullptr) {
    throw DataError("instance '" + pair.instance_id + "': " + role + " id '" + id +
                    "' not found");
  }
  return record->vector;
}

}  // namespace

std::vector<ScoreRecord> score_dataset(std::span<const RatedPairRecord> pairs,
                                       const EmbeddingStore& images, const EmbeddingStore& texts,
                                       const ClipScoreConfig& cfg, unsigned jobs) {
  if (cfg.w <= 0.0) throw UsageError("rescale parameter w must be positive");
  if (images.dimension() != texts.dimension()) {
    throw DataError("image store dimension " + std::to_string(images.dimension()) +
                    " differs from text store dimension " + std::to_string(texts.dimension()));
  }
  std::vector<ScoreRecord> out(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const RatedPairRecord& pair = pairs[i];
    const auto& v = resolve(images, pair.image_id, pair, "image");
    const auto& c = resolve(texts, pair.candidate_id, pair, "candidate");
    ScoreRecord record{pair.instance_id, pair.language, clip_score(c, v, cfg), std::nullopt};
    if (!pair.reference_ids.empty()) {
      std::vector<const Eigen::VectorXf*> refs;
      refs.reserve(pair.reference_ids.size());
      for (const auto& ref_id : pair.reference_ids) {
        refs.push_back(&resolve(texts, ref_id, pair, "reference"));
      }
      double best = -1.0;
      for (const auto* r : refs) best = std::max(best, cosine(c, *r));
      record.refclipscore = harmonic_mean(record.clipscore, std::max(best, 0.0));
    }
    out[i] = std::move(record);
  });
  return out;
}

double corpus_mean(std::span<const double> values) {
  if (values.empty()) throw UsageError("corpus_mean of an empty set");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double corpus_mean(std::span<const ScoreRecord> records) {
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(r.clipscore);
  return corpus_mean(values);
}

void write_scores_csv(std::span<const ScoreRecord> records, std::ostream& out) {
  out << "instance_id,language,clipscore,refclipscore\n";
  for (const auto& r : records) {
    out << csv::escape(r.instance_id) << ',' << csv::escape(r.language) << ','
        << csv::format_fixed(r.clipscore) << ',';
    if (r.refclipscore) out << csv::format_fixed(*r.refclipscore);
    out << '\n';
  }
}

std::vector<ScoreRecord> read_scores_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != "instance_id,language,clipscore,refclipscore") {
    throw SchemaError(source + ": missing score CSV header");
  }
  std::vector<ScoreRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = csv::split_line(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != 4) throw SchemaError(where + "expected 4 columns");
    ScoreRecord r{fields[0], fields[1], 0.0, std::nullopt};
    try {
      r.clipscore = std::stod(fields[2]);
      if (!fields[3].empty()) r.refclipscore = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw SchemaError(where + "unparsable score");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace capeval

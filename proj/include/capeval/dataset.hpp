#ifndef CAPEVAL_DATASET_HPP
#define CAPEVAL_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capeval {

enum class Split { train, validation, test };

/// One metric/human-rating observation.
struct RatedPairRecord {
  std::string instance_id;
  std::string image_id;
  std::string candidate_id;
  std::vector<std::string> reference_ids;
  double rating = 0.0;
  std::string language;
  Split split = Split::test;
};

struct FoilRecord {
  std::string image_id;
  std::string caption_id;
  std::string foil_id;
  std::string phenomenon;
  std::string language;
};

/// Ordered by agreement with the image premise.
enum class NliLabel : int { contradiction = 0, neutral = 1, entailment = 2 };

struct NliRecord {
  std::string image_id;
  std::string caption_id;
  NliLabel label = NliLabel::neutral;
  std::string language;
};

struct TwoImageInstance {
  std::string group_id;
  std::string caption_id;
  std::string image_left;
  std::string image_right;
  bool label = false;
  std::string language;
};

enum class PreferenceCategory { HC, HI, HM, MM };

struct PreferenceRecord {
  std::string image_id;
  std::string candidate_a;
  std::string candidate_b;
  PreferenceCategory category = PreferenceCategory::HC;
  std::int64_t votes_a = 0;
  std::int64_t votes_b = 0;
  std::vector<std::string> reference_ids;
};

struct MtCandidate {
  std::string source_id;
  std::string target_language;
  std::string candidate_id;
  std::string text;
  bool lang_ok = false;
  double qe_score = 0.0;
};

/// Output of mt-select, also the QE input of the heatmap.
struct SelectedTranslation {
  std::string source_id;
  std::string language;
  std::string candidate_id;
  std::string text;
  double qe_score = 0.0;
};

std::string_view to_string(Split split);
std::string_view to_string(NliLabel label);
std::string_view to_string(PreferenceCategory category);

/// Loose BCP-47 shape check: alphanumeric subtags of 1-8 chars joined by '-'.
bool is_language_tag(std::string_view tag);

/// Reads newline-delimited JSON into records of type T. Blank lines are
/// skipped, unknown fields ignored; any other malformed line throws
/// SchemaError (or DataError for non-finite numbers) naming its 1-based line.
template <typename Record>
std::vector<Record> load_jsonl(const std::filesystem::path& path);

template <typename Record>
std::vector<Record> parse_jsonl(std::istream& in, const std::string& source = "<stream>");

/// Serializes one record as a single JSON line (no trailing newline).
std::string to_jsonl(const SelectedTranslation& record);
std::string to_jsonl(const MtCandidate& record);

}  // namespace capeval

#endif  // CAPEVAL_DATASET_HPP

#include "capeval/dataset.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "capeval/error.hpp"

namespace capeval {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "test";
}

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::contradiction: return "contradiction";
    case NliLabel::neutral: return "neutral";
    case NliLabel::entailment: return "entailment";
  }
  return "neutral";
}

std::string_view to_string(PreferenceCategory category) {
  switch (category) {
    case PreferenceCategory::HC: return "HC";
    case PreferenceCategory::HI: return "HI";
    case PreferenceCategory::HM: return "HM";
    case PreferenceCategory::MM: return "MM";
  }
  return "HC";
}

bool is_language_tag(std::string_view tag) {
  if (tag.empty()) return false;
  std::size_t run = 0;
  for (char ch : tag) {
    if (ch == '-') {
      if (run == 0) return false;
      run = 0;
    } else if (std::isalnum(static_cast<unsigned char>(ch)) != 0) {
      if (++run > 8) return false;
    } else {
      return false;
    }
  }
  return run > 0;
}

namespace {

// Field accessors raise SchemaError; the line number is attached by the caller.
const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(std::string("missing required field \"") + name + "\"");
  return *it;
}

std::string get_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) throw SchemaError(std::string("field \"") + name + "\" must be a string");
  return v.get<std::string>();
}

double get_number(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number()) throw SchemaError(std::string("field \"") + name + "\" must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw DataError(std::string("field \"") + name + "\" is not finite");
  return x;
}

std::int64_t get_integer(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_integer()) {
    throw SchemaError(std::string("field \"") + name + "\" must be an integer");
  }
  return v.get<std::int64_t>();
}

bool get_bool(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_boolean()) throw SchemaError(std::string("field \"") + name + "\" must be a boolean");
  return v.get<bool>();
}

std::vector<std::string> get_string_list(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_array()) throw SchemaError(std::string("field \"") + name + "\" must be an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& item : v) {
    if (!item.is_string()) {
      throw SchemaError(std::string("field \"") + name + "\" must contain strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string get_language(const json& obj, const char* name) {
  std::string tag = get_string(obj, name);
  if (!is_language_tag(tag)) {
    throw SchemaError(std::string("field \"") + name + "\" is not a language tag: " + tag);
  }
  return tag;
}

template <typename Record>
Record parse_record(const json& obj);

template <>
RatedPairRecord parse_record<RatedPairRecord>(const json& obj) {
  RatedPairRecord r;
  r.instance_id = get_string(obj, "instance_id");
  r.image_id = get_string(obj, "image_id");
  r.candidate_id = get_string(obj, "candidate_id");
  r.reference_ids = get_string_list(obj, "reference_ids");
  r.rating = get_number(obj, "rating");
  r.language = get_language(obj, "language");
  const std::string split = get_string(obj, "split");
  if (split == "train") {
    r.split = Split::train;
  } else if (split == "validation") {
    r.split = Split::validation;
  } else if (split == "test") {
    r.split = Split::test;
  } else {
    throw SchemaError("field \"split\" must be train, validation or test");
  }
  return r;
}

template <>
FoilRecord parse_record<FoilRecord>(const json& obj) {
  return FoilRecord{get_string(obj, "image_id"), get_string(obj, "caption_id"),
                    get_string(obj, "foil_id"), get_string(obj, "phenomenon"),
                    get_language(obj, "language")};
}

template <>
NliRecord parse_record<NliRecord>(const json& obj) {
  NliRecord r;
  r.image_id = get_string(obj, "image_id");
  r.caption_id = get_string(obj, "caption_id");
  const std::string label = get_string(obj, "label");
  if (label == "contradiction") {
    r.label = NliLabel::contradiction;
  } else if (label == "neutral") {
    r.label = NliLabel::neutral;
  } else if (label == "entailment") {
    r.label = NliLabel::entailment;
  } else {
    throw SchemaError("field \"label\" must be contradiction, neutral or entailment");
  }
  r.language = get_language(obj, "language");
  return r;
}

template <>
TwoImageInstance parse_record<TwoImageInstance>(const json& obj) {
  return TwoImageInstance{get_string(obj, "group_id"),   get_string(obj, "caption_id"),
                          get_string(obj, "image_left"), get_string(obj, "image_right"),
                          get_bool(obj, "label"),        get_language(obj, "language")};
}

template <>
PreferenceRecord parse_record<PreferenceRecord>(const json& obj) {
  PreferenceRecord r;
  r.image_id = get_string(obj, "image_id");
  r.candidate_a = get_string(obj, "candidate_a");
  r.candidate_b = get_string(obj, "candidate_b");
  const std::string category = get_string(obj, "category");
  if (category == "HC") {
    r.category = PreferenceCategory::HC;
  } else if (category == "HI") {
    r.category = PreferenceCategory::HI;
  } else if (category == "HM") {
    r.category = PreferenceCategory::HM;
  } else if (category == "MM") {
    r.category = PreferenceCategory::MM;
  } else {
    throw SchemaError("field \"category\" must be one of HC, HI, HM, MM");
  }
  r.votes_a = get_integer(obj, "votes_a");
  r.votes_b = get_integer(obj, "votes_b");
  r.reference_ids = get_string_list(obj, "reference_ids");
  return r;
}

template <>
MtCandidate parse_record<MtCandidate>(const json& obj) {
  return MtCandidate{get_string(obj, "source_id"),    get_language(obj, "target_language"),
                     get_string(obj, "candidate_id"), get_string(obj, "text"),
                     get_bool(obj, "lang_ok"),        get_number(obj, "qe_score")};
}

template <>
SelectedTranslation parse_record<SelectedTranslation>(const json& obj) {
  return SelectedTranslation{get_string(obj, "source_id"), get_language(obj, "language"),
                             get_string(obj, "candidate_id"), get_string(obj, "text"),
                             get_number(obj, "qe_score")};
}

bool is_blank(const std::string& line) {
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch)) == 0) return false;
  }
  return true;
}

}  // namespace

template <typename Record>
std::vector<Record> parse_jsonl(std::istream& in, const std::string& source) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(where + "invalid JSON (" + e.what() + ")");
    } catch (const json::out_of_range& e) {
      throw DataError(where + "number out of range (" + e.what() + ")");
    }
    if (!obj.is_object()) throw SchemaError(where + "expected a JSON object");
    try {
      records.push_back(parse_record<Record>(obj));
    } catch (const SchemaError& e) {
      throw SchemaError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return records;
}

template <typename Record>
std::vector<Record> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": file not found or unreadable");
  return parse_jsonl<Record>(in, path.string());
}

#define CAPEVAL_INSTANTIATE_JSONL(Record)                                                   \
  template std::vector<Record> parse_jsonl<Record>(std::istream&, const std::string&);     \
  template std::vector<Record> load_jsonl<Record>(const std::filesystem::path&);

CAPEVAL_INSTANTIATE_JSONL(RatedPairRecord)
CAPEVAL_INSTANTIATE_JSONL(FoilRecord)
CAPEVAL_INSTANTIATE_JSONL(NliRecord)
CAPEVAL_INSTANTIATE_JSONL(TwoImageInstance)
CAPEVAL_INSTANTIATE_JSONL(PreferenceRecord)
CAPEVAL_INSTANTIATE_JSONL(MtCandidate)
CAPEVAL_INSTANTIATE_JSONL(SelectedTranslation)

#undef CAPEVAL_INSTANTIATE_JSONL

std::string to_jsonl(const SelectedTranslation& record) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  obj["source_id"] = record.source_id;
  obj["language"] = record.language;
  obj["candidate_id"] = record.candidate_id;
  obj["text"] = record.text;
  obj["qe_score"] = record.qe_score;
  return obj.dump();
}

std::string to_jsonl(const MtCandidate& record) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  obj["source_id"] = record.source_id;
  obj["target_language"] = record.target_language;
  obj["candidate_id"] = record.candidate_id;
  obj["text"] = record.text;
  obj["lang_ok"] = record.lang_ok;
  obj["qe_score"] = record.qe_score;
  return obj.dump();
}

}  // namespace capeval

#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "capeval/adapter.hpp"
#include "capeval/csv.hpp"
#include "capeval/dataset.hpp"
#include "capeval/embedding_store.hpp"
#include "capeval/error.hpp"
#include "capeval/metric.hpp"
#include "capeval/mt_select.hpp"
#include "capeval/parallel.hpp"
#include "capeval/random.hpp"
#include "capeval/rank_correlation.hpp"
#include "capeval/resampling.hpp"
#include "capeval/tasks.hpp"

#ifndef CAPEVAL_VERSION
#define CAPEVAL_VERSION "dev"
#endif

namespace capeval::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": file not found or unreadable");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::string out_dir = ".";
  double w = 2.5;

  unsigned workers() const { return jobs == 0 ? default_jobs() : jobs; }
  ClipScoreConfig clip() const { return ClipScoreConfig{w}; }
};

/// Collects what a run read and wrote; serialized next to the outputs.
class RunManifest {
 public:
  RunManifest(std::string subcommand, const GlobalOptions& g)
      : subcommand_(std::move(subcommand)), seed_(g.seed), out_dir_(g.out_dir) {
    config_["w"] = g.w;
  }

  void input(const std::string& name, const std::string& path) { inputs_[name] = path; }
  template <typename T>
  void config(const std::string& key, const T& value) {
    config_[key] = value;
  }

  fs::path output_path(const std::string& file) {
    outputs_.push_back(file);
    return fs::path(out_dir_) / file;
  }

  void write() const {
    ojson j;
    j["subcommand"] = subcommand_;
    j["inputs"] = inputs_;
    j["config"] = config_;
    j["seed"] = seed_;
    j["tool_version"] = CAPEVAL_VERSION;
    ojson digests = ojson::object();
    for (const auto& file : outputs_) digests[file] = sha256_file(fs::path(out_dir_) / file);
    j["outputs"] = digests;
    std::string name = subcommand_;
    std::replace(name.begin(), name.end(), ' ', '_');
    const fs::path path = fs::path(out_dir_) / (name + ".manifest.json");
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << j.dump(2) << '\n';
  }

 private:
  std::string subcommand_;
  std::uint64_t seed_;
  std::string out_dir_;
  ojson inputs_ = ojson::object();
  ojson config_ = ojson::object();
  std::vector<std::string> outputs_;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  return out;
}

std::string pct(double value) { return csv::format_fixed(100.0 * value, 1); }

void ensure_out_dir(const GlobalOptions& g) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw IoError(g.out_dir + ": cannot create output directory");
}

// ---------------------------------------------------------------- score

struct ScoreOptions {
  std::string images, texts, pairs;
};

void cmd_score(const GlobalOptions& g, const ScoreOptions& o, std::ostream& out) {
  const EmbeddingStore images = load_store(o.images);
  const EmbeddingStore texts = load_store(o.texts);
  const auto pairs = load_jsonl<RatedPairRecord>(o.pairs);
  if (pairs.empty()) throw DataError(o.pairs + ": no rated pairs");
  const auto records = score_dataset(pairs, images, texts, g.clip(), g.workers());

  ensure_out_dir(g);
  RunManifest manifest("score", g);
  manifest.input("images", o.images);
  manifest.input("texts", o.texts);
  manifest.input("pairs", o.pairs);
  {
    auto csv_out = open_output(manifest.output_path("scores.csv"));
    write_scores_csv(records, csv_out);
  }
  manifest.write();

  out << "instances: " << records.size() << '\n';
  out << "corpus clipscore: " << csv::format_fixed(corpus_mean(records)) << '\n';
  std::vector<double> refs;
  for (const auto& r : records) {
    if (r.refclipscore) refs.push_back(*r.refclipscore);
  }
  if (!refs.empty()) {
    out << "corpus refclipscore: " << csv::format_fixed(corpus_mean(refs)) << " (" << refs.size()
        << " instances with references)\n";
  }
}

// ---------------------------------------------------------------- correlate

struct CorrelateOptions {
  std::string scores, pairs;
  std::string metric = "clipscore";
  std::optional<std::int64_t> m;
  bool per_language = false;
  bool bootstrap = false;
  std::size_t boot_iters = 1000;
  double boot_frac = 0.8;
  std::string strata = "rating_value";
};

std::vector<ScoreRecord> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": file not found or unreadable");
  return read_scores_csv(in, path);
}

using InstanceKey = std::pair<std::string, std::string>;  // (instance_id, language)

std::map<InstanceKey, const ScoreRecord*> index_scores(const std::vector<ScoreRecord>& scores) {
  std::map<InstanceKey, const ScoreRecord*> index;
  for (const auto& s : scores) {
    if (!index.emplace(InstanceKey{s.instance_id, s.language}, &s).second) {
      throw DataError("duplicate score row for instance '" + s.instance_id + "' (" + s.language +
                      ")");
    }
  }
  return index;
}

struct Observations {
  std::vector<RatedPairRecord> records;
  std::vector<double> scores;
  std::vector<double> ratings;
};

void cmd_correlate(const GlobalOptions& g, const CorrelateOptions& o, std::ostream& out) {
  if (o.metric != "clipscore" && o.metric != "refclipscore") {
    throw UsageError("--metric must be clipscore or refclipscore");
  }
  const auto scores = read_scores(o.scores);
  const auto index = index_scores(scores);
  const auto pairs = load_jsonl<RatedPairRecord>(o.pairs);

  std::map<std::string, Observations> groups;
  for (const auto& p : pairs) {
    auto it = index.find({p.instance_id, p.language});
    if (it == index.end()) {
      throw DataError("no score for instance '" + p.instance_id + "' (" + p.language + ")");
    }
    double value = it->second->clipscore;
    if (o.metric == "refclipscore") {
      if (!it->second->refclipscore) {
        throw DataError("instance '" + p.instance_id + "' has no refclipscore");
      }
      value = *it->second->refclipscore;
    }
    auto& obs = groups[o.per_language ? p.language : std::string("all")];
    obs.records.push_back(p);
    obs.scores.push_back(value);
    obs.ratings.push_back(p.rating);
  }
  if (groups.empty()) throw DataError(o.pairs + ": no rated pairs");

  BootstrapConfig boot;
  boot.iterations = o.boot_iters;
  boot.fraction = o.boot_frac;
  boot.seed = derive_seed(g.seed, "bootstrap");
  boot.strata_key = parse_strata_key(o.strata);

  ojson report_json = ojson::object();
  report_json["metric"] = o.metric;
  ojson rows = ojson::array();

  out << std::left << std::setw(10) << "language" << std::right << std::setw(7) << "n"
      << std::setw(8) << "rho" << std::setw(8) << "tau_b" << std::setw(8) << "tau_c";
  if (o.bootstrap) out << std::setw(8) << "sd_rho" << std::setw(8) << "sd_tb" << std::setw(8) << "sd_tc";
  out << '\n';

  double sum_rho = 0.0, sum_tb = 0.0, sum_tc = 0.0;
  for (const auto& [language, obs] : groups) {
    const CorrelationReport rep = correlate(obs.scores, obs.ratings, o.m);
    ojson row;
    row["language"] = language;
    row["report"] = ojson::parse(rep.to_json());
    out << std::left << std::setw(10) << language << std::right << std::setw(7) << rep.n
        << std::setw(8) << pct(rep.rho) << std::setw(8) << pct(rep.tau_b) << std::setw(8)
        << pct(rep.tau_c);
    if (o.bootstrap) {
      const std::int64_t m = rep.m;
      auto run_stat = [&](auto&& fn) {
        return bootstrap_std(
            obs.records,
            [&](std::span<const std::size_t> subset) {
              std::vector<double> x, y;
              x.reserve(subset.size());
              y.reserve(subset.size());
              for (std::size_t i : subset) {
                x.push_back(obs.scores[i]);
                y.push_back(obs.ratings[i]);
              }
              return fn(x, y);
            },
            boot, g.workers());
      };
      const auto b_rho = run_stat([](auto& x, auto& y) { return spearman(x, y); });
      const auto b_tb = run_stat([](auto& x, auto& y) { return kendall_tau_b(x, y).tau_b; });
      const auto b_tc = run_stat([m](auto& x, auto& y) { return kendall_tau_c(x, y, m); });
      row["bootstrap"] = {{"iterations", boot.iterations},
                          {"fraction", boot.fraction},
                          {"strata", o.strata},
                          {"rho", {{"mean", b_rho.mean}, {"std", b_rho.std}}},
                          {"tau_b", {{"mean", b_tb.mean}, {"std", b_tb.std}}},
                          {"tau_c", {{"mean", b_tc.mean}, {"std", b_tc.std}}}};
      out << std::setw(8) << pct(b_rho.std) << std::setw(8) << pct(b_tb.std) << std::setw(8)
          << pct(b_tc.std);
    }
    out << '\n';
    rows.push_back(std::move(row));
    sum_rho += rep.rho;
    sum_tb += rep.tau_b;
    sum_tc += rep.tau_c;
  }
  report_json["reports"] = std::move(rows);
  if (o.per_language) {
    const double k = static_cast<double>(groups.size());
    report_json["macro_average"] = {{"rho", sum_rho / k}, {"tau_b", sum_tb / k}, {"tau_c", sum_tc / k}};
    out << std::left << std::setw(10) << "macro" << std::right << std::setw(7) << "" << std::setw(8)
        << pct(sum_rho / k) << std::setw(8) << pct(sum_tb / k) << std::setw(8) << pct(sum_tc / k)
        << '\n';
  }

  ensure_out_dir(g);
  RunManifest manifest("correlate", g);
  manifest.input("scores", o.scores);
  manifest.input("pairs", o.pairs);
  manifest.config("metric", o.metric);
  manifest.config("per_language", o.per_language);
  manifest.config("bootstrap", o.bootstrap);
  if (o.bootstrap) {
    manifest.config("boot_iters", o.boot_iters);
    manifest.config("boot_frac", o.boot_frac);
    manifest.config("strata", o.strata);
  }
  if (o.m) manifest.config("m", *o.m);
  {
    auto json_out = open_output(manifest.output_path("correlation.json"));
    json_out << report_json.dump(2) << '\n';
  }
  manifest.write();
}

// ---------------------------------------------------------------- task

struct TaskOptions {
  std::string images, texts, data;
  std::string metric = "clipscore";
};

template <typename Record>
std::map<std::string, std::vector<Record>> by_language(const std::vector<Record>& records) {
  std::map<std::string, std::vector<Record>> out;
  for (const auto& r : records) out[r.language].push_back(r);
  return out;
}

void emit_task_reports(const GlobalOptions& g, const TaskOptions& o, const std::string& name,
                       const std::vector<TaskReport>& reports, std::ostream& out) {
  ojson arr = ojson::array();
  for (const auto& r : reports) {
    arr.push_back(ojson::parse(r.to_json()));
    out << std::left << std::setw(22) << r.task << std::setw(8) << r.language << std::right
        << std::setw(7) << pct(r.overall.value()) << "  (" << r.overall.correct << '/'
        << r.overall.total << ")";
    if (r.skipped > 0) out << "  skipped " << r.skipped;
    if (r.macro_average) out << "  macro " << pct(*r.macro_average);
    out << '\n';
  }
  ensure_out_dir(g);
  RunManifest manifest("task " + name, g);
  manifest.input("images", o.images);
  manifest.input("texts", o.texts);
  manifest.input("data", o.data);
  if (name == "pascal") manifest.config("metric", o.metric);
  {
    auto json_out = open_output(manifest.output_path("task_" + name + ".json"));
    json_out << arr.dump(2) << '\n';
  }
  manifest.write();
}

void cmd_task(const GlobalOptions& g, const TaskOptions& o, const std::string& name,
              std::ostream& out) {
  const EmbeddingStore images = load_store(o.images);
  const EmbeddingStore texts = load_store(o.texts);
  const PairScorer scorer(images, texts, g.clip());
  std::vector<TaskReport> reports;

  if (name == "valse") {
    const auto data = load_jsonl<FoilRecord>(o.data);
    for (const auto& [lang, recs] : by_language(data)) reports.push_back(valse_accuracy(recs, scorer));
  } else if (name == "xvnli") {
    const auto data = load_jsonl<NliRecord>(o.data);
    for (const auto& [lang, recs] : by_language(data)) {
      reports.push_back(xvnli_task1(recs, scorer));
      reports.push_back(xvnli_task2(recs, scorer));
      reports.push_back(xvnli_task3(recs, scorer));
    }
  } else if (name == "marvl") {
    const auto data = load_jsonl<TwoImageInstance>(o.data);
    for (const auto& [lang, recs] : by_language(data)) {
      reports.push_back(marvl_task1(recs, scorer));
      reports.push_back(marvl_task2(recs, scorer));
    }
  } else if (name == "pascal") {
    PairwiseMetric metric;
    if (o.metric == "clipscore") {
      metric = PairwiseMetric::clipscore;
    } else if (o.metric == "refclipscore") {
      metric = PairwiseMetric::refclipscore;
    } else {
      throw UsageError("--metric must be clipscore or refclipscore");
    }
    const auto data = load_jsonl<PreferenceRecord>(o.data);
    reports.push_back(pascal_pairwise(data, scorer, metric, g.seed));
  }
  if (reports.empty()) throw DataError(o.data + ": empty task");
  emit_task_reports(g, o, name, reports, out);
}

// ---------------------------------------------------------------- heatmap

struct HeatmapOptions {
  std::string scores;
  std::string qe;
  std::string mode = "all";
};

void cmd_heatmap(const GlobalOptions& g, const HeatmapOptions& o, std::ostream& out) {
  HeatmapMode mode;
  if (o.mode == "all") {
    mode = HeatmapMode::all;
  } else if (o.mode == "bottom25") {
    mode = HeatmapMode::bottom25;
  } else if (o.mode == "top25") {
    mode = HeatmapMode::top25;
  } else {
    throw UsageError("--mode must be all, bottom25 or top25");
  }
  if (mode != HeatmapMode::all && o.qe.empty()) {
    throw UsageError("--mode " + o.mode + " requires --qe");
  }

  const auto scores = read_scores(o.scores);
  // Instance order comes from the first language's rows; every language must
  // cover exactly the same instance ids.
  std::map<std::string, std::map<std::string, double>> by_lang;
  std::vector<std::string> instance_order;
  std::set<std::string> seen;
  for (const auto& s : scores) {
    if (!by_lang[s.language].emplace(s.instance_id, s.clipscore).second) {
      throw DataError("duplicate score row for instance '" + s.instance_id + "' (" + s.language +
                      ")");
    }
    if (seen.insert(s.instance_id).second) instance_order.push_back(s.instance_id);
  }
  std::map<std::string, std::vector<double>> table;
  for (const auto& [lang, values] : by_lang) {
    if (values.size() != instance_order.size()) {
      throw DataError("heatmap: language '" + lang + "' does not cover every instance");
    }
    auto& column = table[lang];
    for (const auto& id : instance_order) column.push_back(values.at(id));
  }

  std::map<std::string, std::vector<double>> qe_table;
  if (!o.qe.empty()) {
    const auto selected = load_jsonl<SelectedTranslation>(o.qe);
    std::map<std::string, std::map<std::string, double>> qe_by_lang;
    for (const auto& s : selected) qe_by_lang[s.language][s.source_id] = s.qe_score;
    for (const auto& [lang, values] : qe_by_lang) {
      if (!table.contains(lang)) continue;
      auto& column = qe_table[lang];
      for (const auto& id : instance_order) {
        auto it = values.find(id);
        if (it == values.end()) {
          throw DataError("heatmap: no QE score for instance '" + id + "' in '" + lang + "'");
        }
        column.push_back(it->second);
      }
    }
  }

  const Heatmap map = language_heatmap(table, qe_table, mode);
  ensure_out_dir(g);
  RunManifest manifest("heatmap", g);
  manifest.input("scores", o.scores);
  if (!o.qe.empty()) manifest.input("qe", o.qe);
  manifest.config("mode", o.mode);
  const std::string file = "heatmap_" + o.mode + ".csv";
  {
    auto csv_out = open_output(manifest.output_path(file));
    map.write_csv(csv_out);
  }
  manifest.write();
  map.write_csv(out);
}

// ---------------------------------------------------------------- mt-select

struct MtSelectOptions {
  std::string candidates;
};

void cmd_mt_select(const GlobalOptions& g, const MtSelectOptions& o, std::ostream& out) {
  const auto candidates = load_jsonl<MtCandidate>(o.candidates);
  const SelectionResult result = select_best(candidates);
  ensure_out_dir(g);
  RunManifest manifest("mt-select", g);
  manifest.input("candidates", o.candidates);
  {
    auto sel = open_output(manifest.output_path("selected.jsonl"));
    for (const auto& c : result.selected) sel << to_jsonl(to_selected(c)) << '\n';
    auto drop = open_output(manifest.output_path("dropped.jsonl"));
    for (const auto& d : result.dropped) drop << d.to_jsonl() << '\n';
  }
  manifest.write();
  out << "selected: " << result.selected.size() << "\ndropped: " << result.dropped.size() << '\n';
}

// ---------------------------------------------------------------- finetune

struct FinetuneOptions {
  std::string images, texts;
  std::string contrastive_pairs, rated_pairs;
  std::string loss = "combined";
  std::string split;
  double lr = 1e-3;
  int epochs = 5;
  std::size_t batch_size = 32;
  double contrastive_weight = 1.0;
  double pearson_weight = 1.0;
  bool pearson_raw_cos = false;
  double tau_init = 0.07;
  bool export_stores = false;
};

std::vector<RatedPairRecord> load_pairs_for_training(const std::string& path,
                                                     const std::string& split) {
  auto records = load_jsonl<RatedPairRecord>(path);
  if (!split.empty()) {
    std::erase_if(records, [&](const RatedPairRecord& r) { return to_string(r.split) != split; });
  }
  return records;
}

void cmd_finetune(const GlobalOptions& g, const FinetuneOptions& o, std::ostream& out) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = derive_seed(g.seed, "finetune");
  cfg.loss_mode = parse_loss_mode(o.loss);
  cfg.contrastive_weight = o.contrastive_weight;
  cfg.pearson_weight = o.pearson_weight;
  cfg.pearson_raw_cos = o.pearson_raw_cos;
  cfg.clip = g.clip();

  const EmbeddingStore images = load_store(o.images);
  const EmbeddingStore texts = load_store(o.texts);
  if (images.dimension() != texts.dimension()) throw DataError("store dimensions differ");

  ContrastiveBatch contrastive;
  PearsonBatch rated;
  if (cfg.loss_mode != LossMode::pearson_only) {
    if (o.contrastive_pairs.empty()) throw UsageError("--contrastive-pairs is required");
    const auto recs = load_pairs_for_training(o.contrastive_pairs, o.split);
    std::vector<std::string> img_ids, txt_ids;
    for (const auto& r : recs) {
      img_ids.push_back(r.image_id);
      txt_ids.push_back(r.candidate_id);
    }
    contrastive = {gather_rows(images, img_ids), gather_rows(texts, txt_ids)};
  }
  if (cfg.loss_mode != LossMode::contrastive_only) {
    if (o.rated_pairs.empty()) throw UsageError("--rated-pairs is required");
    const auto recs = load_pairs_for_training(o.rated_pairs, o.split);
    std::vector<std::string> img_ids, txt_ids;
    rated.ratings.resize(static_cast<Eigen::Index>(recs.size()));
    for (std::size_t k = 0; k < recs.size(); ++k) {
      img_ids.push_back(recs[k].image_id);
      txt_ids.push_back(recs[k].candidate_id);
      rated.ratings[static_cast<Eigen::Index>(k)] = recs[k].rating;
    }
    rated.images = gather_rows(images, img_ids);
    rated.texts = gather_rows(texts, txt_ids);
  }

  const TrainResult result =
      train(AdapterState::identity(images.dimension(), o.tau_init), contrastive, rated, cfg);

  ensure_out_dir(g);
  RunManifest manifest("finetune", g);
  manifest.input("images", o.images);
  manifest.input("texts", o.texts);
  if (!o.contrastive_pairs.empty()) manifest.input("contrastive_pairs", o.contrastive_pairs);
  if (!o.rated_pairs.empty()) manifest.input("rated_pairs", o.rated_pairs);
  manifest.config("loss", o.loss);
  manifest.config("lr", o.lr);
  manifest.config("epochs", o.epochs);
  manifest.config("batch_size", o.batch_size);
  manifest.config("contrastive_weight", o.contrastive_weight);
  manifest.config("pearson_weight", o.pearson_weight);
  manifest.config("pearson_raw_cos", o.pearson_raw_cos);
  manifest.config("tau_init", o.tau_init);
  if (!o.split.empty()) manifest.config("split", o.split);

  save_checkpoint(result.state, manifest.output_path("adapter.ckpt"));
  {
    auto curve = open_output(manifest.output_path("loss_curve.csv"));
    write_loss_curve_csv(result.curve, curve);
  }
  if (o.export_stores) {
    save_store(export_adapted_store(result.state, images),
               manifest.output_path("adapted_images.capevec"));
    save_store(export_adapted_store(result.state, texts),
               manifest.output_path("adapted_texts.capevec"));
  }
  manifest.write();

  for (const auto& e : result.epochs) {
    out << "epoch " << e.epoch << ": updates " << e.updates;
    if (!std::isnan(e.mean_contrastive)) out << "  L_C " << csv::format_fixed(e.mean_contrastive);
    if (!std::isnan(e.mean_pearson)) out << "  L_P " << csv::format_fixed(e.mean_pearson);
    if (e.skipped > 0) out << "  skipped " << e.skipped;
    out << '\n';
  }
  out << "tau: " << csv::format_fixed(result.state.tau()) << "  steps: " << result.state.step
      << '\n';
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kNumeric;
  if (dynamic_cast<const DataError*>(&e) != nullptr ||
      dynamic_cast<const CorruptionError*>(&e) != nullptr) {
    return kData;
  }
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Embedding-based evaluation of multilingual image-captioning metrics", "capeval"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = available parallelism)");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifests");
  app.add_option("--w", g.w, "CLIPScore rescale parameter")->check(CLI::PositiveNumber);

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Compute CLIPScore/RefCLIPScore per instance");
  score_cmd->add_option("--images", score.images, "Image embedding store")->required();
  score_cmd->add_option("--texts", score.texts, "Text embedding store")->required();
  score_cmd->add_option("--pairs", score.pairs, "Rated-pair JSONL")->required();

  CorrelateOptions corr;
  auto* corr_cmd = app.add_subcommand("correlate", "Rank correlation with human ratings");
  corr_cmd->add_option("--scores", corr.scores, "Score CSV from `score`")->required();
  corr_cmd->add_option("--pairs", corr.pairs, "Rated-pair JSONL")->required();
  corr_cmd->add_option("--metric", corr.metric, "clipscore or refclipscore");
  corr_cmd->add_option("--m", corr.m, "Rating-scale cardinality for tau_c");
  corr_cmd->add_flag("--per-language", corr.per_language, "One report per language plus macro row");
  corr_cmd->add_flag("--bootstrap", corr.bootstrap, "Stratified bootstrap standard deviations");
  corr_cmd->add_option("--boot-iters", corr.boot_iters, "Bootstrap iterations")->check(CLI::PositiveNumber);
  corr_cmd->add_option("--boot-frac", corr.boot_frac, "Fraction drawn per stratum");
  corr_cmd->add_option("--strata", corr.strata, "rating_value, language or none");

  TaskOptions task;
  std::string task_name;
  auto* task_cmd = app.add_subcommand("task", "Classification-style evaluations");
  task_cmd->require_subcommand(1);
  task_cmd->fallthrough();
  for (const char* name : {"valse", "xvnli", "marvl", "pascal"}) {
    auto* sub = task_cmd->add_subcommand(name);
    sub->fallthrough();
    sub->add_option("--images", task.images, "Image embedding store")->required();
    sub->add_option("--texts", task.texts, "Text embedding store")->required();
    sub->add_option("--data", task.data, "Task JSONL")->required();
    if (std::string(name) == "pascal") {
      sub->add_option("--metric", task.metric, "clipscore or refclipscore");
    }
    sub->callback([&task_name, name] { task_name = name; });
  }

  HeatmapOptions heat;
  auto* heat_cmd = app.add_subcommand("heatmap", "Cross-language Pearson matrix");
  heat_cmd->add_option("--scores", heat.scores, "Score CSV from `score`")->required();
  heat_cmd->add_option("--qe", heat.qe, "Selected-translation JSONL with QE scores");
  heat_cmd->add_option("--mode", heat.mode, "all, bottom25 or top25");

  MtSelectOptions mt;
  auto* mt_cmd = app.add_subcommand("mt-select", "Pick the best-QE translation per source");
  mt_cmd->add_option("--candidates", mt.candidates, "mt-candidate JSONL")->required();

  FinetuneOptions ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Train a linear embedding adapter");
  ft_cmd->add_option("--images", ft.images, "Image embedding store")->required();
  ft_cmd->add_option("--texts", ft.texts, "Text embedding store")->required();
  ft_cmd->add_option("--contrastive-pairs", ft.contrastive_pairs, "Pairs for the contrastive loss");
  ft_cmd->add_option("--rated-pairs", ft.rated_pairs, "Rated pairs for the Pearson loss");
  ft_cmd->add_option("--loss", ft.loss, "contrastive, pearson or combined");
  ft_cmd->add_option("--split", ft.split, "Only use records from this split");
  ft_cmd->add_option("--lr", ft.lr, "SGD learning rate");
  ft_cmd->add_option("--epochs", ft.epochs, "Training epochs");
  ft_cmd->add_option("--batch-size", ft.batch_size, "Batch size per task");
  ft_cmd->add_option("--contrastive-weight", ft.contrastive_weight, "Contrastive gradient weight");
  ft_cmd->add_option("--pearson-weight", ft.pearson_weight, "Pearson gradient weight");
  ft_cmd->add_flag("--pearson-raw-cos", ft.pearson_raw_cos, "Use w*cos instead of clamped CLIPScore");
  ft_cmd->add_option("--tau-init", ft.tau_init, "Initial temperature");
  ft_cmd->add_flag("--export", ft.export_stores, "Also write adapted embedding stores");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "capeval: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*score_cmd) {
      cmd_score(g, score, out);
    } else if (*corr_cmd) {
      cmd_correlate(g, corr, out);
    } else if (*task_cmd) {
      cmd_task(g, task, task_name, out);
    } else if (*heat_cmd) {
      cmd_heatmap(g, heat, out);
    } else if (*mt_cmd) {
      cmd_mt_select(g, mt, out);
    } else if (*ft_cmd) {
      cmd_finetune(g, ft, out);
    }
  } catch (const std::exception& e) {
    err << "capeval: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace capeval::cli

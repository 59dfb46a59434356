#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "capeval/embedding_store.hpp"
#include "commands.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace capeval;

namespace {

const fs::path kToy = fs::path(CAPEVAL_TEST_DATA_DIR) / "toy";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "capeval");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("capeval_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string toy(const std::string& f) { return (kToy / f).string(); }

std::vector<std::string> score_args(const std::string& out_dir) {
  return {"score", "--images", toy("images.capevec"), "--texts", toy("texts.capevec"),
          "--pairs", toy("pairs.jsonl"), "--out-dir", out_dir};
}

// Ratings that rise with the caption's cosine to its image: every correlation is 1.
void write_ordered_bundle(const TempDir& dir, int n) {
  std::mt19937_64 gen(9);
  EmbeddingStore images(6), texts(6);
  std::ofstream pairs(dir / "pairs.jsonl");
  for (int i = 0; i < n; ++i) {
    const auto k = std::to_string(i);
    const Eigen::VectorXf v = testing_support::random_unit(gen, 6);
    images.add("img" + k, v, Modality::image);
    texts.add("cap" + k, testing_support::with_cosine(gen, v, 0.1 + 0.8 * i / n), Modality::text);
    pairs << R"({"instance_id":"i)" << k << R"(","image_id":"img)" << k << R"(","candidate_id":"cap)" << k
          << R"(","reference_ids":[],"rating":)" << i << R"(,"language":")" << (i % 2 ? "en" : "de")
          << R"(","split":"test"})" << '\n';
  }
  save_store(images, dir / "images.capevec");
  save_store(texts, dir / "texts.capevec");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    TempDir dir("codes");
    auto r = run({"score", "--images", dir / "missing.capevec", "--texts", toy("texts.capevec"), "--pairs",
                  toy("pairs.jsonl"), "--out-dir", dir.path.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("file not found") != std::string::npos);

    CHECK(run({"score"}).code == 2);
    CHECK(run({"no-such-command"}).code == 2);

    {
      std::ofstream bad(dir / "bad.jsonl");
      bad << R"({"instance_id":"x","image_id":"img00"})" << '\n';
    }
    r = run({"score", "--images", toy("images.capevec"), "--texts", toy("texts.capevec"), "--pairs",
             dir / "bad.jsonl", "--out-dir", dir.path.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find(":1:") != std::string::npos);

    {
      std::ofstream missing_id(dir / "unknown.jsonl");
      missing_id << R"({"instance_id":"x","image_id":"nope","candidate_id":"cap_de_00","reference_ids":[],"rating":1,"language":"de","split":"test"})"
                 << '\n';
    }
    r = run({"score", "--images", toy("images.capevec"), "--texts", toy("texts.capevec"), "--pairs",
             dir / "unknown.jsonl", "--out-dir", dir.path.string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("nope") != std::string::npos);
  }

  TEST_CASE("score reruns are byte identical and manifests carry digests") {
    TempDir a("score_a"), b("score_b");
    REQUIRE(run(score_args(a.path.string())).code == 0);
    REQUIRE(run(score_args(b.path.string())).code == 0);
    CHECK(slurp(a / "scores.csv") == slurp(b / "scores.csv"));
    const auto manifest = nlohmann::json::parse(slurp(a / "score.manifest.json"));
    CHECK(manifest["subcommand"] == "score");
    CHECK(manifest["outputs"]["scores.csv"] == cli::sha256_file(a / "scores.csv"));
    CHECK(manifest.contains("seed"));
    CHECK(manifest.contains("tool_version"));
  }

  TEST_CASE("sha256") {
    TempDir dir("sha");
    { std::ofstream(dir / "abc") << "abc"; }
    CHECK(cli::sha256_file(dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("perfectly ordered scores correlate at 100") {
    TempDir dir("ordered");
    write_ordered_bundle(dir, 20);
    REQUIRE(run({"score", "--images", dir / "images.capevec", "--texts", dir / "texts.capevec", "--pairs",
                 dir / "pairs.jsonl", "--out-dir", dir.path.string()})
                .code == 0);
    const auto r = run({"correlate", "--scores", dir / "scores.csv", "--pairs", dir / "pairs.jsonl", "--per-language",
                        "--out-dir", dir.path.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("100.0") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "correlation.json"));
    for (const auto& row : j["reports"]) {
      CHECK(row["report"]["rho"].get<double>() == doctest::Approx(1.0));
      CHECK(row["report"]["tau_b"].get<double>() == doctest::Approx(1.0));
    }
  }

  TEST_CASE("correlate per language and bootstrap") {
    TempDir dir("correlate");
    REQUIRE(run(score_args(dir.path.string())).code == 0);
    std::vector<std::string> args{"correlate",    "--scores", dir / "scores.csv", "--pairs", toy("pairs.jsonl"),
                                  "--per-language", "--bootstrap", "--boot-iters", "50", "--boot-frac", "0.5",
                                  "--seed",       "3",        "--out-dir",        dir.path.string()};
    const auto first = run(args);
    REQUIRE(first.code == 0);
    const auto json1 = slurp(dir / "correlation.json");
    const auto second = run(args);
    CHECK(second.out == first.out);
    CHECK(slurp(dir / "correlation.json") == json1);

    const auto j = nlohmann::json::parse(json1);
    double sum = 0;
    for (const auto& row : j["reports"]) sum += row["report"]["rho"].get<double>();
    CHECK(j["macro_average"]["rho"].get<double>() ==
          doctest::Approx(sum / static_cast<double>(j["reports"].size())).epsilon(1e-15));
    CHECK(j["reports"].size() == 3);
    CHECK(j["reports"][0]["bootstrap"]["tau_b"]["std"].get<double>() > 0.0);
    CHECK(first.out.find("macro") != std::string::npos);

    args.push_back("--jobs");
    args.push_back("3");
    run(args);
    CHECK(slurp(dir / "correlation.json") == json1);

    const auto ref = run({"correlate", "--scores", dir / "scores.csv", "--pairs", toy("pairs.jsonl"), "--metric",
                          "refclipscore", "--out-dir", dir.path.string()});
    CHECK(ref.code == 3);
  }

  TEST_CASE("tasks") {
    TempDir dir("tasks");
    const std::vector<std::string> base{"--images", toy("images.capevec"), "--texts", toy("texts.capevec")};
    auto task = [&](const std::string& name, const std::string& data, std::vector<std::string> extra = {}) {
      std::vector<std::string> args{"task", name};
      args.insert(args.end(), base.begin(), base.end());
      args.insert(args.end(), {"--data", toy(data), "--out-dir", dir.path.string()});
      args.insert(args.end(), extra.begin(), extra.end());
      return run(args);
    };
    REQUIRE(task("marvl", "marvl.jsonl").code == 0);
    const auto marvl = nlohmann::json::parse(slurp(dir / "task_marvl.json"));
    int skipped = 0;
    for (const auto& rep : marvl) {
      if (rep["task"] == "marvl_task2" && rep["language"] == "pt") skipped = rep["skipped"];
    }
    CHECK(skipped == 1);

    REQUIRE(task("valse", "foils.jsonl").code == 0);
    REQUIRE(task("xvnli", "nli.jsonl").code == 0);
    REQUIRE(task("pascal", "pascal.jsonl", {"--metric", "refclipscore"}).code == 0);
    const auto first = slurp(dir / "task_pascal.json");
    REQUIRE(task("pascal", "pascal.jsonl", {"--metric", "refclipscore"}).code == 0);
    CHECK(slurp(dir / "task_pascal.json") == first);

    {
      std::ofstream noref(dir / "noref.jsonl");
      noref << R"({"image_id":"img00","candidate_a":"cap_en_00","candidate_b":"cap_en_01","category":"HC","votes_a":3,"votes_b":1,"reference_ids":[]})"
            << '\n';
    }
    std::vector<std::string> args{"task", "pascal"};
    args.insert(args.end(), base.begin(), base.end());
    args.insert(args.end(), {"--data", dir / "noref.jsonl", "--metric", "refclipscore", "--out-dir", dir.path.string()});
    const auto bad = run(args);
    CHECK(bad.code == 2);
    CHECK(bad.err.find("reference") != std::string::npos);
  }

  TEST_CASE("heatmap of two identical languages") {
    TempDir dir("heatmap");
    {
      std::ofstream csv(dir / "scores.csv");
      csv << "instance_id,language,clipscore,refclipscore\n";
      const double v[] = {0.5, 1.25, 0.75, 2.0};
      for (int i = 0; i < 4; ++i) {
        for (const char* lang : {"aa", "bb"}) csv << "x" << i << ',' << lang << ',' << v[i] << ",\n";
      }
    }
    const auto r = run({"heatmap", "--scores", dir / "scores.csv", "--out-dir", dir.path.string()});
    REQUIRE(r.code == 0);
    const std::string expected = "language,aa,bb\naa,1.000000,1.000000\nbb,1.000000,1.000000\n";
    CHECK(slurp(dir / "heatmap_all.csv") == expected);
    CHECK(r.out.find(expected) != std::string::npos);
  }

  TEST_CASE("mt-select") {
    TempDir dir("mt");
    REQUIRE(run({"mt-select", "--candidates", toy("mt_candidates.jsonl"), "--out-dir", dir.path.string()}).code == 0);
    const auto selected = slurp(dir / "selected.jsonl");
    const auto dropped = slurp(dir / "dropped.jsonl");
    CHECK(std::count(selected.begin(), selected.end(), '\n') == 24);
    CHECK(std::count(dropped.begin(), dropped.end(), '\n') == 2);
    CHECK(dropped.find("inst99") != std::string::npos);
    REQUIRE(run({"mt-select", "--candidates", toy("mt_candidates.jsonl"), "--out-dir", dir.path.string()}).code == 0);
    CHECK(slurp(dir / "selected.jsonl") == selected);

    REQUIRE(run({"heatmap", "--scores", dir / "none.csv", "--out-dir", dir.path.string()}).code == 2);
  }

  TEST_CASE("finetune") {
    TempDir dir("finetune");
    const std::vector<std::string> args{"finetune",  "--images", toy("images.capevec"), "--texts", toy("texts.capevec"),
                                        "--contrastive-pairs", toy("pairs.jsonl"), "--rated-pairs", toy("pairs.jsonl"),
                                        "--epochs", "2", "--batch-size", "8", "--export", "--out-dir", dir.path.string()};
    const auto r = run(args);
    REQUIRE(r.code == 0);
    for (const char* f : {"adapter.ckpt", "loss_curve.csv", "adapted_images.capevec", "adapted_texts.capevec"}) {
      CHECK(fs::exists(dir.path / f));
    }
    CHECK(slurp(dir / "loss_curve.csv").rfind("step,loss_contrastive,loss_pearson\n", 0) == 0);
    const auto ckpt = slurp(dir / "adapter.ckpt");
    REQUIRE(run(args).code == 0);
    CHECK(slurp(dir / "adapter.ckpt") == ckpt);
    const auto manifest = nlohmann::json::parse(slurp(dir / "finetune.manifest.json"));
    CHECK(manifest["outputs"]["adapter.ckpt"] == cli::sha256_file(dir / "adapter.ckpt"));

    const auto adapted = load_store(dir / "adapted_texts.capevec");
    CHECK(adapted.size() == load_store(toy("texts.capevec")).size());
  }
}

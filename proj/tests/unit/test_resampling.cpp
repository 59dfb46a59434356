#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

#include "capeval/error.hpp"
#include "capeval/resampling.hpp"
#include "oracles.hpp"

using namespace capeval;

namespace {

std::vector<RatedPairRecord> rated(const std::vector<double>& ratings) {
  std::vector<RatedPairRecord> out;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    out.push_back({"i" + std::to_string(i), "img", "c", {}, ratings[i], i % 2 ? "de" : "en",
                   Split::test});
  }
  return out;
}

}  // namespace

TEST_SUITE("resampling") {
  TEST_CASE("stratify by rating value and none") {
    const auto data = rated({1, 1, 2});
    const auto s = stratify(data, StrataKey::rating_value);
    REQUIRE(s.size() == 2);
    CHECK(s.at("1") == std::vector<std::size_t>{0, 1});
    CHECK(s.at("2") == std::vector<std::size_t>{2});
    const auto all = stratify(data, StrataKey::none);
    REQUIRE(all.size() == 1);
    CHECK(all.begin()->second == std::vector<std::size_t>{0, 1, 2});
    CHECK(stratify(data, StrataKey::language).size() == 2);
    CHECK_THROWS_AS(parse_strata_key("color"), UsageError);
  }

  TEST_CASE("stratify is a partition") {
    std::mt19937_64 gen(2);
    std::uniform_int_distribution<int> r(1, 7);
    std::vector<double> ratings(333);
    for (auto& x : ratings) x = r(gen);
    const auto s = stratify(rated(ratings), StrataKey::rating_value);
    std::size_t total = 0;
    std::set<std::size_t> seen;
    for (const auto& [label, idx] : s) {
      total += idx.size();
      seen.insert(idx.begin(), idx.end());
    }
    CHECK(total == 333);
    CHECK(seen.size() == 333);
  }

  TEST_CASE("constant statistic and full fraction") {
    const auto data = rated({1, 2, 3, 4, 1, 2, 3, 4});
    BootstrapConfig cfg;
    cfg.iterations = 50;
    const auto r = bootstrap_std(data, [](auto) { return 42.0; }, cfg);
    CHECK(r.mean == 42.0);
    CHECK(r.std == 0.0);

    cfg.fraction = 1.0;
    std::vector<double> scores{0.1, 0.5, 0.3, 0.9, 0.2, 0.4, 0.8, 0.6};
    const auto full = bootstrap_std(
        data,
        [&](std::span<const std::size_t> subset) {
          CHECK(subset.size() == 8);
          double s = 0;
          for (auto i : subset) s += scores[i];
          return s / subset.size();
        },
        cfg);
    CHECK(full.std == doctest::Approx(0.0).epsilon(1e-15));
  }

  TEST_CASE("matches an independent sampler implementation") {
    std::vector<double> ratings(100), clip(100);
    for (int i = 0; i < 100; ++i) {
      ratings[i] = 1 + i % 4;
      clip[i] = std::sin(0.37 * i) + 1.2;
    }
    const auto data = rated(ratings);
    BootstrapConfig cfg;
    cfg.iterations = 300;
    cfg.seed = 7;
    auto mean_clip = [&](std::span<const std::size_t> subset) {
      double s = 0;
      for (auto i : subset) s += clip[i];
      return s / static_cast<double>(subset.size());
    };
    const auto r = bootstrap_std(data, mean_clip, cfg);

    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < 100; ++i) {
      char key[32];
      std::snprintf(key, sizeof key, "%.17g", ratings[i]);
      strata[key].push_back(i);
    }
    std::vector<double> values;
    for (std::uint64_t t = 0; t < 300; ++t) {
      const auto subset = oracle::sampler::draw(strata, 0.8, 7, t);
      CHECK(subset.size() == 80);
      values.push_back(mean_clip(subset));
    }
    double mean = 0;
    for (double v : values) mean += v;
    mean /= 300;
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    CHECK(r.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(r.std == doctest::Approx(std::sqrt(var / 300)).epsilon(1e-12));
    CHECK(r.values == values);
  }

  TEST_CASE("subset size is the sum of per-stratum ceilings") {
    const auto data = rated({1, 1, 1, 2, 2, 3, 3, 3, 3, 3, 3, 3});
    const auto s = stratify(data, StrataKey::rating_value);
    const auto subset = draw_subset(s, 0.5, 3, 0);
    CHECK(subset.size() == 2 + 1 + 4);
    std::set<std::size_t> unique(subset.begin(), subset.end());
    CHECK(unique.size() == subset.size());
    CHECK(stratum_sample_size(1, 0.01) == 1);
  }

  TEST_CASE("deterministic across worker counts") {
    std::vector<double> ratings(500), score(500);
    for (int i = 0; i < 500; ++i) {
      ratings[i] = 1 + (i * 7) % 5;
      score[i] = std::cos(0.11 * i);
    }
    const auto data = rated(ratings);
    BootstrapConfig cfg;
    cfg.iterations = 200;
    cfg.seed = 99;
    auto stat = [&](std::span<const std::size_t> subset) {
      double s = 0;
      for (auto i : subset) s += score[i];
      return s;
    };
    const auto a = bootstrap_std(data, stat, cfg, 1);
    const auto b = bootstrap_std(data, stat, cfg, 2);
    const auto c = bootstrap_std(data, stat, cfg, 8);
    CHECK(a.mean == b.mean);
    CHECK(a.std == b.std);
    CHECK(a.mean == c.mean);
    CHECK(a.std == c.std);
    CHECK(a.std >= 0.0);
  }

  TEST_CASE("errors") {
    const auto data = rated({1, 2, 3});
    BootstrapConfig cfg;
    cfg.iterations = 10;
    try {
      bootstrap_std(
          data,
          [](std::span<const std::size_t>) -> double { throw NumericError("boom"); }, cfg);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
    cfg.fraction = 0.0;
    CHECK_THROWS_AS(bootstrap_std(data, [](auto) { return 1.0; }, cfg), UsageError);
    cfg.fraction = 0.5;
    cfg.iterations = 0;
    CHECK_THROWS_AS(bootstrap_std(data, [](auto) { return 1.0; }, cfg), UsageError);
    cfg.iterations = 5;
    CHECK_THROWS_AS(bootstrap_std(std::vector<RatedPairRecord>{}, [](auto) { return 1.0; }, cfg),
                    UsageError);
  }
}

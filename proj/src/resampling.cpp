#include "capeval/resampling.hpp"

#include <cmath>
#include <cstdio>

#include "capeval/error.hpp"
#include "capeval/parallel.hpp"
#include "capeval/random.hpp"

namespace capeval {

StrataKey parse_strata_key(std::string_view name) {
  if (name == "rating_value" || name == "rating") return StrataKey::rating_value;
  if (name == "language") return StrataKey::language;
  if (name == "none") return StrataKey::none;
  throw UsageError("unknown strata key '" + std::string(name) +
                   "' (expected rating_value, language or none)");
}

Strata stratify(std::span<const std::string> keys) {
  Strata strata;
  for (std::size_t i = 0; i < keys.size(); ++i) strata[keys[i]].push_back(i);
  return strata;
}

Strata stratify(std::span<const RatedPairRecord> records, StrataKey key) {
  std::vector<std::string> keys;
  keys.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    switch (key) {
      case StrataKey::rating_value: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", records[i].rating);
        keys.emplace_back(buf);
        break;
      }
      case StrataKey::language:
        if (records[i].language.empty()) {
          throw DataError("record " + std::to_string(i) + " has no language for stratification");
        }
        keys.push_back(records[i].language);
        break;
      case StrataKey::none:
        keys.emplace_back("all");
        break;
    }
  }
  return stratify(keys);
}

std::size_t stratum_sample_size(std::size_t stratum_size, double fraction) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(stratum_size)));
  return std::clamp<std::size_t>(k, 1, stratum_size);
}

std::vector<std::size_t> draw_subset(const Strata& strata, double fraction, std::uint64_t seed,
                                     std::uint64_t iteration) {
  CounterRng rng(stream_seed(seed, iteration));
  std::vector<std::size_t> subset;
  std::vector<std::size_t> pool;
  for (const auto& [label, indices] : strata) {
    const std::size_t s = indices.size();
    const std::size_t k = stratum_sample_size(s, fraction);
    pool.assign(indices.begin(), indices.end());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(s - i));
      std::swap(pool[i], pool[j]);
    }
    subset.insert(subset.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return subset;
}

BootstrapResult bootstrap_std(const Strata& strata, const Statistic& statistic,
                              const BootstrapConfig& cfg, unsigned jobs) {
  if (cfg.iterations < 1) throw UsageError("bootstrap needs at least one iteration");
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0)) {
    throw UsageError("bootstrap fraction must lie in (0, 1]");
  }
  if (strata.empty()) throw UsageError("bootstrap over an empty dataset");
  for (const auto& [label, indices] : strata) {
    if (indices.empty()) throw UsageError("stratum '" + label + "' is empty");
  }

  BootstrapResult result;
  result.values.assign(cfg.iterations, 0.0);
  parallel_for(cfg.iterations, jobs, [&](std::size_t t) {
    const auto subset = draw_subset(strata, cfg.fraction, cfg.seed, t);
    try {
      result.values[t] = statistic(subset);
    } catch (const NumericError& e) {
      throw NumericError("bootstrap iteration " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
      throw DataError("bootstrap iteration " + std::to_string(t) + ": " + e.what());
    }
    if (!std::isfinite(result.values[t])) {
      throw NumericError("bootstrap iteration " + std::to_string(t) +
                         ": statistic is not finite");
    }
  });

  // Reductions run serially in iteration order, so the digits do not depend on jobs.
  // Shifting by the first value keeps a constant statistic exact.
  const double shift = result.values.front();
  double sum = 0.0;
  for (double v : result.values) sum += v - shift;
  result.mean = shift + sum / static_cast<double>(cfg.iterations);
  double sq = 0.0;
  for (double v : result.values) sq += (v - result.mean) * (v - result.mean);
  result.std = std::sqrt(sq / static_cast<double>(cfg.iterations));
  return result;
}

BootstrapResult bootstrap_std(std::span<const RatedPairRecord> records,
                              const Statistic& statistic, const BootstrapConfig& cfg,
                              unsigned jobs) {
  if (records.empty()) throw UsageError("bootstrap over an empty dataset");
  return bootstrap_std(stratify(records, cfg.strata_key), statistic, cfg, jobs);
}

}  // namespace capeval

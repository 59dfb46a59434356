#ifndef CAPEVAL_RESAMPLING_HPP
#define CAPEVAL_RESAMPLING_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "capeval/dataset.hpp"

namespace capeval {

enum class StrataKey { rating_value, language, none };

StrataKey parse_strata_key(std::string_view name);

struct BootstrapConfig {
  std::size_t iterations = 1000;
  double fraction = 0.80;
  std::uint64_t seed = 0;
  StrataKey strata_key = StrataKey::rating_value;
};

/// Stratum label -> ascending record indices. Labels iterate in sorted order.
using Strata = std::map<std::string, std::vector<std::size_t>>;

/// Partitions indices by their key; every index lands in exactly one stratum.
Strata stratify(std::span<const std::string> keys);
/// Keys rated pairs by rating value, language, or nothing (one stratum "all").
Strata stratify(std::span<const RatedPairRecord> records, StrataKey key);

/// ceil(fraction * size), clamped to [1, size].
std::size_t stratum_sample_size(std::size_t stratum_size, double fraction);

/// Draws the subset for one iteration. Sampling contract:
///   rng = CounterRng(stream_seed(seed, iteration));
///   for each stratum in label order, with k = stratum_sample_size(|s|, fraction):
///     partial Fisher-Yates over a copy of the stratum's index list,
///     swapping position i with i + rng.below(|s| - i) for i < k,
///     and append the first k entries.
std::vector<std::size_t> draw_subset(const Strata& strata, double fraction, std::uint64_t seed,
                                     std::uint64_t iteration);

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation over iterations
  std::vector<double> values;  ///< statistic per iteration, in iteration order
};

using Statistic = std::function<double(std::span<const std::size_t>)>;

/// Evaluates `statistic` on cfg.iterations stratified subsets (without
/// replacement within each iteration). Results are identical for any `jobs`.
BootstrapResult bootstrap_std(const Strata& strata, const Statistic& statistic,
                              const BootstrapConfig& cfg, unsigned jobs = 1);

BootstrapResult bootstrap_std(std::span<const RatedPairRecord> records,
                              const Statistic& statistic, const BootstrapConfig& cfg,
                              unsigned jobs = 1);

}  // namespace capeval

#endif  // CAPEVAL_RESAMPLING_HPP

#ifndef CAPEVAL_RANK_CORRELATION_HPP
#define CAPEVAL_RANK_CORRELATION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capeval {

/// Pair and tie bookkeeping shared by the Kendall coefficients.
///   n0 = n(n-1)/2, n1 = sum t_i(t_i-1)/2 over tie groups of the scores,
///   n2 = sum u_j(u_j-1)/2 over tie groups of the ratings.
struct PairCounts {
  std::int64_t n = 0;
  std::int64_t n_c = 0;
  std::int64_t n_d = 0;
  std::int64_t n_0 = 0;
  std::int64_t n_1 = 0;
  std::int64_t n_2 = 0;
};

struct CorrelationReport {
  std::int64_t n = 0;
  double rho = 0.0;
  double tau_b = 0.0;
  double tau_c = 0.0;
  std::int64_t n_c = 0;
  std::int64_t n_d = 0;
  std::int64_t n_0 = 0;
  std::int64_t n_1 = 0;
  std::int64_t n_2 = 0;
  std::int64_t m = 0;

  /// {"n","rho","tau_b","tau_c","n_c","n_d","n_0","n_1","n_2","m"}
  std::string to_json() const;
};

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

/// Textbook Pearson r; throws NumericError when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> scores, std::span<const double> ratings);

/// O(n log n) concordance counting (sort + merge-sort swap count).
PairCounts count_pairs(std::span<const double> scores, std::span<const double> ratings);

double tau_b_from_counts(const PairCounts& counts);
double tau_c_from_counts(const PairCounts& counts, std::int64_t m);

struct TauB {
  double tau_b = 0.0;
  PairCounts counts;
};

TauB kendall_tau_b(std::span<const double> scores, std::span<const double> ratings);

/// Stuart's tau_c. `m` is the rating-scale cardinality; when absent it is the
/// number of distinct rating values.
double kendall_tau_c(std::span<const double> scores, std::span<const double> ratings,
                     std::optional<std::int64_t> m = std::nullopt);

std::int64_t distinct_count(std::span<const double> values);

/// All three coefficients plus the bookkeeping in one call.
CorrelationReport correlate(std::span<const double> scores, std::span<const double> ratings,
                            std::optional<std::int64_t> m = std::nullopt);

}  // namespace capeval

#endif  // CAPEVAL_RANK_CORRELATION_HPP

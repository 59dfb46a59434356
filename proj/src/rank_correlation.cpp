#include "capeval/rank_correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "capeval/error.hpp"

namespace capeval {

namespace {

void check_inputs(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size()) {
    throw UsageError(std::string(who) + ": length mismatch (" + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw UsageError(std::string(who) + ": need at least 2 observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DataError(std::string(who) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

std::int64_t tied_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Sum of t(t-1)/2 over runs of equal values in an already sorted sequence,
// comparing through `key`.
template <typename Key>
std::int64_t tie_term(std::span<const std::size_t> order, Key key) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (key(order[i]) == key(order[i - 1])) {
      ++run;
    } else {
      total += tied_pairs(run);
      run = 1;
    }
  }
  return total + tied_pairs(run);
}

// Stable merge sort of `idx` by y, returning the number of inversions.
std::int64_t merge_count(std::vector<std::size_t>& idx, std::vector<std::size_t>& buf,
                         std::span<const double> y, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 16) {
    // Stable insertion sort; every shift removes exactly one inversion.
    std::int64_t swaps = 0;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const std::size_t v = idx[i];
      std::size_t j = i;
      while (j > lo && y[v] < y[idx[j - 1]]) {
        idx[j] = idx[j - 1];
        --j;
        ++swaps;
      }
      idx[j] = v;
    }
    return swaps;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(idx, buf, y, lo, mid) + merge_count(idx, buf, y, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[idx[j]] < y[idx[i]]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = idx[j++];
    } else {
      buf[k++] = idx[i++];
    }
  }
  while (i < mid) buf[k++] = idx[i++];
  while (j < hi) buf[k++] = idx[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            idx.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Writes average ranks for `order`, which must be sorted by `values`.
// Returns the number of distinct values.
std::int64_t assign_average_ranks(std::span<const std::size_t> order, std::span<const double> values,
                                  std::vector<double>& ranks) {
  const std::size_t n = order.size();
  ranks.resize(n);
  std::int64_t runs = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 share the mean of ranks i+1..j.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    ++runs;
    i = j;
  }
  return runs;
}

double pearson_unchecked(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation undefined for constant input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

// One pass for everything `correlate` needs: sorting by (x, y) groups the
// x-ties, and the merge leaves the order stably sorted by y.
struct Sweep {
  PairCounts counts;
  std::vector<double> rank_x;
  std::vector<double> rank_y;
  std::int64_t distinct_y = 0;
};

void sweep(std::span<const double> x, std::span<const double> y, Sweep& out, bool with_ranks) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  PairCounts& c = out.counts;
  c.n = static_cast<std::int64_t>(n);
  c.n_0 = tied_pairs(c.n);
  c.n_1 = tie_term(idx, [&](std::size_t i) { return x[i]; });
  if (with_ranks) assign_average_ranks(idx, x, out.rank_x);
  // Pairs tied on both coordinates.
  std::int64_t joint = 0;
  {
    std::int64_t run = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if (x[idx[i]] == x[idx[i - 1]] && y[idx[i]] == y[idx[i - 1]]) {
        ++run;
      } else {
        joint += tied_pairs(run);
        run = 1;
      }
    }
    joint += tied_pairs(run);
  }

  std::vector<std::size_t> buf(n);
  const std::int64_t swaps = merge_count(idx, buf, y, 0, n);
  c.n_2 = tie_term(idx, [&](std::size_t i) { return y[i]; });
  if (with_ranks) out.distinct_y = assign_average_ranks(idx, y, out.rank_y);

  // Untied-on-both pairs split into concordant and discordant; swaps counts
  // the discordant ones once x-ties have been ordered by y.
  const std::int64_t untied = c.n_0 - c.n_1 - c.n_2 + joint;
  c.n_d = swaps;
  c.n_c = untied - swaps;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks;
  assign_average_ranks(order, values, ranks);
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_inputs(x, y, "pearson");
  return pearson_unchecked(x, y);
}

double spearman(std::span<const double> scores, std::span<const double> ratings) {
  check_inputs(scores, ratings, "spearman");
  const auto rx = average_ranks(scores);
  const auto ry = average_ranks(ratings);
  return pearson(rx, ry);
}

PairCounts count_pairs(std::span<const double> x, std::span<const double> y) {
  check_inputs(x, y, "kendall");
  Sweep sw;
  sweep(x, y, sw, false);
  return sw.counts;
}

double tau_b_from_counts(const PairCounts& c) {
  const double denom = static_cast<double>(c.n_0 - c.n_1) * static_cast<double>(c.n_0 - c.n_2);
  if (denom <= 0.0) throw NumericError("tau_b undefined: all observations tied on one side");
  return static_cast<double>(c.n_c - c.n_d) / std::sqrt(denom);
}

double tau_c_from_counts(const PairCounts& c, std::int64_t m) {
  if (m < 2) throw NumericError("tau_c undefined: rating scale has fewer than 2 values");
  const double n = static_cast<double>(c.n);
  const double md = static_cast<double>(m);
  return static_cast<double>(c.n_c - c.n_d) / static_cast<double>(c.n_0) * ((n - 1.0) / n) *
         (md / (md - 1.0));
}

TauB kendall_tau_b(std::span<const double> scores, std::span<const double> ratings) {
  TauB out;
  out.counts = count_pairs(scores, ratings);
  out.tau_b = tau_b_from_counts(out.counts);
  return out;
}

std::int64_t distinct_count(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return std::unique(sorted.begin(), sorted.end()) - sorted.begin();
}

double kendall_tau_c(std::span<const double> scores, std::span<const double> ratings,
                     std::optional<std::int64_t> m) {
  const PairCounts counts = count_pairs(scores, ratings);
  return tau_c_from_counts(counts, m.value_or(distinct_count(ratings)));
}

CorrelationReport correlate(std::span<const double> scores, std::span<const double> ratings,
                            std::optional<std::int64_t> m) {
  check_inputs(scores, ratings, "correlate");
  Sweep sw;
  sweep(scores, ratings, sw, true);
  const PairCounts& counts = sw.counts;
  CorrelationReport r;
  r.n = counts.n;
  r.n_c = counts.n_c;
  r.n_d = counts.n_d;
  r.n_0 = counts.n_0;
  r.n_1 = counts.n_1;
  r.n_2 = counts.n_2;
  r.m = m.value_or(sw.distinct_y);
  r.tau_b = tau_b_from_counts(counts);
  r.tau_c = tau_c_from_counts(counts, r.m);
  r.rho = pearson_unchecked(sw.rank_x, sw.rank_y);
  return r;
}

std::string CorrelationReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["rho"] = rho;
  j["tau_b"] = tau_b;
  j["tau_c"] = tau_c;
  j["n_c"] = n_c;
  j["n_d"] = n_d;
  j["n_0"] = n_0;
  j["n_1"] = n_1;
  j["n_2"] = n_2;
  j["m"] = m;
  return j.dump();
}

}  // namespace capeval

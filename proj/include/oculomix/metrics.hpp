#pragma once

// AUROC, average precision and Harrell's C-index. Higher score means higher
// risk for all three.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "oculomix/error.hpp"

namespace oculomix {

struct ScoredOutcome {
  double score = 0.0;
  int label = 0;
  double event_time = 1.0;
  bool event_observed = true;
};

namespace detail {

inline void check_scores(std::span<const ScoredOutcome> outcomes) {
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.score)) throw Error(ErrorKind::NonFiniteInput, "non-finite score");
  }
}

}  // namespace detail

/// Mann-Whitney AUROC from average ranks; tied pairs count one half.
inline double auroc(std::span<const ScoredOutcome> outcomes) {
  detail::check_scores(outcomes);
  const std::size_t n = outcomes.size();
  std::size_t n_pos = 0;
  for (const auto& o : outcomes) n_pos += o.label == 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::DegenerateLabels, "auroc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return outcomes[a].score < outcomes[b].score; });

  // Sum of doubled ranks keeps tie averaging in exact integer arithmetic.
  long double doubled_rank_sum = 0.0L;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && outcomes[order[hi]].score == outcomes[order[lo]].score) ++hi;
    const long double doubled_avg_rank = static_cast<long double>(lo + 1 + hi);  // 2 * mean of ranks lo+1..hi
    for (std::size_t k = lo; k < hi; ++k) {
      if (outcomes[order[k]].label == 1) doubled_rank_sum += doubled_avg_rank;
    }
    lo = hi;
  }
  const long double u = doubled_rank_sum / 2.0L - static_cast<long double>(n_pos) * (n_pos + 1) / 2.0L;
  return static_cast<double>(u / (static_cast<long double>(n_pos) * static_cast<long double>(n_neg)));
}

/// Average precision over the ranking by descending score; ties keep input order.
inline double auprc(std::span<const ScoredOutcome> outcomes) {
  detail::check_scores(outcomes);
  std::size_t n_pos = 0;
  for (const auto& o : outcomes) n_pos += o.label == 1;
  if (n_pos == 0) throw Error(ErrorKind::DegenerateLabels, "auprc needs at least one positive");

  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return outcomes[a].score > outcomes[b].score; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (outcomes[order[rank]].label == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

/// Harrell's C. A pair (i, j) is comparable when t_i < t_j and i's event was
/// observed; it is concordant when score_i > score_j, and half credit on ties.
/// O(n log n) via a Fenwick tree over score ranks.
inline double c_index(std::span<const ScoredOutcome> outcomes) {
  detail::check_scores(outcomes);
  const std::size_t n = outcomes.size();

  std::vector<double> scores(n);
  for (std::size_t k = 0; k < n; ++k) scores[k] = outcomes[k].score;
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  const std::size_t m = scores.size();
  auto rank_of = [&](double s) {
    return static_cast<std::size_t>(std::lower_bound(scores.begin(), scores.end(), s) - scores.begin()) + 1;
  };

  std::vector<long long> tree(m + 1, 0);
  auto add = [&](std::size_t r) {
    for (; r <= m; r += r & (~r + 1)) ++tree[r];
  };
  auto prefix = [&](std::size_t r) {
    long long s = 0;
    for (; r > 0; r -= r & (~r + 1)) s += tree[r];
    return s;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return outcomes[a].event_time > outcomes[b].event_time; });

  // Walk times from latest to earliest; the tree holds all strictly later subjects.
  long double concordant2 = 0.0L;  // doubled: concordant counts 2, tie counts 1
  long long comparable = 0;
  long long inserted = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && outcomes[order[hi]].event_time == outcomes[order[lo]].event_time) ++hi;
    for (std::size_t k = lo; k < hi; ++k) {
      const ScoredOutcome& o = outcomes[order[k]];
      if (!o.event_observed) continue;
      const std::size_t r = rank_of(o.score);
      const long long below = prefix(r - 1);
      const long long tied = prefix(r) - below;
      comparable += inserted;
      concordant2 += 2.0L * below + tied;
    }
    for (std::size_t k = lo; k < hi; ++k) {
      add(rank_of(outcomes[order[k]].score));
      ++inserted;
    }
    lo = hi;
  }
  if (comparable == 0) throw Error(ErrorKind::NoComparablePairs, "c_index has no comparable pairs");
  return static_cast<double>(concordant2 / (2.0L * comparable));
}

}  // namespace oculomix

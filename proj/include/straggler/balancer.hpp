// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sequence-length rebalancing planner. Attention makes a microbatch's compute
// cost grow with the sum of squared sequence lengths, so whole sequences are
// first spread across DP ranks by squared cost (greedy LPT), then each rank
// splits its share into microbatches with balanced token counts.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "straggler/error.hpp"

namespace straggler {

using Tokens = std::int64_t;
using Cost = std::int64_t;  // token^2

inline Cost microbatch_cost(std::span<const Tokens> lengths) {
  if (lengths.empty()) throw Error(Errc::EmptyMicrobatch, "microbatch has no sequences");
  Cost c = 0;
  for (Tokens s : lengths) c += s * s;
  return c;
}

struct Assignment {
  std::vector<std::vector<Tokens>> ranks;
  std::vector<Cost> loads;  // sum of squared lengths per rank
};

/// LPT multiway partitioning of sequences over DP ranks by squared length.
inline Assignment redistribute(std::span<const Tokens> lengths, int dp_degree) {
  if (dp_degree < 1) throw Error(Errc::InvalidConfig, "dp_degree must be >= 1");
  if (lengths.empty()) throw Error(Errc::InvalidConfig, "no sequences to distribute");
  for (Tokens s : lengths)
    if (s < 1) throw Error(Errc::InvalidConfig, "sequence lengths must be >= 1");
  Assignment a;
  a.ranks.resize(static_cast<std::size_t>(dp_degree));
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return lengths[x] > lengths[y]; });
  a.loads.assign(a.ranks.size(), 0);
  for (std::size_t i : order) {
    const auto r = static_cast<std::size_t>(std::min_element(a.loads.begin(), a.loads.end()) -
                                            a.loads.begin());
    a.ranks[r].push_back(lengths[i]);
    a.loads[r] += lengths[i] * lengths[i];
  }
  return a;
}

/// Splits one rank's sequences into k microbatches with balanced token sums
/// (greedy, descending); every microbatch ends up non-empty.
inline std::vector<std::vector<Tokens>> split_microbatches(std::span<const Tokens> rank_lengths, int k) {
  if (k < 1) throw Error(Errc::InvalidConfig, "microbatch count must be >= 1");
  if (rank_lengths.size() < static_cast<std::size_t>(k))
    throw Error(Errc::TooFewSequences, std::to_string(rank_lengths.size()) + " sequences for " +
                                           std::to_string(k) + " microbatches");
  std::vector<std::size_t> order(rank_lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return rank_lengths[x] > rank_lengths[y];
  });
  std::vector<std::vector<Tokens>> mbs(static_cast<std::size_t>(k));
  std::vector<Tokens> sums(mbs.size(), 0);
  for (std::size_t i : order) {
    const auto b =
        static_cast<std::size_t>(std::min_element(sums.begin(), sums.end()) - sums.begin());
    mbs[b].push_back(rank_lengths[i]);
    sums[b] += rank_lengths[i];
  }
  for (std::size_t b = 0; b < mbs.size(); ++b) {
    if (!mbs[b].empty()) continue;
    std::size_t from = 0;
    for (std::size_t c = 0; c < mbs.size(); ++c)
      if (mbs[c].size() > 1 && (mbs[from].size() < 2 || sums[c] > sums[from])) from = c;
    mbs[b].push_back(mbs[from].back());
    sums[b] += mbs[from].back();
    sums[from] -= mbs[from].back();
    mbs[from].pop_back();
  }
  return mbs;
}

/// Predicted step-time improvement when step time follows the most loaded rank.
inline double plan_improvement(std::span<const Cost> before, std::span<const Cost> after) {
  if (before.empty() || after.empty() || before.size() != after.size())
    throw Error(Errc::InvalidConfig, "load vectors must be non-empty and of equal size");
  const Cost b = *std::max_element(before.begin(), before.end());
  const Cost a = *std::max_element(after.begin(), after.end());
  return a == 0 ? 1.0 : static_cast<double>(b) / static_cast<double>(a);
}

struct BatchPlan {
  int dp_degree = 1;
  std::vector<std::vector<Tokens>> assignments;
  std::vector<std::vector<std::vector<Tokens>>> microbatches;
  std::vector<Cost> loads;
  std::vector<Tokens> total_lengths;  // per rank; memory pressure indicator
  Tokens length_spread = 0;           // max - min of total_lengths
};

inline BatchPlan plan_batch(std::span<const Tokens> lengths, int dp_degree, int microbatches_per_rank) {
  Assignment a = redistribute(lengths, dp_degree);
  BatchPlan plan;
  plan.dp_degree = dp_degree;
  plan.loads = a.loads;
  for (const auto& rank : a.ranks) {
    plan.microbatches.push_back(split_microbatches(rank, microbatches_per_rank));
    plan.total_lengths.push_back(std::accumulate(rank.begin(), rank.end(), Tokens{0}));
  }
  plan.assignments = std::move(a.ranks);
  const auto [lo, hi] = std::minmax_element(plan.total_lengths.begin(), plan.total_lengths.end());
  plan.length_spread = *hi - *lo;
  return plan;
}

/// Loads when the batch is consumed as formed: consecutive chunks of
/// `per_rank` sequences per rank.
inline std::vector<Cost> sequential_loads(std::span<const Tokens> lengths, int dp_degree) {
  std::vector<Cost> loads(static_cast<std::size_t>(dp_degree), 0);
  const std::size_t per_rank =
      (lengths.size() + static_cast<std::size_t>(dp_degree) - 1) / static_cast<std::size_t>(dp_degree);
  for (std::size_t i = 0; i < lengths.size(); ++i) loads[i / per_rank] += lengths[i] * lengths[i];
  return loads;
}

inline nlohmann::json to_json(const BatchPlan& p) {
  return nlohmann::json{{"dp_degree", p.dp_degree},
                        {"assignments", p.assignments},
                        {"microbatches", p.microbatches},
                        {"loads", p.loads},
                        {"total_lengths", p.total_lengths},
                        {"length_spread", p.length_spread}};
}

}  // namespace straggler

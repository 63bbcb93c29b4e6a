#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tarot/eval.hpp"
#include "tarot/random.hpp"

namespace tarot::testing {

// Brute-force reimplementations straight from the metric definitions.
namespace oracle {

inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  return wins / pairs;
}

// 1-based rank of each item: one plus the number of items placed ahead of it.
inline std::vector<std::size_t> ranks(const std::vector<RankItem>& items) {
  std::vector<std::size_t> r(items.size(), 1);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = 0; j < items.size(); ++j) {
      const bool ahead = items[j].score > items[i].score || (items[j].score == items[i].score && items[j].id < items[i].id);
      if (j != i && ahead) ++r[i];
    }
  return r;
}

inline std::vector<int> labels_by_rank(const std::vector<RankItem>& items) {
  const auto r = ranks(items);
  std::vector<int> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out[r[i] - 1] = items[i].label;
  return out;
}

inline double recall(const std::vector<int>& l, std::size_t k) {
  double hit = 0.0, rel = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    rel += l[i];
    if (i < k) hit += l[i];
  }
  return hit / rel;
}

inline double precision(const std::vector<int>& l, std::size_t k) {
  double hit = 0.0;
  for (std::size_t i = 0; i < l.size() && i < k; ++i) hit += l[i];
  return hit / static_cast<double>(k);
}

inline double ndcg(const std::vector<int>& l, std::size_t k) {
  double dcg = 0.0, ideal = 0.0;
  std::size_t rel = 0;
  for (int v : l) rel += static_cast<std::size_t>(v);
  for (std::size_t i = 0; i < l.size() && i < k; ++i)
    if (l[i]) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  for (std::size_t i = 0; i < std::min(rel, k); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

inline double rr(const std::vector<int>& l) {
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l[i]) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

}  // namespace oracle

inline std::vector<RankItem> random_items(Rng& rng, bool force_relevant) {
  const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 8));
  std::vector<RankItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse scores so ties are common.
    items.push_back({"id" + std::to_string(rng.uniform_int(0, 99)) + "_" + std::to_string(i),
                     static_cast<double>(rng.uniform_int(0, 4)) / 4.0, rng.bernoulli(0.35) ? 1 : 0});
  }
  if (force_relevant) items[rng.index(n)].label = 1;
  return items;
}

}  // namespace tarot::testing

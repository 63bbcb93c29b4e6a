#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "tarot/eval.hpp"

namespace tarot {

using nlohmann::json;

std::string_view rec_task_label(RecTask task) { return task == RecTask::JobRec ? "job_rec" : "candidate_rec"; }

RecTask parse_rec_task(std::string_view label) {
  if (label == "job_rec") return RecTask::JobRec;
  if (label == "candidate_rec") return RecTask::CandidateRec;
  throw std::invalid_argument("unknown task '" + std::string(label) + "' (expected job_rec or candidate_rec)");
}

Split split_for(RecTask task) { return task == RecTask::JobRec ? Split::DownstreamJobRec : Split::DownstreamCandRec; }

std::size_t RankedList::relevant() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }

RankedList make_ranked_list(std::string anchor_id, std::vector<RankItem> items) {
  if (items.empty()) throw std::invalid_argument("ranked list for " + anchor_id + " is empty");
  std::sort(items.begin(), items.end(), [](const RankItem& a, const RankItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  RankedList list;
  list.anchor_id = std::move(anchor_id);
  for (auto& it : items) {
    list.item_ids.push_back(std::move(it.id));
    list.scores.push_back(it.score);
    list.labels.push_back(it.label);
  }
  return list;
}

std::vector<RankedList> build_ranked_lists(std::span<const ScoredPair> pairs, RecTask task) {
  std::map<std::string, std::vector<RankItem>> groups;
  for (const auto& p : pairs) {
    if (task == RecTask::JobRec) groups[p.user_id].push_back({p.job_id, p.score, p.label});
    else groups[p.job_id].push_back({p.user_id, p.score, p.label});
  }
  std::vector<RankedList> out;
  for (auto& [anchor, items] : groups) out.push_back(make_ranked_list(anchor, std::move(items)));
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their average.
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positives += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw std::invalid_argument("auc: need at least one positive and one negative");
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double auc(std::span<const ScoredPair> pairs) {
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& p : pairs) {
    s.push_back(p.score);
    l.push_back(p.label);
  }
  return auc(s, l);
}

namespace {
std::size_t hits_in_top(const RankedList& list, std::size_t k) {
  const std::size_t top = std::min(k, list.size());
  return static_cast<std::size_t>(std::count(list.labels.begin(), list.labels.begin() + static_cast<std::ptrdiff_t>(top), 1));
}
}  // namespace

double recall_at(const RankedList& list, std::size_t k) {
  const std::size_t rel = list.relevant();
  return rel == 0 ? 0.0 : static_cast<double>(hits_in_top(list, k)) / static_cast<double>(rel);
}

double precision_at(const RankedList& list, std::size_t k) {
  return static_cast<double>(hits_in_top(list, k)) / static_cast<double>(k);
}

double ndcg_at(const RankedList& list, std::size_t k) {
  const std::size_t top = std::min(k, list.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < top; ++i)
    if (list.labels[i] == 1) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  const std::size_t ideal = std::min(k, list.relevant());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double reciprocal_rank(const RankedList& list) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list.labels[i] == 1) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double hit_at_1(const RankedList& list) { return !list.labels.empty() && list.labels[0] == 1 ? 1.0 : 0.0; }

RankingSummary ranking_metrics(std::span<const RankedList> lists, std::span<const std::size_t> ks) {
  if (lists.empty()) throw std::invalid_argument("ranking_metrics: no ranked lists");
  RankingSummary s;
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("ranking_metrics: k must be positive");
    s.at_k[k] = {};
  }
  for (const auto& list : lists) {
    if (list.relevant() == 0) {
      ++s.n_excluded;
      continue;
    }
    ++s.n_anchors;
    for (auto& [k, m] : s.at_k) {
      m.recall += recall_at(list, k);
      m.precision += precision_at(list, k);
      m.ndcg += ndcg_at(list, k);
    }
    s.mrr += reciprocal_rank(list);
    s.hr_at_1 += hit_at_1(list);
  }
  if (s.n_anchors == 0) throw std::invalid_argument("ranking_metrics: no list has a relevant item");
  const double n = static_cast<double>(s.n_anchors);
  for (auto& [k, m] : s.at_k) {
    m.recall /= n;
    m.precision /= n;
    m.ndcg /= n;
  }
  s.mrr /= n;
  s.hr_at_1 /= n;
  return s;
}

MetricsReport metrics_report(RecTask task, std::span<const ScoredPair> pairs) {
  MetricsReport r;
  r.task = task;
  r.n_pairs = pairs.size();
  r.auc = auc(pairs);
  const auto lists = build_ranked_lists(pairs, task);
  static constexpr std::size_t kKs[] = {3, 5, 25};
  const RankingSummary s = ranking_metrics(lists, kKs);
  r.recall_at_3 = s.at_k.at(3).recall;
  r.precision_at_3 = s.at_k.at(3).precision;
  r.ndcg_at_3 = s.at_k.at(3).ndcg;
  r.ndcg_at_5 = s.at_k.at(5).ndcg;
  r.ndcg_at_25 = s.at_k.at(25).ndcg;
  r.mrr = s.mrr;
  r.hr_at_1 = s.hr_at_1;
  r.n_anchors = s.n_anchors + s.n_excluded;
  r.n_anchors_without_positive = s.n_excluded;
  r.metadata["candidate_pool"] = "all downstream-split pairs sharing the anchor";
  r.metadata["tie_break"] = "ascending item id";
  return r;
}

void to_json(json& j, const MetricsReport& r) {
  j = json{{"task", rec_task_label(r.task)},
           {"AUC", r.auc},
           {"Recall@3", r.recall_at_3},
           {"Precision@3", r.precision_at_3},
           {"NDCG@3", r.ndcg_at_3},
           {"NDCG@5", r.ndcg_at_5},
           {"NDCG@25", r.ndcg_at_25},
           {"MRR", r.mrr},
           {"HR@1", r.hr_at_1},
           {"n_anchors", r.n_anchors},
           {"n_anchors_without_positive", r.n_anchors_without_positive},
           {"n_pairs", r.n_pairs},
           {"metadata", r.metadata}};
}

std::string format_relative(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.3f%%", fraction * 100.0);
  return buf;
}

std::string format_report_table(std::span<const MetricsReport> reports) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %8s %9s %12s %8s %8s %8s %8s %8s\n", "Task", "AUC", "Recall@3", "Precision@3",
                "NDCG@3", "NDCG@5", "NDCG@25", "MRR", "HR@1");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-14s %8.4f %9.4f %12.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  std::string(rec_task_label(r.task)).c_str(), r.auc, r.recall_at_3, r.precision_at_3, r.ndcg_at_3,
                  r.ndcg_at_5, r.ndcg_at_25, r.mrr, r.hr_at_1);
    out += buf;
  }
  return out;
}

std::array<double, 5> ablation_values(const MetricsReport& r) {
  return {r.auc, r.hr_at_1, r.ndcg_at_5, r.ndcg_at_25, r.mrr};
}

std::array<double, 5> relative_deltas(const MetricsReport& run, const MetricsReport& base) {
  const auto a = ablation_values(run), b = ablation_values(base);
  std::array<double, 5> d{};
  // A zero baseline has no defined relative change; report 0.
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = b[i] == 0.0 ? 0.0 : (a[i] - b[i]) / b[i];
  return d;
}

void to_json(json& j, const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json deltas = json::object();
    for (std::size_t i = 0; i < kAblationColumns.size(); ++i) deltas[std::string(kAblationColumns[i])] = row.deltas[i];
    rows.push_back({{"removed", task_label(row.removed)}, {"deltas", deltas}, {"report", row.report}});
  }
  j = json{{"baseline", r.baseline}, {"rows", rows}, {"app_removal_worst_auc", r.app_removal_worst_auc}};
}

std::string format_ablation_table(const AblationReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s", "Models");
  out += buf;
  for (auto c : kAblationColumns) {
    std::snprintf(buf, sizeof buf, " %10s", std::string(c).c_str());
    out += buf;
  }
  out += '\n';
  auto row = [&](const std::string& name, const std::array<double, 5>& d) {
    std::snprintf(buf, sizeof buf, "%-10s", name.c_str());
    out += buf;
    for (double v : d) {
      std::snprintf(buf, sizeof buf, " %10s", format_relative(v).c_str());
      out += buf;
    }
    out += '\n';
  };
  row("TAROT", relative_deltas(report.baseline, report.baseline));
  for (const auto& r : report.rows) row("w/o " + std::string(task_label(r.removed)), r.deltas);
  return out;
}

}  // namespace tarot

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tarot/corpus.hpp"
#include "tarot/model.hpp"
#include "tarot/trainer.hpp"

namespace tarot {

enum class RecTask : std::uint8_t { JobRec, CandidateRec };

std::string_view rec_task_label(RecTask task);
RecTask parse_rec_task(std::string_view label);
Split split_for(RecTask task);

struct ScoredPair {
  std::string user_id;
  std::string job_id;
  double score = 0.0;
  int label = 0;
};

// One anchor's candidates sorted by score descending, ties by ascending item id.
struct RankedList {
  std::string anchor_id;
  std::vector<std::string> item_ids;
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t relevant() const;
};

struct RankItem {
  std::string id;
  double score = 0.0;
  int label = 0;
};

RankedList make_ranked_list(std::string anchor_id, std::vector<RankItem> items);
// Per-user job lists for JobRec, per-job user lists for CandidateRec, ordered by anchor id.
std::vector<RankedList> build_ranked_lists(std::span<const ScoredPair> pairs, RecTask task);

// Mann-Whitney AUC, ties counted one half. Throws on single-class input.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const ScoredPair> pairs);

// Binary-gain metrics of a single ranked list.
double recall_at(const RankedList& list, std::size_t k);
double precision_at(const RankedList& list, std::size_t k);  // divides by k
double ndcg_at(const RankedList& list, std::size_t k);       // log2(rank + 1) discount
double reciprocal_rank(const RankedList& list);
double hit_at_1(const RankedList& list);

struct AtK {
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
};

struct RankingSummary {
  std::map<std::size_t, AtK> at_k;
  double mrr = 0.0;
  double hr_at_1 = 0.0;
  std::size_t n_anchors = 0;   // anchors with at least one relevant item
  std::size_t n_excluded = 0;  // anchors without relevant items
};

// Means over anchors that have a relevant item. Throws if `lists` is empty or
// no list has a relevant item.
RankingSummary ranking_metrics(std::span<const RankedList> lists, std::span<const std::size_t> ks);

struct MetricsReport {
  RecTask task = RecTask::JobRec;
  double auc = 0.0;
  double recall_at_3 = 0.0;
  double precision_at_3 = 0.0;
  double ndcg_at_3 = 0.0;
  double ndcg_at_5 = 0.0;
  double ndcg_at_25 = 0.0;
  double mrr = 0.0;
  double hr_at_1 = 0.0;
  std::size_t n_anchors = 0;
  std::size_t n_anchors_without_positive = 0;
  std::size_t n_pairs = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const MetricsReport& r);
MetricsReport metrics_report(RecTask task, std::span<const ScoredPair> pairs);
std::string format_report_table(std::span<const MetricsReport> reports);

// Sign-prefixed percentage with three decimals, e.g. "+4.477%".
std::string format_relative(double fraction);

// sigmoid(App head(concat(F_u, F_j))) for one user/job document pair, no tape.
double score_documents(const TarotModel& model, const Document& user, const Document& job);

// Scores pairs with frozen parameters; every document is encoded once.
// Throws std::out_of_range on ids missing from the corpus.
std::vector<ScoredPair> score_pairs(const TarotModel& model, const Corpus& corpus,
                                    std::span<const Interaction* const> pairs);

MetricsReport run_downstream(const TarotModel& model, const Corpus& corpus, RecTask task);
// Same protocol restricted to the first half of the task's anchors by id.
MetricsReport run_validation(const TarotModel& model, const Corpus& corpus, RecTask task);

// Top-1 accuracy of the MLM head over masked positions of `sentences`.
double masked_token_accuracy(const TarotModel& model, std::span<const Sentence> sentences, std::uint64_t seed);
// Fraction of profile sections whose name the Exp head predicts correctly.
double section_classification_accuracy(const TarotModel& model, std::span<const Document* const> profiles);
// Profiles of users outside the pretrain split.
std::vector<const Document*> heldout_profiles(const Corpus& corpus);

// Table-2 columns.
inline constexpr std::array<std::string_view, 5> kAblationColumns = {"AUC", "HR@1", "NDCG@5", "NDCG@25", "MRR"};
std::array<double, 5> ablation_values(const MetricsReport& r);
// (value - base) / base per column.
std::array<double, 5> relative_deltas(const MetricsReport& run, const MetricsReport& base);

struct AblationRow {
  Task removed = Task::MLM;
  MetricsReport report;
  std::array<double, 5> deltas{};
};

struct AblationReport {
  MetricsReport baseline;
  std::vector<AblationRow> rows;  // w/o MLM, Exp, Att, App
  // Soft expectation from the reference study: removing App hurts AUC most.
  bool app_removal_worst_auc = false;
};

void to_json(nlohmann::json& j, const AblationReport& r);
std::string format_ablation_table(const AblationReport& report);

// Baseline plus four runs, each with one lambda zeroed, evaluated on job recommendation.
AblationReport run_ablation(const Corpus& corpus, const TrainConfig& base,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace tarot

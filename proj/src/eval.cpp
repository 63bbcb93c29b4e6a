#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "tarot/eval.hpp"
#include "tarot/ops.hpp"

namespace tarot {

namespace {

constexpr std::size_t kEncodeChunk = 64;

double sigmoid_of(const Tensor& logit) {
  return ops::sigmoid(logit).item();
}

// Frozen-model encodings of every document a set of pairs touches.
class EncodingCache {
 public:
  explicit EncodingCache(const TarotModel& model) : model_(model) {}

  void prepare(const std::vector<const Document*>& docs) {
    std::vector<const Document*> todo;
    for (const Document* d : docs)
      if (!cache_.contains(d)) todo.push_back(d);
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    for (std::size_t i = 0; i < todo.size(); i += kEncodeChunk) {
      const std::size_t end = std::min(todo.size(), i + kEncodeChunk);
      std::span<const Document* const> chunk(todo.data() + i, end - i);
      auto enc = model_.hierarchy().encode_documents(chunk, true, false);
      for (std::size_t k = 0; k < enc.size(); ++k) cache_.emplace(chunk[k], std::move(enc[k]));
    }
  }

  const EmbeddingHierarchy& at(const Document* d) const { return cache_.at(d); }

 private:
  const TarotModel& model_;
  std::unordered_map<const Document*, EmbeddingHierarchy> cache_;
};

}  // namespace

double score_documents(const TarotModel& model, const Document& user, const Document& job) {
  NoGradGuard no_grad;
  const Document* docs[] = {&user, &job};
  auto enc = model.hierarchy().encode_documents(docs, true, false);
  return sigmoid_of(model.heads().app_logits(model.hierarchy().cross_interact(enc[0], enc[1])));
}

std::vector<ScoredPair> score_pairs(const TarotModel& model, const Corpus& corpus,
                                    std::span<const Interaction* const> pairs) {
  NoGradGuard no_grad;
  std::vector<std::pair<const Document*, const Document*>> resolved;
  std::vector<const Document*> docs;
  for (const Interaction* i : pairs) {
    const Document* u = corpus.find_profile(i->user_id);
    const Document* j = corpus.find_job(i->job_id);
    if (!u) throw std::out_of_range("score_pairs: unknown user id " + i->user_id);
    if (!j) throw std::out_of_range("score_pairs: unknown job id " + i->job_id);
    resolved.emplace_back(u, j);
    docs.push_back(u);
    docs.push_back(j);
  }
  EncodingCache cache(model);
  cache.prepare(docs);
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [u, j] = resolved[k];
    const double s = sigmoid_of(model.heads().app_logits(model.hierarchy().cross_interact(cache.at(u), cache.at(j))));
    out.push_back({pairs[k]->user_id, pairs[k]->job_id, s, downstream_label(pairs[k]->action)});
  }
  return out;
}

MetricsReport run_downstream(const TarotModel& model, const Corpus& corpus, RecTask task) {
  const auto pairs = corpus.split(split_for(task));
  if (pairs.empty()) throw std::invalid_argument("corpus has no " + std::string(split_label(split_for(task))) + " split");
  const auto scored = score_pairs(model, corpus, pairs);
  MetricsReport r = metrics_report(task, scored);
  r.metadata["split"] = split_label(split_for(task));
  return r;
}

MetricsReport run_validation(const TarotModel& model, const Corpus& corpus, RecTask task) {
  const auto pairs = corpus.split(split_for(task));
  if (pairs.empty()) throw std::invalid_argument("corpus has no " + std::string(split_label(split_for(task))) + " split");
  std::set<std::string> anchors;
  for (const auto* p : pairs) anchors.insert(task == RecTask::JobRec ? p->user_id : p->job_id);
  std::set<std::string> keep;
  std::size_t i = 0;
  for (const auto& a : anchors)
    if (i++ < (anchors.size() + 1) / 2) keep.insert(a);
  std::vector<const Interaction*> slice;
  for (const auto* p : pairs)
    if (keep.contains(task == RecTask::JobRec ? p->user_id : p->job_id)) slice.push_back(p);
  MetricsReport r = metrics_report(task, score_pairs(model, corpus, slice));
  r.metadata["split"] = std::string(split_label(split_for(task))) + " (validation half)";
  return r;
}

double masked_token_accuracy(const TarotModel& model, std::span<const Sentence> sentences, std::uint64_t seed) {
  NoGradGuard no_grad;
  Rng rng(seed);
  std::size_t hits = 0, total = 0;
  for (std::size_t b = 0; b < sentences.size(); b += kEncodeChunk) {
    const std::size_t e = std::min(sentences.size(), b + kEncodeChunk);
    std::vector<Sentence> masked;
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    std::vector<TokenId> targets;
    for (std::size_t i = b; i < e; ++i) {
      auto m = apply_mlm_mask(sentences[i], model.config().encoder.vocab_size, rng);
      for (std::size_t k = 0; k < m.positions.size(); ++k) {
        slots.emplace_back(i - b, m.positions[k]);
        targets.push_back(m.targets[k]);
      }
      masked.push_back(std::move(m.masked));
    }
    const EncodedBatch batch = model.hierarchy().encoder().encode(masked);
    std::vector<std::size_t> rows;
    for (const auto& [s, p] : slots) rows.push_back(batch.token_row(s, p));
    const Tensor logits = model.heads().mlm_logits(ops::gather_rows(batch.hidden, rows));
    const std::size_t v = logits.cols();
    for (std::size_t r = 0; r < targets.size(); ++r) {
      const auto row = logits.data().subspan(r * v, v);
      const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      hits += best == targets[r];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

double section_classification_accuracy(const TarotModel& model, std::span<const Document* const> profiles) {
  NoGradGuard no_grad;
  std::size_t hits = 0, total = 0;
  for (std::size_t b = 0; b < profiles.size(); b += kEncodeChunk) {
    const std::size_t e = std::min(profiles.size(), b + kEncodeChunk);
    auto enc = model.hierarchy().encode_documents(profiles.subspan(b, e - b), false, false);
    for (const auto& h : enc) {
      if (h.doc->side != Side::Profile) throw std::invalid_argument("section classification is defined on profiles only");
      const Tensor logits = model.heads().exp_logits(h.section_embeddings);
      for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.data().subspan(r * logits.cols(), logits.cols());
        hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == r;
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<const Document*> heldout_profiles(const Corpus& corpus) {
  std::set<std::string> pretrain_users;
  for (const auto* i : corpus.split(Split::Pretrain)) pretrain_users.insert(i->user_id);
  std::vector<const Document*> out;
  for (const auto& p : corpus.profiles)
    if (!pretrain_users.contains(p.id)) out.push_back(&p);
  return out;
}

AblationReport run_ablation(const Corpus& corpus, const TrainConfig& base,
                            const std::function<void(const std::string&)>& progress) {
  base.validate();
  AblationReport report;
  auto run = [&](const TrainConfig& cfg, const std::string& name) {
    if (progress) progress("pretraining " + name);
    auto result = pretrain(corpus, cfg);
    return run_downstream(result.model, corpus, RecTask::JobRec);
  };
  report.baseline = run(base, "TAROT");
  for (Task t : kAllTasks) {
    TrainConfig cfg = base;
    cfg.lambda.get(t) = 0.0;
    AblationRow row;
    row.removed = t;
    row.report = run(cfg, "w/o " + std::string(task_label(t)));
    row.deltas = relative_deltas(row.report, report.baseline);
    report.rows.push_back(std::move(row));
  }
  const auto worst = std::min_element(report.rows.begin(), report.rows.end(),
                                      [](const AblationRow& a, const AblationRow& b) { return a.report.auc < b.report.auc; });
  report.app_removal_worst_auc = worst->removed == Task::App;
  return report;
}

}  // namespace tarot

#include <stdexcept>

#include "tarot/errors.hpp"
#include "tarot/eval.hpp"
#include "tarot/trainer.hpp"

namespace tarot {

using nlohmann::json;

namespace {

struct Selection {
  RecTask task;
  std::string metric;
};

// "<task>_<metric>", e.g. job_rec_auc or candidate_rec_ndcg@5.
Selection parse_selection(const std::string& name) {
  for (RecTask task : {RecTask::JobRec, RecTask::CandidateRec}) {
    const std::string prefix = std::string(rec_task_label(task)) + "_";
    if (name.starts_with(prefix)) return {task, name.substr(prefix.size())};
  }
  throw ConfigError("selection_metric '" + name + "' must start with job_rec_ or candidate_rec_");
}

double selection_value(const MetricsReport& r, const std::string& metric) {
  if (metric == "auc") return r.auc;
  if (metric == "mrr") return r.mrr;
  if (metric == "hr@1") return r.hr_at_1;
  if (metric == "recall@3") return r.recall_at_3;
  if (metric == "precision@3") return r.precision_at_3;
  if (metric == "ndcg@3") return r.ndcg_at_3;
  if (metric == "ndcg@5") return r.ndcg_at_5;
  if (metric == "ndcg@25") return r.ndcg_at_25;
  throw ConfigError("unknown selection metric '" + metric + "'");
}

std::vector<json> cartesian_cells(const json& grid) {
  std::vector<json> cells{json::object()};
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw ConfigError("grid entry '" + it.key() + "' must be a non-empty list of values");
    }
    std::vector<json> next;
    for (const auto& cell : cells) {
      for (const auto& v : it.value()) {
        json c = cell;
        c[it.key()] = v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

}  // namespace

GridSearchResult grid_search(const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  const Selection sel = parse_selection(config.selection_metric);
  selection_value(MetricsReport{}, sel.metric);

  json base = config;
  base["grid"] = json::object();

  GridSearchResult result;
  const GridCell* best = nullptr;
  for (const json& overrides : cartesian_cells(config.grid)) {
    GridCell cell;
    cell.overrides = overrides;
    try {
      json doc = base;
      for (auto it = overrides.begin(); it != overrides.end(); ++it) set_dot_path(doc, it.key(), it.value());
      const TrainConfig cfg = doc.get<TrainConfig>();
      cfg.validate();
      auto trained = pretrain(corpus, cfg);
      cell.metric = selection_value(run_validation(trained.model, corpus, sel.task), sel.metric);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }
  for (const auto& cell : result.cells) {
    if (!cell.metric) continue;
    if (!best || *cell.metric > *best->metric ||
        (*cell.metric == *best->metric && cell.overrides.dump() < best->overrides.dump())) {
      best = &cell;
    }
  }
  if (!best) throw TrainingError("grid search: every cell failed (first error: " + result.cells.front().error + ")");

  json doc = base;
  for (auto it = best->overrides.begin(); it != best->overrides.end(); ++it) set_dot_path(doc, it.key(), it.value());
  result.best = doc.get<TrainConfig>();
  result.best_overrides = best->overrides;
  return result;
}

}  // namespace tarot

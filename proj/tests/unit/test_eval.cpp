#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support/fixtures.hpp"
#include "support/metric_oracle.hpp"
#include "tarot/errors.hpp"
#include "tarot/eval.hpp"

using namespace tarot;
using namespace tarot::testing;

namespace {

RankedList list_of(std::vector<int> labels_in_rank_order) {
  std::vector<RankItem> items;
  for (std::size_t i = 0; i < labels_in_rank_order.size(); ++i) {
    items.push_back({"i" + std::to_string(i), 1.0 - 0.1 * static_cast<double>(i), labels_in_rank_order[i]});
  }
  return make_ranked_list("a", items);
}

const Corpus& eval_corpus() {
  static const Corpus corpus = [] {
    CorpusConfig c = tiny_corpus_config(9);
    c.n_users = 200;
    c.n_jobs = 240;
    c.candrec_jobs = 60;
    return generate(c);
  }();
  return corpus;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("AUC worked example and trivial cases") {
  const std::vector<double> s = {0.9, 0.8, 0.3, 0.2};
  const std::vector<int> y = {1, 0, 1, 0};
  CHECK(auc(s, y) == 0.75);
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST_CASE("ranking metrics trivial cases") {
  const auto ideal = list_of({1, 0, 0});
  CHECK(ndcg_at(ideal, 3) == 1.0);
  CHECK(reciprocal_rank(ideal) == 1.0);
  CHECK(hit_at_1(ideal) == 1.0);
  const auto second = list_of({0, 1, 0});
  CHECK(reciprocal_rank(second) == 0.5);
  CHECK(hit_at_1(second) == 0.0);
  CHECK(precision_at(second, 5) == 0.2);
  CHECK(recall_at(second, 1) == 0.0);
  CHECK(recall_at(second, 2) == 1.0);
}

TEST_CASE("ranked lists order by score then id") {
  const auto l = make_ranked_list("a", {{"b", 0.5, 0}, {"a", 0.5, 1}, {"c", 0.9, 0}});
  CHECK(l.item_ids == std::vector<std::string>{"c", "a", "b"});
  CHECK(l.relevant() == 1);
  CHECK_THROWS(make_ranked_list("a", {}));
}

TEST_CASE("metrics equal brute-force oracles on random instances") {
  Rng rng(2024);
  const std::vector<std::size_t> ks = {1, 3, 5};
  for (int trial = 0; trial < 500; ++trial) {
    CAPTURE(trial);
    auto items = random_items(rng, true);
    const auto list = make_ranked_list("a", items);
    const auto by_rank = oracle::labels_by_rank(items);
    CHECK(list.labels == by_rank);
    for (std::size_t k : ks) {
      CHECK(recall_at(list, k) == oracle::recall(by_rank, k));
      CHECK(precision_at(list, k) == oracle::precision(by_rank, k));
      CHECK(ndcg_at(list, k) == oracle::ndcg(by_rank, k));
    }
    CHECK(reciprocal_rank(list) == oracle::rr(by_rank));
    CHECK(hit_at_1(list) == static_cast<double>(by_rank[0]));

    std::vector<double> s;
    std::vector<int> y;
    for (const auto& it : items) {
      s.push_back(it.score);
      y.push_back(it.label);
    }
    if (std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0) {
      CHECK(auc(s, y) == oracle::auc(s, y));
    }
  }
}

TEST_CASE("aggregate metrics average over anchors with a positive") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RankedList> lists;
    std::vector<std::vector<int>> included;
    std::size_t excluded = 0;
    for (int a = 0; a < 6; ++a) {
      auto items = random_items(rng, a == 0);
      lists.push_back(make_ranked_list("a" + std::to_string(a), items));
      if (lists.back().relevant() == 0) ++excluded;
      else included.push_back(oracle::labels_by_rank(items));
    }
    const std::vector<std::size_t> ks = {3};
    const auto m = ranking_metrics(lists, ks);
    double mrr = 0.0, hr = 0.0, nd = 0.0;
    for (const auto& l : included) {
      mrr += oracle::rr(l);
      hr += l[0];
      nd += oracle::ndcg(l, 3);
    }
    const double n = static_cast<double>(included.size());
    CHECK(m.n_anchors == included.size());
    CHECK(m.n_excluded == excluded);
    CHECK(m.mrr == doctest::Approx(mrr / n).epsilon(1e-12));
    CHECK(m.hr_at_1 == doctest::Approx(hr / n).epsilon(1e-12));
    CHECK(m.at_k.at(3).ndcg == doctest::Approx(nd / n).epsilon(1e-12));
  }
  const std::vector<std::size_t> ks = {3};
  CHECK_THROWS(ranking_metrics(std::vector<RankedList>{}, ks));
  const std::vector<RankedList> none = {list_of({0, 0})};
  CHECK_THROWS(ranking_metrics(none, ks));
}

TEST_CASE("moving a relevant item up never lowers the ranking metrics") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> l(static_cast<std::size_t>(rng.uniform_int(2, 8)));
    for (int& v : l) v = rng.bernoulli(0.4) ? 1 : 0;
    l[rng.index(l.size())] = 1;
    const std::size_t i = rng.index(l.size() - 1) + 1;
    if (l[i] != 1 || l[i - 1] != 0) continue;
    auto up = l;
    std::swap(up[i], up[i - 1]);
    const auto a = list_of(l), b = list_of(up);
    for (std::size_t k : {1, 3, 5}) CHECK(ndcg_at(b, k) >= ndcg_at(a, k));
    CHECK(reciprocal_rank(b) >= reciprocal_rank(a));
    CHECK(hit_at_1(b) >= hit_at_1(a));
  }
}

TEST_CASE("metrics are invariant to monotone score transforms") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto items = random_items(rng, true);
    auto moved = items;
    for (auto& it : moved) it.score = std::exp(3.0 * it.score) - 7.0;
    const auto a = make_ranked_list("a", items), b = make_ranked_list("a", moved);
    CHECK(a.labels == b.labels);
    CHECK(ndcg_at(a, 3) == ndcg_at(b, 3));
    CHECK(reciprocal_rank(a) == reciprocal_rank(b));
    std::vector<double> s1, s2;
    std::vector<int> y;
    for (std::size_t i = 0; i < items.size(); ++i) {
      s1.push_back(items[i].score);
      s2.push_back(moved[i].score);
      y.push_back(items[i].label);
    }
    if (std::count(y.begin(), y.end(), 0) > 0) CHECK(auc(s1, y) == auc(s2, y));
  }
}

TEST_CASE("relative deltas and formatting") {
  CHECK(format_relative(0.04477) == "+4.477%");
  CHECK(format_relative(-0.095) == "-9.500%");
  CHECK(format_relative(0.0) == "+0.000%");
  MetricsReport base, run;
  base.auc = 0.8;
  run.auc = 0.6;
  base.mrr = 0.0;
  run.mrr = 0.3;
  const auto d = relative_deltas(run, base);
  CHECK(d[0] == doctest::Approx(-0.25));
  CHECK(d[4] == 0.0);
  CHECK(relative_deltas(base, base) == std::array<double, 5>{});
  CHECK(parse_rec_task("job_rec") == RecTask::JobRec);
  CHECK(parse_rec_task("candidate_rec") == RecTask::CandidateRec);
  CHECK_THROWS_AS(parse_rec_task("jobs"), std::invalid_argument);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("eval");

TEST_CASE("pair scores are probabilities and deterministic") {
  const Corpus& corpus = eval_corpus();
  const TarotModel model(tiny_model_config(corpus), 4);
  const auto split = corpus.split(Split::DownstreamJobRec);
  const auto a = score_pairs(model, corpus, split);
  const auto b = score_pairs(model, corpus, split);
  REQUIRE(a.size() == split.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score > 0.0);
    CHECK(a[i].score < 1.0);
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].label == downstream_label(split[i]->action));
    CHECK(a[i].score == score_documents(model, *corpus.find_profile(a[i].user_id), *corpus.find_job(a[i].job_id)));
  }
  Interaction bogus = *split[0];
  bogus.user_id = "nobody";
  const std::vector<const Interaction*> bad = {&bogus};
  CHECK_THROWS_AS(score_pairs(model, corpus, bad), std::out_of_range);
}

TEST_CASE("swapping the roles of a pair changes its score") {
  const Corpus& corpus = eval_corpus();
  const auto& u = corpus.profiles[0];
  const auto& j = corpus.jobs[0];
  // Recast each document on the other side with the other side's schema.
  auto recast = [](const Document& from, const Document& shape) {
    Document d = shape;
    d.id = from.id;
    for (std::size_t i = 0; i < d.sections.size(); ++i) d.sections[i].sentences = from.sections[i % from.sections.size()].sentences;
    return d;
  };
  for (int seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const TarotModel model(tiny_model_config(corpus), static_cast<std::uint64_t>(seed));
    const Document swapped_user = recast(j, u), swapped_job = recast(u, j);
    CHECK(score_documents(model, u, j) != score_documents(model, swapped_user, swapped_job));
  }
}

TEST_CASE("job and candidate recommendation anchor on different entities") {
  const Corpus& corpus = eval_corpus();
  const TarotModel model(tiny_model_config(corpus), 4);
  const auto jr = run_downstream(model, corpus, RecTask::JobRec);
  const auto cr = run_downstream(model, corpus, RecTask::CandidateRec);
  std::set<std::string> users, jobs;
  for (const auto* i : corpus.split(Split::DownstreamJobRec)) users.insert(i->user_id);
  for (const auto* i : corpus.split(Split::DownstreamCandRec)) jobs.insert(i->job_id);
  CHECK(jr.n_anchors == users.size());
  CHECK(cr.n_anchors == jobs.size());
  CHECK(jr.n_anchors != cr.n_anchors);
  CHECK(jr.n_pairs == corpus.split(Split::DownstreamJobRec).size());
  const nlohmann::json j = jr;
  for (const char* key : {"AUC", "Recall@3", "Precision@3", "NDCG@3", "NDCG@5", "NDCG@25", "MRR", "HR@1"})
    CHECK(j.contains(key));
  const auto val = run_validation(model, corpus, RecTask::JobRec);
  CHECK(val.n_anchors == (users.size() + 1) / 2);
  const std::vector<MetricsReport> reports = {jr, cr};
  const std::string table = format_report_table(reports);
  CHECK(table.find("job_rec") != std::string::npos);
  CHECK(table.find("candidate_rec") != std::string::npos);
}

TEST_CASE("random-weight models score near chance") {
  CorpusConfig c = tiny_corpus_config(31);
  c.n_users = 1000;
  c.n_jobs = 1500;
  c.vocab_size = 2000;
  c.k_skills = 100;
  c.template_words_per_section = 24;
  c.candrec_jobs = 150;
  c.candidates_per_anchor = 8;
  const Corpus corpus = generate(c);
  for (int seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const TarotModel model(tiny_model_config(corpus, 16), static_cast<std::uint64_t>(1000 + seed));
    const double a = run_downstream(model, corpus, RecTask::JobRec).auc;
    CHECK(a >= 0.45);
    CHECK(a <= 0.55);
  }
}

TEST_CASE("held-out accuracies are fractions") {
  const Corpus& corpus = eval_corpus();
  const TarotModel model(tiny_model_config(corpus), 4);
  const auto held = heldout_profiles(corpus);
  REQUIRE_FALSE(held.empty());
  std::set<std::string> pre;
  for (const auto* i : corpus.split(Split::Pretrain)) pre.insert(i->user_id);
  for (const auto* d : held) CHECK_FALSE(pre.contains(d->id));
  const double acc = section_classification_accuracy(model, held);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  std::vector<Sentence> sentences;
  for (const auto& sec : held[0]->sections) sentences.push_back(sec.sentences[0]);
  const double mlm = masked_token_accuracy(model, sentences, 3);
  CHECK(mlm >= 0.0);
  CHECK(mlm <= 1.0);
  CHECK(mlm == masked_token_accuracy(model, sentences, 3));
  const std::vector<const Document*> jobs = {&corpus.jobs[0]};
  CHECK_THROWS(section_classification_accuracy(model, jobs));
}

TEST_CASE("ablation runs every reduced objective") {
  const Corpus& corpus = eval_corpus();
  const auto report = run_ablation(corpus, tiny_train_config(2));
  REQUIRE(report.rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(report.rows[i].removed == kAllTasks[i]);
  const std::string table = format_ablation_table(report);
  CHECK(table.find("w/o App") != std::string::npos);
  CHECK(table.find("+0.000%") != std::string::npos);
  const nlohmann::json j = report;
  CHECK(j.at("rows").size() == 4);
  for (const auto& row : j.at("rows")) CHECK(row.at("deltas").size() == 5);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("grid");

TEST_CASE("grid search picks the best validated cell") {
  const Corpus& corpus = eval_corpus();
  TrainConfig cfg = tiny_train_config(2);
  cfg.grid = {{"learning_rate", {1e-3, 3e-2}}, {"model.hidden_dim", {8, -1}}};
  const auto r = grid_search(corpus, cfg);
  REQUIRE(r.cells.size() == 4);
  std::size_t failed = 0;
  double best = -1.0;
  for (const auto& cell : r.cells) {
    if (!cell.error.empty()) {
      ++failed;
      CHECK_FALSE(cell.metric);
      CHECK(cell.overrides.at("model.hidden_dim") == -1);
    } else {
      REQUIRE(cell.metric);
      best = std::max(best, *cell.metric);
    }
  }
  CHECK(failed == 2);
  CHECK(r.best.model.hidden_dim == 8);
  const auto winner = std::find_if(r.cells.begin(), r.cells.end(), [&](const GridCell& c) { return c.overrides == r.best_overrides; });
  REQUIRE(winner != r.cells.end());
  CHECK(*winner->metric == best);
}

TEST_CASE("grid search breaks ties toward the smaller override set") {
  const Corpus& corpus = eval_corpus();
  TrainConfig cfg = tiny_train_config(2);
  cfg.grid = {{"checkpoint_every", {7, 3}}};
  const auto r = grid_search(corpus, cfg);
  REQUIRE(r.cells.size() == 2);
  CHECK(*r.cells[0].metric == *r.cells[1].metric);
  CHECK(r.best.checkpoint_every == 3);
}

TEST_CASE("grid search errors") {
  const Corpus& corpus = eval_corpus();
  TrainConfig cfg = tiny_train_config(2);
  cfg.grid = {{"model.hidden_dim", {-1}}};
  CHECK_THROWS_AS(grid_search(corpus, cfg), TrainingError);
  cfg.grid = {{"learning_rate", nlohmann::json::array()}};
  CHECK_THROWS_AS(grid_search(corpus, cfg), ConfigError);
  cfg.grid = {{"learning_rate", {1e-3}}};
  cfg.selection_metric = "job_rec_f1";
  CHECK_THROWS_AS(grid_search(corpus, cfg), ConfigError);
}

TEST_SUITE_END();

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "support/fixtures.hpp"
#include "tarot/errors.hpp"
#include "tarot/ops.hpp"
#include "tarot/trainer.hpp"

using namespace tarot;
using namespace tarot::testing;

namespace {

std::map<std::string, std::vector<double>> snapshot(const ParameterStore& params) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : params.parameters()) out[p.name] = p.tensor.to_vector();
  return out;
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

// Parameters reachable only through one task's head.
bool owned_by(Task t, const std::string& name) {
  switch (t) {
    case Task::MLM: return starts_with(name, "heads.mlm.");
    case Task::Exp: return starts_with(name, "heads.exp.");
    case Task::Att: return starts_with(name, "heads.att_");
    case Task::App: return starts_with(name, "heads.app.") || starts_with(name, "cross.");
  }
  return false;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("Adam first step matches the hand computation") {
  ParameterStore params;
  Tensor w = params.add("w", {1, 1}, {1.0});
  Adam adam(1e-4);
  ops::sum_all(ops::scale(w, 0.2)).backward();
  adam.step(params);
  // m_hat = 0.2, v_hat = 0.04, so the step is 1e-4 * 0.2 / (0.2 + 1e-8).
  CHECK(std::abs(w.item() - 0.99990000000500) < 1e-14);
  CHECK(adam.state().t == 1);
}

TEST_CASE("Adam first step on a squared parameter") {
  ParameterStore params;
  Tensor p = params.add("p", {1, 1}, {1.0});
  Adam adam(1e-4);
  ops::sum_all(ops::mul(p, p)).backward();
  adam.step(params);
  CHECK(std::abs(p.item() - (1.0 - 1e-4 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(std::abs(p.item() - 0.9999000000005) < 1e-12);
}

TEST_CASE("Adam step size tends to the learning rate under a constant gradient") {
  ParameterStore params;
  Tensor w = params.add("w", {1, 1}, {1.0});
  Adam adam(1e-3);
  double before = w.item();
  for (int t = 1; t <= 1000; ++t) {
    before = w.item();
    params.zero_grad();
    ops::sum_all(ops::scale(w, 0.2)).backward();
    adam.step(params);
  }
  CHECK(std::abs((before - w.item()) / 1e-3 - 1.0) < 1e-6);
}

TEST_CASE("Adam leaves parameters without a gradient untouched") {
  ParameterStore params;
  Tensor a = params.add("a", {1, 1}, {1.0});
  Tensor b = params.add("b", {1, 1}, {2.0});
  Adam adam(1e-2);
  ops::sum_all(a).backward();
  adam.step(params);
  CHECK(a.item() != 1.0);
  CHECK(b.item() == 2.0);
  CHECK_FALSE(adam.state().moments.contains("b"));
  CHECK_THROWS_AS(Adam(0.0), ConfigError);
}

TEST_CASE("a zero weight freezes the parameters only its task reaches") {
  const Corpus& corpus = tiny_corpus();
  for (Task off : kAllTasks) {
    CAPTURE(task_label(off));
    TrainConfig cfg = tiny_train_config();
    TarotModel model(model_config_for(corpus, cfg), 1);
    LambdaWeights lambda;
    lambda.get(off) = 0.0;
    PretrainSampler sampler(corpus, 3);
    Adam adam(1e-2);
    Rng mask_rng(4);
    const auto before = snapshot(model.parameters());
    for (int s = 1; s <= 2; ++s) train_step(model, sampler.sample(cfg.batch, lambda), lambda, adam, mask_rng, s);
    const auto after = snapshot(model.parameters());
    for (const auto& [name, v] : before) {
      CAPTURE(name);
      if (owned_by(off, name)) CHECK(after.at(name) == v);
      for (Task on : kAllTasks)
        if (on != off && owned_by(on, name)) CHECK(after.at(name) != v);
    }
  }
}

TEST_CASE("sampler draws labelled pretrain pairs only") {
  const Corpus& corpus = tiny_corpus();
  PretrainSampler sampler(corpus, 9);
  std::set<std::string> pretrain_users;
  for (const auto* i : corpus.split(Split::Pretrain)) pretrain_users.insert(i->user_id);
  for (const auto& p : sampler.pairs()) {
    CHECK(p.label != PretrainLabel::Excluded);
    CHECK(pretrain_users.contains(p.user->id));
  }
  for (const auto* d : sampler.profiles()) CHECK(pretrain_users.contains(d->id));
  LambdaWeights only_app{0.0, 0.0, 0.0, 1.0};
  const auto in = sampler.sample({4, 2, 2, 5}, only_app);
  CHECK(in.mlm_sentences.empty());
  CHECK(in.exp_profiles.empty());
  CHECK(in.att_profiles.empty());
  CHECK(in.app_pairs.size() == 5);
}

TEST_CASE("a non-finite loss stops training") {
  const Corpus& corpus = tiny_corpus();
  const TrainConfig cfg = tiny_train_config();
  TarotModel model(model_config_for(corpus, cfg), 1);
  model.parameters().get("heads.exp.bias").mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  PretrainSampler sampler(corpus, 3);
  Adam adam(1e-3);
  Rng mask_rng(4);
  try {
    train_step(model, sampler.sample(cfg.batch, cfg.lambda), cfg.lambda, adam, mask_rng, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("Exp") != std::string::npos);
  }
}

TEST_CASE("pretraining is deterministic in the seed") {
  const Corpus& corpus = tiny_corpus();
  const TrainConfig cfg = tiny_train_config(4);
  const auto a = pretrain(corpus, cfg);
  const auto b = pretrain(corpus, cfg);
  CHECK(snapshot(a.model.parameters()) == snapshot(b.model.parameters()));
  REQUIRE(a.log.entries.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.log.entries[i].step == static_cast<int>(i) + 1);
    CHECK(a.log.entries[i].losses == b.log.entries[i].losses);
    CHECK(a.log.entries[i].joint == b.log.entries[i].joint);
  }
  CHECK(a.log.config_hash == b.log.config_hash);
  TrainConfig other = cfg;
  other.seed = 12;
  CHECK(snapshot(pretrain(corpus, other).model.parameters()) != snapshot(a.model.parameters()));
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  const Corpus& corpus = tiny_corpus();
  const auto run = pretrain(corpus, tiny_train_config(2));
  TempDir dir("checkpoint");
  const auto path = dir / "model.bin";
  save_checkpoint(path, run.model, &run.adam, {{"note", "x"}});
  const TarotModel loaded = load_checkpoint(path);
  CHECK(loaded.config() == run.model.config());
  CHECK(snapshot(loaded.parameters()) == snapshot(run.model.parameters()));
  const auto u1 = run.model.hierarchy().encode_document(corpus.profiles[0]);
  const auto j1 = run.model.hierarchy().encode_document(corpus.jobs[0]);
  const auto u2 = loaded.hierarchy().encode_document(corpus.profiles[0]);
  const auto j2 = loaded.hierarchy().encode_document(corpus.jobs[0]);
  CHECK(run.model.heads().app_logits(run.model.hierarchy().cross_interact(u1, j1)).item() ==
        loaded.heads().app_logits(loaded.hierarchy().cross_interact(u2, j2)).item());

  Adam restored(1.0);
  restored.load_from(load_archive(path));
  CHECK(restored.state().t == run.adam.state().t);
  CHECK(restored.learning_rate() == run.adam.learning_rate());
  REQUIRE(restored.state().moments.size() == run.adam.state().moments.size());
  for (const auto& [name, mom] : run.adam.state().moments) {
    CHECK(restored.state().moments.at(name).m == mom.m);
    CHECK(restored.state().moments.at(name).v == mom.v);
  }
}

TEST_CASE("intermediate checkpoints and step callback") {
  const Corpus& corpus = tiny_corpus();
  TrainConfig cfg = tiny_train_config(4);
  cfg.checkpoint_every = 2;
  TempDir dir("ckpt_every");
  int calls = 0;
  PretrainOptions opts;
  opts.checkpoint_dir = dir.path();
  opts.on_step = [&](const TrainLogEntry&) { ++calls; };
  pretrain(corpus, cfg, opts);
  CHECK(calls == 4);
  CHECK(std::filesystem::exists(dir / "checkpoint_step2.bin"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint_step4.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoint.bin"));
}

TEST_CASE("train config parsing and validation") {
  const TrainConfig def;
  const nlohmann::json j = def;
  CHECK(j.get<TrainConfig>() == def);
  CHECK_THROWS_AS(nlohmann::json({{"stepz", 3}}).get<TrainConfig>(), ConfigError);
  TrainConfig c;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = {0.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda.app = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("dot-path overrides") {
  nlohmann::json doc = TrainConfig{};
  apply_override(doc, "lambda.App=0");
  apply_override(doc, "learning_rate=0.01");
  apply_override(doc, "selection_metric=job_rec_mrr");
  apply_override(doc, "model.hidden_dim=32");
  const auto c = doc.get<TrainConfig>();
  CHECK(c.lambda.app == 0.0);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.selection_metric == "job_rec_mrr");
  CHECK(c.model.hidden_dim == 32);
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "=3"), ConfigError);
}

TEST_CASE("config hash tracks the config") {
  TrainConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(corpus_hash(tiny_corpus()) == corpus_hash(tiny_corpus()));
}

TEST_SUITE_END();

#include "tarot/trainer.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <unordered_map>

#include "tarot/errors.hpp"
#include "tarot/hash.hpp"
#include "tarot/ops.hpp"

namespace tarot {

using nlohmann::json;

void TrainConfig::validate() const {
  if (steps <= 0) throw ConfigError("train config: steps must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train config: learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigError("train config: adam betas must lie in [0, 1) and eps must be positive");
  }
  if (checkpoint_every < 0) throw ConfigError("train config: checkpoint_every must be non-negative");
  lambda.validate();
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("train config: batch.") + name + " must be positive");
  };
  if (lambda.active(Task::MLM)) positive(batch.mlm, "mlm");
  if (lambda.active(Task::Exp)) positive(batch.exp, "exp");
  if (lambda.active(Task::Att)) positive(batch.att, "att");
  if (lambda.active(Task::App)) positive(batch.app, "app");
  if (model.hidden_dim <= 0 || model.n_layers < 0 || model.ffn_dim < 0 || model.max_sentence_len <= 0) {
    throw ConfigError("train config: invalid model settings");
  }
  if (!grid.is_object()) throw ConfigError("train config: grid must be an object of dot-path -> value list");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"seed", c.seed},
           {"steps", c.steps},
           {"batch", {{"mlm", c.batch.mlm}, {"exp", c.batch.exp}, {"att", c.batch.att}, {"app", c.batch.app}}},
           {"lambda", c.lambda},
           {"learning_rate", c.learning_rate},
           {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
           {"checkpoint_every", c.checkpoint_every},
           {"model",
            {{"hidden_dim", c.model.hidden_dim},
             {"n_layers", c.model.n_layers},
             {"ffn_dim", c.model.ffn_dim},
             {"max_sentence_len", c.model.max_sentence_len}}},
           {"grid", c.grid},
           {"selection_metric", c.selection_metric}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> kKnown = {"seed", "steps", "batch", "lambda", "learning_rate", "adam",
                                                "checkpoint_every", "model", "grid", "selection_metric"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.contains(it.key())) throw ConfigError("train config: unknown field '" + it.key() + "'");
  }
  auto opt = [](const json& o, const char* key, auto& field) {
    if (o.contains(key)) o.at(key).get_to(field);
  };
  opt(j, "seed", c.seed);
  opt(j, "steps", c.steps);
  if (j.contains("batch")) {
    const auto& b = j.at("batch");
    opt(b, "mlm", c.batch.mlm);
    opt(b, "exp", c.batch.exp);
    opt(b, "att", c.batch.att);
    opt(b, "app", c.batch.app);
  }
  opt(j, "lambda", c.lambda);
  opt(j, "learning_rate", c.learning_rate);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    opt(a, "beta1", c.adam.beta1);
    opt(a, "beta2", c.adam.beta2);
    opt(a, "eps", c.adam.eps);
  }
  opt(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    opt(m, "hidden_dim", c.model.hidden_dim);
    opt(m, "n_layers", c.model.n_layers);
    opt(m, "ffn_dim", c.model.ffn_dim);
    opt(m, "max_sentence_len", c.model.max_sentence_len);
  }
  opt(j, "grid", c.grid);
  opt(j, "selection_metric", c.selection_metric);
}

void set_dot_path(json& doc, const std::string& path, json value) {
  if (path.empty()) throw ConfigError("override: empty path");
  json* cur = &doc;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override: malformed path '" + path + "'");
    if (!cur->is_object()) {
      if (cur->is_null()) *cur = json::object();
      else throw ConfigError("override: '" + path + "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(value);
      return;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_dot_path(doc, path, std::move(value));
}

ModelConfig model_config_for(const Corpus& corpus, const TrainConfig& config) {
  ModelConfig m;
  m.encoder.vocab_size = corpus.config.vocab_size;
  m.encoder.hidden_dim = config.model.hidden_dim;
  m.encoder.n_layers = config.model.n_layers;
  m.encoder.ffn_dim = config.model.ffn_dim;
  m.encoder.max_sentence_len = config.model.max_sentence_len;
  m.k_skills = corpus.config.k_skills;
  return m;
}

Adam::Adam(double learning_rate, AdamConfig config) : lr_(learning_rate), config_(config) {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
}

void Adam::step(ParameterStore& params) {
  ++state_.t;
  const double t = static_cast<double>(state_.t);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& p : params.parameters()) {
    if (!p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    auto& mom = state_.moments[p.name];
    if (mom.m.empty()) {
      mom.m.assign(g.size(), 0.0);
      mom.v.assign(g.size(), 0.0);
    }
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g[i];
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::save_to(Archive& archive) const {
  archive.metadata["adam"] = {{"t", state_.t}, {"learning_rate", lr_}, {"beta1", config_.beta1},
                              {"beta2", config_.beta2}, {"eps", config_.eps}};
  for (const auto& [name, mom] : state_.moments) {
    archive.arrays.push_back({"adam.m/" + name, {mom.m.size()}, mom.m});
    archive.arrays.push_back({"adam.v/" + name, {mom.v.size()}, mom.v});
  }
}

void Adam::load_from(const Archive& archive) {
  const auto& meta = archive.metadata.at("adam");
  state_ = {};
  state_.t = meta.at("t").get<std::uint64_t>();
  lr_ = meta.at("learning_rate").get<double>();
  config_ = {meta.at("beta1").get<double>(), meta.at("beta2").get<double>(), meta.at("eps").get<double>()};
  for (const auto& a : archive.arrays) {
    if (a.name.rfind("adam.m/", 0) == 0) state_.moments[a.name.substr(7)].m = a.values;
    if (a.name.rfind("adam.v/", 0) == 0) state_.moments[a.name.substr(7)].v = a.values;
  }
}

PretrainSampler::PretrainSampler(const Corpus& corpus, std::uint64_t seed) : rng_(seed) {
  std::set<std::string> users, jobs;
  for (const auto* i : corpus.split(Split::Pretrain)) {
    const Document* u = corpus.find_profile(i->user_id);
    const Document* j = corpus.find_job(i->job_id);
    if (!u || !j) throw ConfigError("pretrain interaction references unknown id " + (u ? i->job_id : i->user_id));
    users.insert(u->id);
    jobs.insert(j->id);
    const PretrainLabel label = pretrain_label(i->action);
    if (label != PretrainLabel::Excluded) pairs_.push_back({u, j, label});
  }
  for (const auto& id : users) profiles_.push_back(corpus.find_profile(id));
  for (const auto& id : jobs) jobs_.push_back(corpus.find_job(id));
  if (pairs_.empty()) throw ConfigError("corpus has an empty pretrain split");
}

StepInputs PretrainSampler::sample(const BatchSizes& sizes, const LambdaWeights& lambda) {
  StepInputs in;
  auto pick = [&](const std::vector<const Document*>& pool) { return pool[rng_.index(pool.size())]; };
  if (lambda.active(Task::MLM)) {
    for (int i = 0; i < sizes.mlm; ++i) {
      const Document* d = rng_.bernoulli(0.5) ? pick(profiles_) : pick(jobs_);
      const Section& s = d->sections[rng_.index(d->sections.size())];
      in.mlm_sentences.push_back(s.sentences[rng_.index(s.sentences.size())]);
    }
  }
  if (lambda.active(Task::Exp)) {
    for (int i = 0; i < sizes.exp; ++i) in.exp_profiles.push_back(pick(profiles_));
  }
  if (lambda.active(Task::Att)) {
    for (int i = 0; i < sizes.att; ++i) in.att_profiles.push_back(pick(profiles_));
    for (int i = 0; i < sizes.att; ++i) in.att_jobs.push_back(pick(jobs_));
  }
  if (lambda.active(Task::App)) {
    for (int i = 0; i < sizes.app; ++i) in.app_pairs.push_back(pairs_[rng_.index(pairs_.size())]);
  }
  return in;
}

json to_json_line(const TrainLogEntry& e) {
  json losses = json::object();
  for (const auto& [t, v] : e.losses) losses[std::string(task_label(t))] = v;
  return json{{"step", e.step}, {"losses", losses}, {"joint", e.joint}, {"wall_ms", e.wall_ms}};
}

std::map<Task, Tensor> compute_task_losses(const TarotModel& model, const StepInputs& inputs,
                                           const LambdaWeights& lambda, Rng& mask_rng) {
  const Hierarchy& h = model.hierarchy();
  const Heads& heads = model.heads();
  std::map<Task, Tensor> losses;

  // Encode every document needed this step once, in a single packed pass.
  std::vector<const Document*> docs;
  std::unordered_map<const Document*, std::size_t> slot;
  auto want = [&](const Document* d) {
    if (slot.emplace(d, docs.size()).second) docs.push_back(d);
  };
  const bool exp_on = lambda.active(Task::Exp), att_on = lambda.active(Task::Att), app_on = lambda.active(Task::App);
  if (exp_on) for (const auto* d : inputs.exp_profiles) want(d);
  if (att_on) {
    for (const auto* d : inputs.att_profiles) want(d);
    for (const auto* d : inputs.att_jobs) want(d);
  }
  if (app_on) {
    for (const auto& p : inputs.app_pairs) {
      want(p.user);
      want(p.job);
    }
  }
  std::vector<EmbeddingHierarchy> enc = h.encode_documents(docs, false, false);
  auto of = [&](const Document* d) -> EmbeddingHierarchy& { return enc[slot.at(d)]; };

  if (lambda.active(Task::MLM)) {
    std::vector<Sentence> masked;
    std::vector<std::size_t> rows;
    MlmBatch batch;
    const int vocab = model.config().encoder.vocab_size;
    std::size_t offset = 0;
    for (const Sentence& s : inputs.mlm_sentences) {
      MlmMasking m = apply_mlm_mask(s, vocab, mask_rng);
      for (std::size_t k = 0; k < m.positions.size(); ++k) {
        rows.push_back(offset + 1 + m.positions[k]);
        batch.targets.push_back(m.targets[k]);
      }
      offset += s.size() + 2;
      masked.push_back(std::move(m.masked));
    }
    if (masked.empty()) throw std::invalid_argument("MLM is active but the step has no sentences");
    batch.hidden = ops::gather_rows(h.encoder().encode(masked).hidden, rows);
    losses[Task::MLM] = loss_mlm(heads, batch);
  }
  if (exp_on) {
    ExpBatch batch;
    for (const auto* d : inputs.exp_profiles)
      for (SectionName n : kProfileSections) batch.samples.push_back(of(d).section(n));
    losses[Task::Exp] = loss_exp(heads, batch);
  }
  if (att_on) {
    auto side_loss = [&](Side side, const std::vector<const Document*>& group) {
      AttBatch batch;
      batch.side = side;
      for (const auto* d : group) {
        auto& e = of(d);
        if (!e.individual_masked) e.individual_masked = h.build_individual(e, true);
        batch.inputs.push_back(*e.individual_masked);
        batch.skill_ids.push_back(d->skill_ids);
      }
      return loss_att(heads, batch);
    };
    losses[Task::Att] = ops::add(side_loss(Side::Profile, inputs.att_profiles), side_loss(Side::Job, inputs.att_jobs));
  }
  if (app_on) {
    AppBatch batch;
    for (const auto& p : inputs.app_pairs) {
      auto& u = of(p.user);
      auto& j = of(p.job);
      if (!u.individual) u.individual = h.build_individual(u, false);
      if (!j.individual) j.individual = h.build_individual(j, false);
      batch.pairs.push_back(h.cross_interact(u, j));
      batch.labels.push_back(p.label);
    }
    losses[Task::App] = loss_app(heads, batch);
  }
  return losses;
}

TrainLogEntry train_step(TarotModel& model, const StepInputs& inputs, const LambdaWeights& lambda, Adam& adam,
                         Rng& mask_rng, int step_index) {
  const auto start = std::chrono::steady_clock::now();
  const auto losses = compute_task_losses(model, inputs, lambda, mask_rng);
  TrainLogEntry entry;
  entry.step = step_index;
  for (const auto& [task, loss] : losses) {
    const double v = loss.item();
    if (!std::isfinite(v)) throw TrainingError("non-finite " + std::string(task_label(task)) + " loss at step " + std::to_string(step_index));
    entry.losses[task] = v;
  }
  const Tensor joint = joint_loss(losses, lambda);
  entry.joint = joint.item();
  if (!std::isfinite(entry.joint)) throw TrainingError("non-finite joint loss at step " + std::to_string(step_index));
  joint.backward();
  adam.step(model.parameters());
  model.parameters().zero_grad();
  entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return entry;
}

std::string config_hash(const TrainConfig& config) { return sha256_hex(json(config).dump()); }
std::string corpus_hash(const Corpus& corpus) { return sha256_hex(serialize_corpus(corpus)); }

void save_checkpoint(const std::filesystem::path& path, const TarotModel& model, const Adam* adam,
                     const json& metadata) {
  Archive archive = model.to_archive(metadata);
  if (adam) adam->save_to(archive);
  save_archive(path, archive);
}

TarotModel load_checkpoint(const std::filesystem::path& path) { return TarotModel::from_archive(load_archive(path)); }

PretrainResult pretrain(const Corpus& corpus, const TrainConfig& config, const PretrainOptions& options) {
  config.validate();
  if (corpus.split(Split::Pretrain).empty()) throw ConfigError("corpus has an empty pretrain split");
  PretrainResult result{TarotModel(model_config_for(corpus, config), config.seed), {}, Adam(config.learning_rate, config.adam)};
  result.log.config_hash = config_hash(config);
  result.log.corpus_hash = corpus_hash(corpus);

  PretrainSampler sampler(corpus, derive_seed(config.seed, "batches"));
  Rng mask_rng(derive_seed(config.seed, "mlm_mask"));
  const json meta = {{"train_config", config}, {"config_hash", result.log.config_hash},
                     {"corpus_hash", result.log.corpus_hash}};
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  for (int step = 1; step <= config.steps; ++step) {
    const StepInputs inputs = sampler.sample(config.batch, config.lambda);
    TrainLogEntry entry = train_step(result.model, inputs, config.lambda, result.adam, mask_rng, step);
    if (options.on_step) options.on_step(entry);
    result.log.entries.push_back(std::move(entry));
    if (options.checkpoint_dir && config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step != config.steps) {
      json m = meta;
      m["step"] = step;
      save_checkpoint(*options.checkpoint_dir / ("checkpoint_step" + std::to_string(step) + ".bin"), result.model,
                      &result.adam, m);
    }
  }
  if (options.checkpoint_dir) {
    json m = meta;
    m["step"] = config.steps;
    save_checkpoint(*options.checkpoint_dir / "checkpoint.bin", result.model, &result.adam, m);
  }
  return result;
}

}  // namespace tarot

#include "tarot/heads.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tarot/errors.hpp"
#include "tarot/ops.hpp"

namespace tarot {

namespace {
constexpr double kInitStd = 0.02;
constexpr std::array<std::string_view, 4> kTaskLabels = {"MLM", "Exp", "Att", "App"};
}  // namespace

std::string_view task_label(Task task) { return kTaskLabels[static_cast<std::size_t>(task)]; }

Task parse_task(std::string_view label) {
  for (std::size_t i = 0; i < kTaskLabels.size(); ++i)
    if (kTaskLabels[i] == label) return static_cast<Task>(i);
  throw ConfigError("unknown task '" + std::string(label) + "' (expected MLM, Exp, Att or App)");
}

double LambdaWeights::get(Task t) const {
  switch (t) {
    case Task::MLM: return mlm;
    case Task::Exp: return exp;
    case Task::Att: return att;
    case Task::App: return app;
  }
  return 0.0;
}

double& LambdaWeights::get(Task t) {
  switch (t) {
    case Task::MLM: return mlm;
    case Task::Exp: return exp;
    case Task::Att: return att;
    case Task::App: break;
  }
  return app;
}

void LambdaWeights::validate() const {
  bool any = false;
  for (Task t : kAllTasks) {
    const double w = get(t);
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("lambda." + std::string(task_label(t)) + " must be a finite non-negative number");
    }
    any = any || w > 0.0;
  }
  if (!any) throw ConfigError("every lambda weight is zero");
}

void to_json(nlohmann::json& j, const LambdaWeights& l) {
  j = nlohmann::json{{"MLM", l.mlm}, {"Exp", l.exp}, {"Att", l.att}, {"App", l.app}};
}

void from_json(const nlohmann::json& j, LambdaWeights& l) {
  for (auto it = j.begin(); it != j.end(); ++it) l.get(parse_task(it.key())) = it.value().get<double>();
}

Tensor Heads::Linear::operator()(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

Heads::Heads(std::size_t hidden_dim, std::size_t vocab_size, std::size_t k_skills, ParameterStore& params, Rng& rng)
    : k_skills_(k_skills) {
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    Linear l;
    l.weight = params.add_truncated_normal(name + ".weight", {in, out}, kInitStd, rng);
    l.bias = params.add_constant(name + ".bias", {1, out}, 0.0);
    return l;
  };
  mlm_ = linear("heads.mlm", hidden_dim, vocab_size);
  exp_ = linear("heads.exp", hidden_dim, kProfileSections.size());
  att_profile_ = linear("heads.att_profile", hidden_dim, k_skills);
  att_job_ = linear("heads.att_job", hidden_dim, k_skills);
  app_ = linear("heads.app", 2 * hidden_dim, 1);
}

Tensor Heads::mlm_logits(const Tensor& hidden) const { return mlm_(hidden); }
Tensor Heads::exp_logits(const Tensor& sections) const { return exp_(sections); }
Tensor Heads::att_logits(Side side, const Tensor& individual) const {
  return side == Side::Profile ? att_profile_(individual) : att_job_(individual);
}
Tensor Heads::app_logits(const Tensor& pairs) const { return app_(pairs); }
Tensor Heads::app_logits(const InteractionEmbedding& pair) const {
  return app_(ops::concat({pair.final_user, pair.final_job}, 1));
}

Tensor loss_mlm(const Heads& heads, const MlmBatch& batch) {
  if (batch.targets.empty()) throw std::invalid_argument("loss_mlm: batch has no masked positions");
  return ops::cross_entropy(heads.mlm_logits(batch.hidden), batch.targets);
}

Tensor loss_exp(const Heads& heads, const ExpBatch& batch) {
  if (batch.samples.empty()) throw std::invalid_argument("loss_exp: empty batch");
  std::vector<Tensor> rows;
  std::vector<std::int64_t> targets;
  for (const auto& s : batch.samples) {
    if (section_side(s.name) != Side::Profile) {
      throw std::invalid_argument("loss_exp: experience classification is defined on profile sections only, got job section " +
                                  std::string(section_label(s.name)));
    }
    rows.push_back(s.vector);
    targets.push_back(static_cast<std::int64_t>(schema_index(s.name)));
  }
  return ops::cross_entropy(heads.exp_logits(ops::concat(rows, 0)), targets);
}

Tensor loss_att(const Heads& heads, const AttBatch& batch) {
  if (batch.inputs.empty()) throw std::invalid_argument("loss_att: empty batch");
  if (batch.skill_ids.size() != batch.inputs.size()) throw std::invalid_argument("loss_att: label count mismatch");
  const std::size_t k = heads.k_skills();
  std::vector<Tensor> rows;
  std::vector<double> targets(batch.inputs.size() * k, 0.0);
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    const auto& in = batch.inputs[i];
    if (!in.skills_masked) {
      throw std::invalid_argument("loss_att: input " + in.doc_id + " was built without masking the Skills section");
    }
    if (in.side != batch.side) throw std::invalid_argument("loss_att: input " + in.doc_id + " is on the wrong side");
    rows.push_back(in.vector);
    for (int s : batch.skill_ids[i]) {
      if (s < 0 || static_cast<std::size_t>(s) >= k) throw std::invalid_argument("loss_att: skill id out of range");
      targets[i * k + static_cast<std::size_t>(s)] = 1.0;
    }
  }
  return ops::bce_with_logits(heads.att_logits(batch.side, ops::concat(rows, 0)), targets);
}

Tensor loss_app(const Heads& heads, const AppBatch& batch) {
  if (batch.pairs.empty()) throw std::invalid_argument("loss_app: empty batch");
  if (batch.labels.size() != batch.pairs.size()) throw std::invalid_argument("loss_app: label count mismatch");
  std::vector<Tensor> rows;
  std::vector<double> targets;
  for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
    if (batch.labels[i] == PretrainLabel::Excluded) {
      throw std::invalid_argument("loss_app: batch contains an excluded (skip) interaction");
    }
    rows.push_back(ops::concat({batch.pairs[i].final_user, batch.pairs[i].final_job}, 1));
    targets.push_back(batch.labels[i] == PretrainLabel::Positive ? 1.0 : 0.0);
  }
  return ops::bce_with_logits(heads.app_logits(ops::concat(rows, 0)), targets);
}

Tensor joint_loss(const std::map<Task, Tensor>& losses, const LambdaWeights& lambda) {
  lambda.validate();
  Tensor total;
  for (Task t : kAllTasks) {
    const double w = lambda.get(t);
    if (w <= 0.0) continue;
    auto it = losses.find(t);
    if (it == losses.end()) throw std::invalid_argument("joint_loss: missing loss for active task " + std::string(task_label(t)));
    const Tensor term = w == 1.0 ? it->second : ops::scale(it->second, w);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

}  // namespace tarot

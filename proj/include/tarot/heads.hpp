#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tarot/corpus.hpp"
#include "tarot/hierarchy.hpp"
#include "tarot/parameters.hpp"
#include "tarot/tensor.hpp"

namespace tarot {

enum class Task : std::uint8_t { MLM, Exp, Att, App };
inline constexpr std::array<Task, 4> kAllTasks = {Task::MLM, Task::Exp, Task::Att, Task::App};

std::string_view task_label(Task task);
Task parse_task(std::string_view label);

// Per-task loss weights of the joint objective.
struct LambdaWeights {
  double mlm = 1.0;
  double exp = 1.0;
  double att = 1.0;
  double app = 1.0;

  double get(Task t) const;
  double& get(Task t);
  bool active(Task t) const { return get(t) > 0.0; }
  void validate() const;
  bool operator==(const LambdaWeights&) const = default;
};

void to_json(nlohmann::json& j, const LambdaWeights& l);
void from_json(const nlohmann::json& j, LambdaWeights& l);

// Hidden states at masked positions and the original ids there.
struct MlmBatch {
  Tensor hidden;  // m x d
  std::vector<TokenId> targets;
};

// Profile section embeddings labelled by their section name.
struct ExpBatch {
  std::vector<SectionEmbedding> samples;
};

// Skill-masked individual embeddings with their skill labels.
struct AttBatch {
  Side side = Side::Profile;
  std::vector<IndividualEmbedding> inputs;
  std::vector<std::vector<int>> skill_ids;
};

struct AppBatch {
  std::vector<InteractionEmbedding> pairs;
  std::vector<PretrainLabel> labels;
};

class Heads {
 public:
  Heads() = default;
  Heads(std::size_t hidden_dim, std::size_t vocab_size, std::size_t k_skills, ParameterStore& params, Rng& rng);

  std::size_t k_skills() const { return k_skills_; }

  Tensor mlm_logits(const Tensor& hidden) const;      // m x vocab
  Tensor exp_logits(const Tensor& sections) const;    // n x 5
  Tensor att_logits(Side side, const Tensor& individual) const;  // n x k_skills
  // Input rows are concat(F_u, F_j).
  Tensor app_logits(const Tensor& pairs) const;       // n x 1
  Tensor app_logits(const InteractionEmbedding& pair) const;

 private:
  struct Linear {
    Tensor weight, bias;
    Tensor operator()(const Tensor& x) const;
  };
  std::size_t k_skills_ = 0;
  Linear mlm_, exp_, att_profile_, att_job_, app_;
};

// Mean cross-entropy over masked positions. Throws on an empty batch.
Tensor loss_mlm(const Heads& heads, const MlmBatch& batch);
// Mean 5-way softmax cross-entropy over profile section names. Throws on job sections.
Tensor loss_exp(const Heads& heads, const ExpBatch& batch);
// Mean one-vs-all binary cross-entropy over samples and skill classes. Throws
// unless every input was built with the Skills section masked.
Tensor loss_att(const Heads& heads, const AttBatch& batch);
// Mean binary cross-entropy of the application head. Throws on excluded rows.
Tensor loss_app(const Heads& heads, const AppBatch& batch);

// Weighted sum over tasks with lambda > 0, in MLM, Exp, Att, App order;
// zero-weight tasks are skipped and need no entry in `losses`.
Tensor joint_loss(const std::map<Task, Tensor>& losses, const LambdaWeights& lambda);

}  // namespace tarot

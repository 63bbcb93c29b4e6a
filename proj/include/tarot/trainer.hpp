#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tarot/corpus.hpp"
#include "tarot/heads.hpp"
#include "tarot/model.hpp"
#include "tarot/random.hpp"

namespace tarot {

struct BatchSizes {
  int mlm = 16;  // sentences
  int exp = 4;   // profiles; each contributes all five sections
  int att = 4;   // profiles and, separately, jobs
  int app = 8;   // labelled pretrain pairs
  bool operator==(const BatchSizes&) const = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

// Model dimensions chosen by the training run; vocabulary and skill count come from the corpus.
struct ModelSettings {
  int hidden_dim = 512;
  int n_layers = 2;
  int ffn_dim = 0;
  int max_sentence_len = 16;
  bool operator==(const ModelSettings&) const = default;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  int steps = 300;
  BatchSizes batch;
  LambdaWeights lambda;
  double learning_rate = 1e-4;
  AdamConfig adam;
  int checkpoint_every = 0;  // 0 disables intermediate checkpoints
  ModelSettings model;
  // Dot-path -> list of values, e.g. {"learning_rate": [1e-4, 1e-3]}.
  nlohmann::json grid = nlohmann::json::object();
  std::string selection_metric = "job_rec_auc";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and kept as a string otherwise. Throws ConfigError on bad syntax.
void apply_override(nlohmann::json& doc, const std::string& assignment);
void set_dot_path(nlohmann::json& doc, const std::string& path, nlohmann::json value);

ModelConfig model_config_for(const Corpus& corpus, const TrainConfig& config);

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::map<std::string, Moments> moments;
  std::uint64_t t = 0;
};

// Adam with bias correction. Parameters without a gradient in a step are left
// untouched, moments included.
class Adam {
 public:
  Adam(double learning_rate, AdamConfig config = {});

  void step(ParameterStore& params);
  const AdamState& state() const { return state_; }
  double learning_rate() const { return lr_; }

  void save_to(Archive& archive) const;
  void load_from(const Archive& archive);

 private:
  double lr_;
  AdamConfig config_;
  AdamState state_;
};

struct PairSample {
  const Document* user = nullptr;
  const Document* job = nullptr;
  PretrainLabel label = PretrainLabel::Negative;
};

// Raw inputs for one optimisation step, one group per active task.
struct StepInputs {
  std::vector<Sentence> mlm_sentences;
  std::vector<const Document*> exp_profiles;
  std::vector<const Document*> att_profiles;
  std::vector<const Document*> att_jobs;
  std::vector<PairSample> app_pairs;
};

// Draws step inputs from the pretrain split: profiles of pretrain users, jobs
// that appear in pretrain interactions, and labelled (non-skip) pretrain pairs.
class PretrainSampler {
 public:
  PretrainSampler(const Corpus& corpus, std::uint64_t seed);
  StepInputs sample(const BatchSizes& sizes, const LambdaWeights& lambda);

  const std::vector<const Document*>& profiles() const { return profiles_; }
  const std::vector<const Document*>& jobs() const { return jobs_; }
  const std::vector<PairSample>& pairs() const { return pairs_; }

 private:
  Rng rng_;
  std::vector<const Document*> profiles_;
  std::vector<const Document*> jobs_;
  std::vector<PairSample> pairs_;
};

struct TrainLogEntry {
  int step = 0;
  std::map<Task, double> losses;  // active tasks only
  double joint = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json to_json_line(const TrainLogEntry& e);

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  std::string config_hash;
  std::string corpus_hash;
};

// Builds every active task's loss for `inputs` (MLM masks are drawn from mask_rng).
std::map<Task, Tensor> compute_task_losses(const TarotModel& model, const StepInputs& inputs,
                                           const LambdaWeights& lambda, Rng& mask_rng);

// Forward, joint loss, backward, Adam update, gradient reset. Throws
// TrainingError naming the task when a loss is not finite.
TrainLogEntry train_step(TarotModel& model, const StepInputs& inputs, const LambdaWeights& lambda, Adam& adam,
                         Rng& mask_rng, int step_index);

struct PretrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const TrainLogEntry&)> on_step;
};

struct PretrainResult {
  TarotModel model;
  TrainLog log;
  Adam adam;
};

std::string config_hash(const TrainConfig& config);
std::string corpus_hash(const Corpus& corpus);

// Throws ConfigError on invalid config or an empty pretrain split.
PretrainResult pretrain(const Corpus& corpus, const TrainConfig& config, const PretrainOptions& options = {});

// Model + optimizer checkpoint in the named-tensor archive format.
void save_checkpoint(const std::filesystem::path& path, const TarotModel& model, const Adam* adam,
                     const nlohmann::json& metadata = nlohmann::json::object());
TarotModel load_checkpoint(const std::filesystem::path& path);

struct GridCell {
  nlohmann::json overrides;  // dot-path -> value
  std::optional<double> metric;
  std::string error;
};

struct GridSearchResult {
  TrainConfig best;
  nlohmann::json best_overrides;
  std::vector<GridCell> cells;
};

// One seeded pretrain + validation run per Cartesian-product cell; picks the
// highest metric, breaking ties toward the lexicographically smaller override
// set. Failed cells are reported and skipped.
GridSearchResult grid_search(const Corpus& corpus, const TrainConfig& config);

}  // namespace tarot

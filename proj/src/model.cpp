#include "tarot/model.hpp"

#include <algorithm>

#include "tarot/errors.hpp"
#include "tarot/random.hpp"

namespace tarot {

void ModelConfig::validate() const {
  encoder.validate();
  if (k_skills <= 0) throw ConfigError("model: k_skills must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder}, {"k_skills", c.k_skills}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("encoder").get_to(c.encoder);
  j.at("k_skills").get_to(c.k_skills);
}

namespace {
Rng init_rng(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  return Rng(derive_seed(seed, "init"));
}
}  // namespace

TarotModel::TarotModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  Rng rng = init_rng(config_, init_seed);
  hierarchy_ = Hierarchy(config_.encoder, params_, rng);
  heads_ = Heads(static_cast<std::size_t>(config_.encoder.hidden_dim), static_cast<std::size_t>(config_.encoder.vocab_size),
                 static_cast<std::size_t>(config_.k_skills), params_, rng);
}

Archive TarotModel::to_archive(const nlohmann::json& extra_metadata) const {
  Archive a;
  a.metadata = extra_metadata.is_object() ? extra_metadata : nlohmann::json::object();
  a.metadata["model_config"] = config_;
  for (const auto& p : params_.parameters()) {
    a.arrays.push_back({p.name, p.tensor.shape(), p.tensor.to_vector()});
  }
  return a;
}

void TarotModel::load_values(const Archive& archive) {
  for (auto& p : params_.parameters()) {
    const NamedArray* a = archive.find(p.name);
    if (!a) throw std::runtime_error("checkpoint is missing parameter " + p.name);
    if (a->shape != p.tensor.shape()) {
      throw ShapeError("checkpoint parameter " + p.name + " has shape " + shape_string(a->shape) + ", model expects " +
                       shape_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(a->values.begin(), a->values.end(), dst.begin());
  }
}

TarotModel TarotModel::from_archive(const Archive& archive) {
  if (!archive.metadata.contains("model_config")) throw std::runtime_error("checkpoint has no model_config");
  TarotModel model(archive.metadata.at("model_config").get<ModelConfig>(), 0);
  model.load_values(archive);
  return model;
}

}  // namespace tarot

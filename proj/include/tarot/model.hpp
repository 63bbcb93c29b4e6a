#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "tarot/encoder.hpp"
#include "tarot/heads.hpp"
#include "tarot/hierarchy.hpp"
#include "tarot/parameters.hpp"

namespace tarot {

struct ModelConfig {
  EncoderConfig encoder;
  int k_skills = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Encoder, fusion and cross-attention layers plus the four task heads, all
// registered in one parameter store.
class TarotModel {
 public:
  TarotModel(const ModelConfig& config, std::uint64_t init_seed);

  TarotModel(TarotModel&&) = default;
  TarotModel& operator=(TarotModel&&) = default;
  TarotModel(const TarotModel&) = delete;
  TarotModel& operator=(const TarotModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const Hierarchy& hierarchy() const { return hierarchy_; }
  const Heads& heads() const { return heads_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  // Archive with "model_config" in the metadata; extra metadata is merged in.
  Archive to_archive(const nlohmann::json& extra_metadata = nlohmann::json::object()) const;
  void load_values(const Archive& archive);
  static TarotModel from_archive(const Archive& archive);

 private:
  ModelConfig config_;
  ParameterStore params_;
  Hierarchy hierarchy_;
  Heads heads_;
};

}  // namespace tarot

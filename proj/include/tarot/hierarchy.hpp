#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tarot/corpus.hpp"
#include "tarot/encoder.hpp"
#include "tarot/parameters.hpp"
#include "tarot/tensor.hpp"

namespace tarot {

enum class FusionLevel : std::uint8_t { Section, Individual };

// Attention fusion: the mean-pooled element embedding queries the elements,
// and its attention readout is added back onto the pooled vector.
class FusionLayer {
 public:
  struct Result {
    Tensor fused;    // 1 x d: pooled + W_O * attention readout
    Tensor pooled;   // 1 x d: mean of the unexcluded elements
    Tensor weights;  // 1 x n
  };

  FusionLayer() = default;
  FusionLayer(FusionLevel level, std::size_t dim, ParameterStore& params, Rng& rng, const std::string& prefix);

  FusionLevel level() const { return level_; }
  // elements: n x d. exclude[i] != 0 drops element i from pooling and hides it as a key.
  Result fuse(const Tensor& elements, std::span<const std::uint8_t> exclude = {}) const;

 private:
  FusionLevel level_{};
  Tensor wq_, wk_, wv_, wo_;
};

struct SectionEmbedding {
  SectionName name{};
  Tensor vector;  // 1 x d
};

// Individual-level embedding E' (or E'_msk when skills_masked).
struct IndividualEmbedding {
  std::string doc_id;
  Side side{};
  bool skills_masked = false;
  Tensor vector;   // 1 x d
  Tensor pooled;   // 1 x d
  Tensor weights;  // 1 x n_sections
};

// Per-document bundle of the sentence, section and individual levels.
struct EmbeddingHierarchy {
  const Document* doc = nullptr;
  Tensor sentence_embeddings;  // total sentences x d, in section order
  Tensor section_embeddings;   // n_sections x d, schema order
  std::optional<IndividualEmbedding> individual;
  std::optional<IndividualEmbedding> individual_masked;

  SectionEmbedding section(SectionName name) const;
  std::map<SectionName, Tensor> section_map() const;
};

// Pair-specific interaction level.
struct InteractionEmbedding {
  Tensor attended_by_job;   // A_j: 1 x d, job individual embedding attending over user sections
  Tensor attended_by_user;  // A_u: 1 x d, user individual embedding attending over job sections
  Tensor job_weights;       // 1 x n_user_sections
  Tensor user_weights;      // 1 x n_job_sections
  Tensor final_user;        // F_u: 1 x d
  Tensor final_job;         // F_j: 1 x d
};

class CrossAttentionLayer {
 public:
  CrossAttentionLayer() = default;
  CrossAttentionLayer(std::size_t dim, ParameterStore& params, Rng& rng, const std::string& prefix);

  // Requires the individual (unmasked) level and section level on both sides.
  InteractionEmbedding interact(const EmbeddingHierarchy& user, const EmbeddingHierarchy& job) const;

 private:
  struct Direction {
    Tensor wq, wk, wv;
  };
  Direction job_oriented_, user_oriented_;
  Tensor combine_user_, combine_job_;  // 3d x d
};

class Hierarchy {
 public:
  Hierarchy() = default;
  Hierarchy(const EncoderConfig& encoder_config, ParameterStore& params, Rng& rng);

  const Encoder& encoder() const { return encoder_; }
  const FusionLayer& section_fusion() const { return section_fusion_; }
  const FusionLayer& individual_fusion() const { return individual_fusion_; }
  const CrossAttentionLayer& cross() const { return cross_; }

  // Encodes every sentence of every document in one packed pass and fuses each
  // section. Individual levels are filled on request.
  std::vector<EmbeddingHierarchy> encode_documents(std::span<const Document* const> docs, bool individual,
                                                   bool individual_masked) const;
  EmbeddingHierarchy encode_document(const Document& doc, bool individual = true,
                                     bool individual_masked = false) const;

  std::map<SectionName, Tensor> build_section_embeddings(const Document& doc) const;
  // Fuses section embeddings in schema order; with mask_skills the Skills
  // section is excluded from pooling and attention.
  IndividualEmbedding build_individual(const EmbeddingHierarchy& h, bool mask_skills) const;
  InteractionEmbedding cross_interact(const EmbeddingHierarchy& user, const EmbeddingHierarchy& job) const;

 private:
  Encoder encoder_;
  FusionLayer section_fusion_;
  FusionLayer individual_fusion_;
  CrossAttentionLayer cross_;
};

}  // namespace tarot

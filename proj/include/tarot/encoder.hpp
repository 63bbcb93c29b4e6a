#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tarot/corpus.hpp"
#include "tarot/parameters.hpp"
#include "tarot/random.hpp"
#include "tarot/tensor.hpp"

namespace tarot {

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 512;
  int n_layers = 2;
  int ffn_dim = 0;  // 0 selects 4 * hidden_dim
  int max_sentence_len = 16;
  TokenId cls_id = kClsToken;
  TokenId sep_id = kSepToken;
  TokenId mask_id = kMaskToken;
  TokenId pad_id = kPadToken;

  int resolved_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

struct EncodedSentence {
  Tensor embedding;     // 1 x hidden, hidden state at the CLS position
  Tensor token_states;  // (len + 2) x hidden: CLS, tokens, SEP
};

// Several sentences packed row-wise. Sentence i occupies rows
// [offsets[i], offsets[i + 1]); its CLS state is row offsets[i] and content
// token p sits at row offsets[i] + 1 + p.
struct EncodedBatch {
  Tensor hidden;
  std::vector<std::size_t> offsets;

  std::size_t cls_row(std::size_t i) const { return offsets[i]; }
  std::size_t token_row(std::size_t i, std::size_t p) const { return offsets[i] + 1 + p; }
  Tensor cls_states() const;
};

// Post-LN single-head transformer over [CLS] tokens [SEP].
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, ParameterStore& params, Rng& rng, const std::string& prefix = "encoder");

  const EncoderConfig& config() const { return config_; }

  // Throws ConfigError on empty or over-length input and on out-of-vocabulary ids.
  EncodedSentence encode_sentence(const Sentence& tokens) const;
  EncodedBatch encode(std::span<const Sentence> sentences) const;

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor norm1_gain, norm1_bias;
    Tensor ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
    Tensor norm2_gain, norm2_bias;
  };

  void check(const Sentence& tokens) const;

  EncoderConfig config_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  Tensor embedding_norm_gain_, embedding_norm_bias_;
  std::vector<Layer> layers_;
};

struct MlmMasking {
  Sentence masked;
  std::vector<std::size_t> positions;  // indices into the content tokens
  std::vector<TokenId> targets;        // original ids at `positions`
};

// Each non-special token is selected with probability `select_prob`; selected
// tokens become MASK (80%), a random non-special id (10%) or stay unchanged
// (10%). Draws are repeated while nothing is selected; after a bounded number of
// empty draws one eligible position is forced. Throws if nothing is eligible.
MlmMasking apply_mlm_mask(const Sentence& tokens, int vocab_size, Rng& rng, double select_prob = 0.15);

}  // namespace tarot

#include "tarot/encoder.hpp"

#include <algorithm>

#include "tarot/errors.hpp"
#include "tarot/ops.hpp"

namespace tarot {

namespace {
constexpr double kInitStd = 0.02;
constexpr int kMaxMaskDraws = 64;

bool is_special(TokenId t) { return t < kSpecialTokenCount; }
}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw ConfigError("encoder: vocab_size must be positive");
  if (hidden_dim <= 0) throw ConfigError("encoder: hidden_dim must be positive");
  if (n_layers < 0) throw ConfigError("encoder: n_layers must be non-negative");
  if (ffn_dim < 0) throw ConfigError("encoder: ffn_dim must be non-negative");
  if (max_sentence_len <= 0) throw ConfigError("encoder: max_sentence_len must be positive");
  const TokenId ids[] = {cls_id, sep_id, mask_id, pad_id};
  for (std::size_t i = 0; i < 4; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_size) throw ConfigError("encoder: special token id outside vocabulary");
    for (std::size_t j = 0; j < i; ++j)
      if (ids[i] == ids[j]) throw ConfigError("encoder: special token ids must be distinct");
  }
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},     {"hidden_dim", c.hidden_dim},
                     {"n_layers", c.n_layers},         {"ffn_dim", c.ffn_dim},
                     {"max_sentence_len", c.max_sentence_len}, {"cls_id", c.cls_id},
                     {"sep_id", c.sep_id},             {"mask_id", c.mask_id},
                     {"pad_id", c.pad_id}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("vocab_size", c.vocab_size);
  opt("hidden_dim", c.hidden_dim);
  opt("n_layers", c.n_layers);
  opt("ffn_dim", c.ffn_dim);
  opt("max_sentence_len", c.max_sentence_len);
  opt("cls_id", c.cls_id);
  opt("sep_id", c.sep_id);
  opt("mask_id", c.mask_id);
  opt("pad_id", c.pad_id);
}

Tensor EncodedBatch::cls_states() const {
  std::vector<std::size_t> rows(offsets.begin(), offsets.end() - 1);
  return ops::gather_rows(hidden, rows);
}

Encoder::Encoder(const EncoderConfig& config, ParameterStore& params, Rng& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.hidden_dim);
  const auto f = static_cast<std::size_t>(config_.resolved_ffn_dim());
  const auto vocab = static_cast<std::size_t>(config_.vocab_size);
  const auto positions = static_cast<std::size_t>(config_.max_sentence_len) + 2;
  token_embedding_ = params.add_truncated_normal(prefix + ".token_embedding", {vocab, d}, kInitStd, rng);
  position_embedding_ = params.add_truncated_normal(prefix + ".position_embedding", {positions, d}, kInitStd, rng);
  embedding_norm_gain_ = params.add_constant(prefix + ".embedding_norm.gain", {1, d}, 1.0);
  embedding_norm_bias_ = params.add_constant(prefix + ".embedding_norm.bias", {1, d}, 0.0);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.wq = params.add_truncated_normal(p + ".attention.query.weight", {d, d}, kInitStd, rng);
    layer.bq = params.add_constant(p + ".attention.query.bias", {1, d}, 0.0);
    layer.wk = params.add_truncated_normal(p + ".attention.key.weight", {d, d}, kInitStd, rng);
    layer.bk = params.add_constant(p + ".attention.key.bias", {1, d}, 0.0);
    layer.wv = params.add_truncated_normal(p + ".attention.value.weight", {d, d}, kInitStd, rng);
    layer.bv = params.add_constant(p + ".attention.value.bias", {1, d}, 0.0);
    layer.wo = params.add_truncated_normal(p + ".attention.output.weight", {d, d}, kInitStd, rng);
    layer.bo = params.add_constant(p + ".attention.output.bias", {1, d}, 0.0);
    layer.norm1_gain = params.add_constant(p + ".attention_norm.gain", {1, d}, 1.0);
    layer.norm1_bias = params.add_constant(p + ".attention_norm.bias", {1, d}, 0.0);
    layer.ffn_in = params.add_truncated_normal(p + ".ffn.in.weight", {d, f}, kInitStd, rng);
    layer.ffn_in_bias = params.add_constant(p + ".ffn.in.bias", {1, f}, 0.0);
    layer.ffn_out = params.add_truncated_normal(p + ".ffn.out.weight", {f, d}, kInitStd, rng);
    layer.ffn_out_bias = params.add_constant(p + ".ffn.out.bias", {1, d}, 0.0);
    layer.norm2_gain = params.add_constant(p + ".ffn_norm.gain", {1, d}, 1.0);
    layer.norm2_bias = params.add_constant(p + ".ffn_norm.bias", {1, d}, 0.0);
    layers_.push_back(std::move(layer));
  }
}

void Encoder::check(const Sentence& tokens) const {
  if (tokens.empty()) throw ConfigError("encoder: empty sentence");
  if (tokens.size() > static_cast<std::size_t>(config_.max_sentence_len)) {
    throw ConfigError("encoder: sentence of " + std::to_string(tokens.size()) + " tokens exceeds max_sentence_len " +
                      std::to_string(config_.max_sentence_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= config_.vocab_size) throw ConfigError("encoder: token id " + std::to_string(t) + " outside vocabulary");
  }
}

EncodedSentence Encoder::encode_sentence(const Sentence& tokens) const {
  const EncodedBatch batch = encode(std::span<const Sentence>(&tokens, 1));
  return {ops::row_slice(batch.hidden, 0, 1), batch.hidden};
}

EncodedBatch Encoder::encode(std::span<const Sentence> sentences) const {
  if (sentences.empty()) throw ConfigError("encoder: no sentences to encode");
  EncodedBatch out;
  std::vector<TokenId> ids;
  std::vector<TokenId> pos;
  out.offsets.push_back(0);
  for (const Sentence& s : sentences) {
    check(s);
    ids.push_back(config_.cls_id);
    ids.insert(ids.end(), s.begin(), s.end());
    ids.push_back(config_.sep_id);
    for (std::size_t p = 0; p < s.size() + 2; ++p) pos.push_back(static_cast<TokenId>(p));
    out.offsets.push_back(ids.size());
  }

  // PAD keys are hidden from attention; sentences without PAD use no mask.
  std::vector<std::vector<std::uint8_t>> key_masks(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::size_t begin = out.offsets[i], end = out.offsets[i + 1];
    if (std::any_of(ids.begin() + static_cast<std::ptrdiff_t>(begin), ids.begin() + static_cast<std::ptrdiff_t>(end),
                    [&](TokenId t) { return t == config_.pad_id; })) {
      for (std::size_t r = begin; r < end; ++r) key_masks[i].push_back(ids[r] == config_.pad_id ? 1 : 0);
    }
  }

  Tensor x = ops::add(ops::embedding_lookup(token_embedding_, ids), ops::embedding_lookup(position_embedding_, pos));
  x = ops::layer_norm(x, embedding_norm_gain_, embedding_norm_bias_);
  for (const Layer& layer : layers_) {
    const Tensor q = ops::add_bias(ops::matmul(x, layer.wq), layer.bq);
    const Tensor k = ops::add_bias(ops::matmul(x, layer.wk), layer.bk);
    const Tensor v = ops::add_bias(ops::matmul(x, layer.wv), layer.bv);
    std::vector<Tensor> heads;
    heads.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const std::size_t b = out.offsets[i], e = out.offsets[i + 1];
      heads.push_back(ops::scaled_dot_attention(ops::row_slice(q, b, e), ops::row_slice(k, b, e),
                                                ops::row_slice(v, b, e), key_masks[i])
                          .output);
    }
    const Tensor attended = ops::add_bias(ops::matmul(ops::concat(heads, 0), layer.wo), layer.bo);
    x = ops::layer_norm(ops::add(x, attended), layer.norm1_gain, layer.norm1_bias);
    const Tensor inner = ops::gelu(ops::add_bias(ops::matmul(x, layer.ffn_in), layer.ffn_in_bias));
    const Tensor ffn = ops::add_bias(ops::matmul(inner, layer.ffn_out), layer.ffn_out_bias);
    x = ops::layer_norm(ops::add(x, ffn), layer.norm2_gain, layer.norm2_bias);
  }
  out.hidden = x;
  return out;
}

MlmMasking apply_mlm_mask(const Sentence& tokens, int vocab_size, Rng& rng, double select_prob) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!is_special(tokens[i])) eligible.push_back(i);
  if (eligible.empty()) throw std::invalid_argument("apply_mlm_mask: sentence has no maskable tokens");

  std::vector<std::size_t> chosen;
  for (int draw = 0; draw < kMaxMaskDraws && chosen.empty(); ++draw) {
    for (std::size_t i : eligible)
      if (rng.bernoulli(select_prob)) chosen.push_back(i);
  }
  if (chosen.empty()) chosen.push_back(eligible[rng.index(eligible.size())]);

  MlmMasking m;
  m.masked = tokens;
  for (std::size_t i : chosen) {
    m.positions.push_back(i);
    m.targets.push_back(tokens[i]);
    const double r = rng.uniform();
    if (r < 0.8) {
      m.masked[i] = kMaskToken;
    } else if (r < 0.9) {
      m.masked[i] = rng.uniform_int(kSpecialTokenCount, vocab_size - 1);
    }
  }
  return m;
}

}  // namespace tarot

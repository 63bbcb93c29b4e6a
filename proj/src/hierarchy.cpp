#include "tarot/hierarchy.hpp"

#include <algorithm>
#include <stdexcept>

#include "tarot/errors.hpp"
#include "tarot/ops.hpp"

namespace tarot {

namespace {
constexpr double kInitStd = 0.02;
}

FusionLayer::FusionLayer(FusionLevel level, std::size_t dim, ParameterStore& params, Rng& rng,
                         const std::string& prefix)
    : level_(level) {
  wq_ = params.add_truncated_normal(prefix + ".query", {dim, dim}, kInitStd, rng);
  wk_ = params.add_truncated_normal(prefix + ".key", {dim, dim}, kInitStd, rng);
  wv_ = params.add_truncated_normal(prefix + ".value", {dim, dim}, kInitStd, rng);
  wo_ = params.add_truncated_normal(prefix + ".output", {dim, dim}, kInitStd, rng);
}

FusionLayer::Result FusionLayer::fuse(const Tensor& elements, std::span<const std::uint8_t> exclude) const {
  if (elements.rank() != 2 || elements.rows() == 0) throw std::invalid_argument("fuse: no elements to fuse");
  const std::size_t n = elements.rows();
  Tensor pooled;
  if (exclude.empty()) {
    pooled = ops::mean_over_axis(elements, 0);
  } else {
    if (exclude.size() != n) throw ShapeError("fuse: exclude mask length does not match element count");
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i)
      if (!exclude[i]) kept.push_back(i);
    if (kept.empty()) throw std::invalid_argument("fuse: every element is excluded");
    pooled = ops::mean_over_axis(ops::gather_rows(elements, kept), 0);
  }
  auto attn = ops::scaled_dot_attention(ops::matmul(pooled, wq_), ops::matmul(elements, wk_),
                                        ops::matmul(elements, wv_), exclude);
  Tensor fused = ops::add(pooled, ops::matmul(attn.output, wo_));
  return {fused, pooled, attn.weights};
}

SectionEmbedding EmbeddingHierarchy::section(SectionName name) const {
  if (!doc || section_side(name) != doc->side) throw std::invalid_argument("section kind does not belong to this document");
  const std::size_t i = schema_index(name);
  return {name, ops::row_slice(section_embeddings, i, i + 1)};
}

std::map<SectionName, Tensor> EmbeddingHierarchy::section_map() const {
  std::map<SectionName, Tensor> out;
  for (SectionName n : schema(doc->side)) out.emplace(n, section(n).vector);
  return out;
}

CrossAttentionLayer::CrossAttentionLayer(std::size_t dim, ParameterStore& params, Rng& rng, const std::string& prefix) {
  auto direction = [&](const std::string& p) {
    Direction d;
    d.wq = params.add_truncated_normal(p + ".query", {dim, dim}, kInitStd, rng);
    d.wk = params.add_truncated_normal(p + ".key", {dim, dim}, kInitStd, rng);
    d.wv = params.add_truncated_normal(p + ".value", {dim, dim}, kInitStd, rng);
    return d;
  };
  job_oriented_ = direction(prefix + ".job_oriented");
  user_oriented_ = direction(prefix + ".user_oriented");
  combine_user_ = params.add_truncated_normal(prefix + ".combine_user", {3 * dim, dim}, kInitStd, rng);
  combine_job_ = params.add_truncated_normal(prefix + ".combine_job", {3 * dim, dim}, kInitStd, rng);
}

InteractionEmbedding CrossAttentionLayer::interact(const EmbeddingHierarchy& user, const EmbeddingHierarchy& job) const {
  if (!user.individual || !job.individual || !user.section_embeddings.defined() || !job.section_embeddings.defined()) {
    throw std::invalid_argument("cross_interact: both sides need section and individual embeddings");
  }
  const Tensor& eu = user.individual->vector;
  const Tensor& ej = job.individual->vector;
  auto attend = [](const Direction& d, const Tensor& query, const Tensor& sections) {
    return ops::scaled_dot_attention(ops::matmul(query, d.wq), ops::matmul(sections, d.wk),
                                     ops::matmul(sections, d.wv));
  };
  auto by_job = attend(job_oriented_, ej, user.section_embeddings);
  auto by_user = attend(user_oriented_, eu, job.section_embeddings);
  const Tensor combined = ops::concat({by_job.output, by_user.output}, 1);
  InteractionEmbedding out;
  out.attended_by_job = by_job.output;
  out.attended_by_user = by_user.output;
  out.job_weights = by_job.weights;
  out.user_weights = by_user.weights;
  out.final_user = ops::matmul(ops::concat({eu, combined}, 1), combine_user_);
  out.final_job = ops::matmul(ops::concat({ej, combined}, 1), combine_job_);
  return out;
}

Hierarchy::Hierarchy(const EncoderConfig& encoder_config, ParameterStore& params, Rng& rng)
    : encoder_(encoder_config, params, rng) {
  const auto d = static_cast<std::size_t>(encoder_config.hidden_dim);
  section_fusion_ = FusionLayer(FusionLevel::Section, d, params, rng, "fusion.section");
  individual_fusion_ = FusionLayer(FusionLevel::Individual, d, params, rng, "fusion.individual");
  cross_ = CrossAttentionLayer(d, params, rng, "cross");
}

std::vector<EmbeddingHierarchy> Hierarchy::encode_documents(std::span<const Document* const> docs, bool individual,
                                                            bool individual_masked) const {
  std::vector<Sentence> sentences;
  for (const Document* doc : docs) {
    if (doc->sections.size() != schema(doc->side).size()) {
      throw std::invalid_argument("document " + doc->id + " does not follow its section schema");
    }
    for (const Section& sec : doc->sections) {
      if (sec.sentences.empty()) {
        throw std::invalid_argument("document " + doc->id + ": section " + std::string(section_label(sec.name)) +
                                    " has no sentences");
      }
      sentences.insert(sentences.end(), sec.sentences.begin(), sec.sentences.end());
    }
  }
  std::vector<EmbeddingHierarchy> out;
  if (docs.empty()) return out;
  const Tensor cls = encoder_.encode(sentences).cls_states();

  std::size_t row = 0;
  for (const Document* doc : docs) {
    EmbeddingHierarchy h;
    h.doc = doc;
    const std::size_t doc_begin = row;
    std::vector<Tensor> sections;
    for (const Section& sec : doc->sections) {
      const std::size_t n = sec.sentences.size();
      sections.push_back(section_fusion_.fuse(ops::row_slice(cls, row, row + n)).fused);
      row += n;
    }
    h.sentence_embeddings = ops::row_slice(cls, doc_begin, row);
    h.section_embeddings = ops::concat(sections, 0);
    if (individual) h.individual = build_individual(h, false);
    if (individual_masked) h.individual_masked = build_individual(h, true);
    out.push_back(std::move(h));
  }
  return out;
}

EmbeddingHierarchy Hierarchy::encode_document(const Document& doc, bool individual, bool individual_masked) const {
  const Document* ptr = &doc;
  return std::move(encode_documents(std::span<const Document* const>(&ptr, 1), individual, individual_masked).front());
}

std::map<SectionName, Tensor> Hierarchy::build_section_embeddings(const Document& doc) const {
  return encode_document(doc, false, false).section_map();
}

IndividualEmbedding Hierarchy::build_individual(const EmbeddingHierarchy& h, bool mask_skills) const {
  if (!h.doc || !h.section_embeddings.defined()) throw std::invalid_argument("build_individual: section embeddings missing");
  std::vector<std::uint8_t> exclude;
  if (mask_skills) {
    for (SectionName n : schema(h.doc->side)) exclude.push_back(is_skills_section(n) ? 1 : 0);
  }
  auto r = individual_fusion_.fuse(h.section_embeddings, exclude);
  return {h.doc->id, h.doc->side, mask_skills, r.fused, r.pooled, r.weights};
}

InteractionEmbedding Hierarchy::cross_interact(const EmbeddingHierarchy& user, const EmbeddingHierarchy& job) const {
  return cross_.interact(user, job);
}

}  // namespace tarot

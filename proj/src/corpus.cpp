#include "tarot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "tarot/errors.hpp"
#include "tarot/random.hpp"

namespace tarot {

namespace {

constexpr std::array<std::string_view, kSectionKindCount> kSectionLabels = {
    "Summary",  "Headline", "Education", "Position", "Skills",   "Responsibilities", "Qualifications",
    "Requirements", "JobTitle", "Functions", "Skills", "Benefits", "Company"};

constexpr std::array<std::string_view, 5> kActionLabels = {"skip", "dismiss", "save", "apply",
                                                           "synthetic_negative"};
constexpr std::array<std::string_view, 3> kSplitLabels = {"pretrain", "downstream_jobrec",
                                                          "downstream_candrec"};

// Sections whose sentences may mention the entity's skills besides the Skills section.
bool mentions_skills(SectionName name) {
  switch (name) {
    case SectionName::Summary:
    case SectionName::Headline:
    case SectionName::Position:
    case SectionName::Responsibilities:
    case SectionName::Qualifications:
    case SectionName::Requirements:
    case SectionName::JobTitle:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::span<const SectionName> schema(Side side) {
  if (side == Side::Profile) return kProfileSections;
  return kJobSections;
}

std::string_view section_label(SectionName name) { return kSectionLabels[static_cast<std::size_t>(name)]; }

Side section_side(SectionName name) {
  return static_cast<std::size_t>(name) < kProfileSections.size() ? Side::Profile : Side::Job;
}

std::size_t schema_index(SectionName name) {
  const auto s = schema(section_side(name));
  return static_cast<std::size_t>(std::find(s.begin(), s.end(), name) - s.begin());
}

bool is_skills_section(SectionName name) {
  return name == SectionName::ProfileSkills || name == SectionName::JobSkills;
}

SectionName parse_section_name(Side side, std::string_view label) {
  for (SectionName n : schema(side))
    if (section_label(n) == label) return n;
  throw std::invalid_argument("unknown " + std::string(side_label(side)) + " section name '" +
                              std::string(label) + "'");
}

std::string_view side_label(Side side) { return side == Side::Profile ? "profile" : "job"; }

const Section& Document::section(SectionName name) const {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw std::out_of_range("document " + id + " has no section " + std::string(section_label(name)));
}

std::string_view action_label(Action action) { return kActionLabels[static_cast<std::size_t>(action)]; }

Action parse_action(std::string_view label) {
  for (std::size_t i = 0; i < kActionLabels.size(); ++i)
    if (kActionLabels[i] == label) return static_cast<Action>(i);
  throw std::invalid_argument("unknown action '" + std::string(label) + "'");
}

std::string_view split_label(Split split) { return kSplitLabels[static_cast<std::size_t>(split)]; }

Split parse_split(std::string_view label) {
  for (std::size_t i = 0; i < kSplitLabels.size(); ++i)
    if (kSplitLabels[i] == label) return static_cast<Split>(i);
  throw std::invalid_argument("unknown split '" + std::string(label) + "'");
}

PretrainLabel pretrain_label(Action action) {
  switch (action) {
    case Action::Apply:
    case Action::Save:
      return PretrainLabel::Positive;
    case Action::Dismiss:
    case Action::SyntheticNegative:
      return PretrainLabel::Negative;
    case Action::Skip:
      return PretrainLabel::Excluded;
  }
  return PretrainLabel::Excluded;
}

int downstream_label(Action action) { return action == Action::Apply || action == Action::Save ? 1 : 0; }

void CorpusConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("corpus config: " + m); };
  if (n_users <= 0) fail("n_users must be positive");
  if (n_jobs <= 0) fail("n_jobs must be positive");
  if (k_skills <= 0) fail("k_skills must be positive");
  if (template_words_per_section <= 0) fail("template_words_per_section must be positive");
  const long template_tokens = kSpecialTokenCount + static_cast<long>(kSectionKindCount) * template_words_per_section;
  if (vocab_size < k_skills + template_tokens) fail("vocab_size must be at least k_skills + template-token count");
  auto check_range = [&](const IntRange& r, int lo, const char* name) {
    if (r.min < lo || r.max < r.min) fail(std::string(name) + " range is invalid");
  };
  check_range(skills_per_entity, 1, "skills_per_entity");
  check_range(sentences_per_section, 1, "sentences_per_section");
  check_range(sentence_length, 2, "sentence_length");
  if (skills_per_entity.max > k_skills) fail("skills_per_entity.max exceeds k_skills");
  if (!(0.0 <= match_prob_low && match_prob_low < match_prob_high && match_prob_high <= 1.0)) {
    fail("require 0 <= match_prob_low < match_prob_high <= 1");
  }
  if (!(template_token_prob >= 0.0 && template_token_prob <= 1.0)) fail("template_token_prob outside [0, 1]");
  if (!(skill_mention_prob >= 0.0 && skill_mention_prob <= 1.0)) fail("skill_mention_prob outside [0, 1]");
  if (!(dismiss_prob >= 0.0 && dismiss_prob <= 1.0)) fail("dismiss_prob outside [0, 1]");
  if (!(negative_ratio >= 0.0)) fail("negative_ratio must be non-negative");
  if (!(pretrain_user_fraction > 0.0 && jobrec_user_fraction >= 0.0 &&
        pretrain_user_fraction + jobrec_user_fraction <= 1.0)) {
    fail("user group fractions must be positive and sum to at most 1");
  }
  if (candidates_per_anchor <= 0) fail("candidates_per_anchor must be positive");
  if (candrec_jobs < 0 || candrec_jobs > n_jobs) fail("candrec_jobs must lie in [0, n_jobs]");
}

std::vector<std::string> VocabularyLayout::token_strings() const {
  std::vector<std::string> out = {"[PAD]", "[CLS]", "[SEP]", "[MASK]"};
  for (int k = 0; k < k_skills; ++k) out.push_back("skill_" + std::to_string(k));
  for (std::size_t s = 0; s < kSectionKindCount; ++s) {
    const auto name = static_cast<SectionName>(s);
    std::string prefix(side_label(section_side(name)));
    prefix += '.';
    prefix += section_label(name);
    for (int w = 0; w < template_words_per_section; ++w) out.push_back(prefix + "#" + std::to_string(w));
  }
  for (int f = 0; f < filler_count(); ++f) out.push_back("w" + std::to_string(f));
  return out;
}

void Corpus::reindex() {
  profile_index_.clear();
  job_index_.clear();
  for (std::size_t i = 0; i < profiles.size(); ++i) profile_index_[profiles[i].id] = i;
  for (std::size_t i = 0; i < jobs.size(); ++i) job_index_[jobs[i].id] = i;
}

const Document* Corpus::find_profile(std::string_view id) const {
  auto it = profile_index_.find(id);
  return it == profile_index_.end() ? nullptr : &profiles[it->second];
}

const Document* Corpus::find_job(std::string_view id) const {
  auto it = job_index_.find(id);
  return it == job_index_.end() ? nullptr : &jobs[it->second];
}

std::vector<const Interaction*> Corpus::split(Split s) const {
  std::vector<const Interaction*> out;
  for (const auto& i : interactions)
    if (i.split == s) out.push_back(&i);
  return out;
}

bool Corpus::operator==(const Corpus& other) const {
  return config == other.config && vocab == other.vocab && profiles == other.profiles && jobs == other.jobs &&
         interactions == other.interactions;
}

double jaccard(std::span<const int> a, std::span<const int> b) {
  std::vector<int> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

double positive_probability(const CorpusConfig& config, std::span<const int> user_skills,
                            std::span<const int> job_skills) {
  const double j = jaccard(user_skills, job_skills);
  return config.match_prob_low + (config.match_prob_high - config.match_prob_low) * j;
}

void validate_document(const Document& doc, const VocabularyLayout& layout) {
  const auto kinds = schema(doc.side);
  if (doc.sections.size() != kinds.size()) {
    throw std::invalid_argument(std::string(side_label(doc.side)) + " " + doc.id + " has " +
                                std::to_string(doc.sections.size()) + " sections, expected " +
                                std::to_string(kinds.size()));
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (doc.sections[i].name != kinds[i]) {
      throw std::invalid_argument(doc.id + ": missing or misplaced section " + std::string(section_label(kinds[i])));
    }
  }
  if (doc.skill_ids.empty()) throw std::invalid_argument(doc.id + ": skill_ids is empty");
  if (!std::is_sorted(doc.skill_ids.begin(), doc.skill_ids.end()) ||
      std::adjacent_find(doc.skill_ids.begin(), doc.skill_ids.end()) != doc.skill_ids.end()) {
    throw std::invalid_argument(doc.id + ": skill_ids must be sorted and unique");
  }
  std::set<int> rendered;
  for (const auto& sec : doc.sections) {
    if (sec.sentences.empty()) throw std::invalid_argument(doc.id + ": section " + std::string(section_label(sec.name)) + " is empty");
    for (const auto& sentence : sec.sentences) {
      if (sentence.empty()) throw std::invalid_argument(doc.id + ": empty sentence");
      for (TokenId t : sentence) {
        if (t < 0 || t >= layout.vocab_size) {
          throw std::invalid_argument(doc.id + ": token id " + std::to_string(t) + " outside vocabulary");
        }
        if (layout.is_skill_token(t)) {
          const int skill = layout.skill_of(t);
          if (!std::binary_search(doc.skill_ids.begin(), doc.skill_ids.end(), skill)) {
            throw std::invalid_argument(doc.id + ": skill token " + std::to_string(skill) + " not in skill_ids");
          }
          if (is_skills_section(sec.name)) rendered.insert(skill);
        }
      }
    }
  }
  if (!std::equal(rendered.begin(), rendered.end(), doc.skill_ids.begin(), doc.skill_ids.end())) {
    throw std::invalid_argument(doc.id + ": skill_ids differ from the skills rendered in the Skills section");
  }
}

namespace {

class Generator {
 public:
  explicit Generator(const CorpusConfig& config)
      : config_(config), layout_(VocabularyLayout::from(config)), rng_(derive_seed(config.seed, "corpus")) {}

  Corpus run() {
    Corpus corpus;
    corpus.config = config_;
    corpus.vocab = layout_.token_strings();
    for (int u = 0; u < config_.n_users; ++u) corpus.profiles.push_back(make_document(Side::Profile, user_id(u)));
    for (int j = 0; j < config_.n_jobs; ++j) corpus.jobs.push_back(make_document(Side::Job, job_id(j)));
    make_interactions(corpus);
    corpus.reindex();
    return corpus;
  }

 private:
  static std::string user_id(int u) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "u%05d", u);
    return buf;
  }
  static std::string job_id(int j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "j%05d", j);
    return buf;
  }

  int draw(const IntRange& r) { return static_cast<int>(rng_.uniform_int(r.min, r.max)); }

  TokenId context_token(SectionName name) {
    const int fillers = layout_.filler_count();
    if (fillers <= 0 || rng_.bernoulli(config_.template_token_prob)) {
      return layout_.template_begin(name) + rng_.uniform_int(0, config_.template_words_per_section - 1);
    }
    return layout_.filler_begin() + rng_.uniform_int(0, fillers - 1);
  }

  Sentence render_sentence(SectionName name, std::span<const TokenId> required) {
    const int length = std::max(draw(config_.sentence_length), static_cast<int>(required.size()) + 1);
    Sentence s(required.begin(), required.end());
    while (static_cast<int>(s.size()) < length) s.push_back(context_token(name));
    rng_.shuffle(s);
    return s;
  }

  Document make_document(Side side, std::string id) {
    Document doc;
    doc.id = std::move(id);
    doc.side = side;
    const int n_skills = draw(config_.skills_per_entity);
    std::vector<int> all(static_cast<std::size_t>(config_.k_skills));
    for (int k = 0; k < config_.k_skills; ++k) all[static_cast<std::size_t>(k)] = k;
    for (int i = 0; i < n_skills; ++i) {
      const std::size_t pick = static_cast<std::size_t>(i) + rng_.index(all.size() - static_cast<std::size_t>(i));
      std::swap(all[static_cast<std::size_t>(i)], all[pick]);
    }
    doc.skill_ids.assign(all.begin(), all.begin() + n_skills);
    std::sort(doc.skill_ids.begin(), doc.skill_ids.end());

    for (SectionName name : schema(side)) {
      Section sec{name, {}};
      const int k = draw(config_.sentences_per_section);
      if (is_skills_section(name)) {
        std::vector<std::vector<TokenId>> assigned(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < doc.skill_ids.size(); ++i) {
          assigned[i % assigned.size()].push_back(layout_.skill_token(doc.skill_ids[i]));
        }
        for (const auto& req : assigned) sec.sentences.push_back(render_sentence(name, req));
      } else {
        for (int i = 0; i < k; ++i) {
          std::vector<TokenId> req;
          if (mentions_skills(name) && rng_.bernoulli(config_.skill_mention_prob)) {
            req.push_back(layout_.skill_token(doc.skill_ids[rng_.index(doc.skill_ids.size())]));
          }
          sec.sentences.push_back(render_sentence(name, req));
        }
      }
      doc.sections.push_back(std::move(sec));
    }
    return doc;
  }

  // Half of the candidates share a skill with the anchor, the rest are uniform.
  std::vector<int> candidates(const Document& anchor, const std::vector<std::vector<int>>& by_skill, int pool_begin,
                              int pool_end) {
    const int want = std::min(config_.candidates_per_anchor, pool_end - pool_begin);
    std::vector<int> out;
    std::unordered_set<int> seen;
    int attempts = 0;
    while (static_cast<int>(out.size()) < want && attempts < 50 * want) {
      ++attempts;
      int item = -1;
      if (static_cast<int>(out.size()) % 2 == 0) {
        const auto& holders = by_skill[static_cast<std::size_t>(anchor.skill_ids[rng_.index(anchor.skill_ids.size())])];
        if (!holders.empty()) item = holders[rng_.index(holders.size())];
      }
      if (item < 0) item = static_cast<int>(rng_.uniform_int(pool_begin, pool_end - 1));
      if (seen.insert(item).second) out.push_back(item);
    }
    return out;
  }

  Action organic_action(const Document& user, const Document& job) {
    const double p = positive_probability(config_, user.skill_ids, job.skill_ids);
    if (rng_.bernoulli(p)) return rng_.bernoulli(0.7) ? Action::Apply : Action::Save;
    return rng_.bernoulli(config_.dismiss_prob) ? Action::Dismiss : Action::Skip;
  }

  void make_interactions(Corpus& corpus) {
    const int n_pre = std::max(1, static_cast<int>(std::lround(config_.n_users * config_.pretrain_user_fraction)));
    const int n_jr = std::min(config_.n_users - n_pre,
                              static_cast<int>(std::lround(config_.n_users * config_.jobrec_user_fraction)));
    const int jr_begin = n_pre, cr_begin = n_pre + n_jr, n_users = config_.n_users;

    std::vector<std::vector<int>> jobs_by_skill(static_cast<std::size_t>(config_.k_skills));
    for (int j = 0; j < config_.n_jobs; ++j)
      for (int s : corpus.jobs[static_cast<std::size_t>(j)].skill_ids) jobs_by_skill[static_cast<std::size_t>(s)].push_back(j);
    std::vector<std::vector<int>> candrec_users_by_skill(static_cast<std::size_t>(config_.k_skills));
    for (int u = cr_begin; u < n_users; ++u)
      for (int s : corpus.profiles[static_cast<std::size_t>(u)].skill_ids)
        candrec_users_by_skill[static_cast<std::size_t>(s)].push_back(u);

    auto& out = corpus.interactions;
    auto emit = [&](int u, int j, Action a, Split s) {
      out.push_back({corpus.profiles[static_cast<std::size_t>(u)].id, corpus.jobs[static_cast<std::size_t>(j)].id, a, s});
    };

    // Pretrain: organic reactions to recommended jobs, then synthetic negatives.
    std::set<std::pair<int, int>> taken;
    long positives = 0, dismissals = 0;
    for (int u = 0; u < n_pre; ++u) {
      const auto& user = corpus.profiles[static_cast<std::size_t>(u)];
      for (int j : candidates(user, jobs_by_skill, 0, config_.n_jobs)) {
        const Action a = organic_action(user, corpus.jobs[static_cast<std::size_t>(j)]);
        positives += pretrain_label(a) == PretrainLabel::Positive;
        dismissals += a == Action::Dismiss;
        taken.emplace(u, j);
        emit(u, j, a, Split::Pretrain);
      }
    }
    const long target_negatives = std::lround(config_.negative_ratio * static_cast<double>(positives));
    const long synthetic = target_negatives - dismissals;
    if (synthetic < 0) {
      throw GenerationError("negative ratio unachievable: " + std::to_string(dismissals) +
                            " organic dismissals already exceed " + std::to_string(target_negatives) +
                            " target negatives");
    }
    const long free_pairs = static_cast<long>(n_pre) * config_.n_jobs - static_cast<long>(taken.size());
    if (synthetic > free_pairs) {
      throw GenerationError("negative ratio unachievable: need " + std::to_string(synthetic) +
                            " synthetic negatives but only " + std::to_string(free_pairs) +
                            " non-interacting pretrain pairs exist");
    }
    for (long added = 0; added < synthetic;) {
      const int u = static_cast<int>(rng_.uniform_int(0, n_pre - 1));
      const int j = static_cast<int>(rng_.uniform_int(0, config_.n_jobs - 1));
      if (!taken.emplace(u, j).second) continue;
      emit(u, j, Action::SyntheticNegative, Split::Pretrain);
      ++added;
    }

    // Job recommendation: per-user job lists for a held-out user group.
    for (int u = jr_begin; u < cr_begin; ++u) {
      const auto& user = corpus.profiles[static_cast<std::size_t>(u)];
      for (int j : candidates(user, jobs_by_skill, 0, config_.n_jobs)) {
        emit(u, j, organic_action(user, corpus.jobs[static_cast<std::size_t>(j)]), Split::DownstreamJobRec);
      }
    }

    // Candidate recommendation: per-job user lists over a second held-out user group.
    if (cr_begin < n_users && config_.candrec_jobs > 0) {
      std::vector<int> job_order(static_cast<std::size_t>(config_.n_jobs));
      for (int j = 0; j < config_.n_jobs; ++j) job_order[static_cast<std::size_t>(j)] = j;
      rng_.shuffle(job_order);
      job_order.resize(static_cast<std::size_t>(config_.candrec_jobs));
      std::sort(job_order.begin(), job_order.end());
      for (int j : job_order) {
        const auto& job = corpus.jobs[static_cast<std::size_t>(j)];
        for (int u : candidates(job, candrec_users_by_skill, cr_begin, n_users)) {
          emit(u, j, organic_action(corpus.profiles[static_cast<std::size_t>(u)], job), Split::DownstreamCandRec);
        }
      }
    }
  }

  const CorpusConfig& config_;
  VocabularyLayout layout_;
  Rng rng_;
};

}  // namespace

Corpus generate(const CorpusConfig& config) {
  config.validate();
  return Generator(config).run();
}

}  // namespace tarot

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tarot {

enum class Side : std::uint8_t { Profile, Job };

// Section kinds of user profiles (first five) and job descriptions (last eight).
// Both sides have a section labelled "Skills"; they are distinct kinds.
enum class SectionName : std::uint8_t {
  Summary,
  Headline,
  Education,
  Position,
  ProfileSkills,
  Responsibilities,
  Qualifications,
  Requirements,
  JobTitle,
  Functions,
  JobSkills,
  Benefits,
  Company,
};

inline constexpr std::size_t kSectionKindCount = 13;

inline constexpr std::array<SectionName, 5> kProfileSections = {
    SectionName::Summary, SectionName::Headline, SectionName::Education, SectionName::Position,
    SectionName::ProfileSkills};

inline constexpr std::array<SectionName, 8> kJobSections = {
    SectionName::Responsibilities, SectionName::Qualifications, SectionName::Requirements,
    SectionName::JobTitle,         SectionName::Functions,      SectionName::JobSkills,
    SectionName::Benefits,         SectionName::Company};

std::span<const SectionName> schema(Side side);
std::string_view section_label(SectionName name);
Side section_side(SectionName name);
// Position of `name` within its side's schema order.
std::size_t schema_index(SectionName name);
bool is_skills_section(SectionName name);
SectionName parse_section_name(Side side, std::string_view label);
std::string_view side_label(Side side);

using TokenId = std::int64_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kClsToken = 1;
inline constexpr TokenId kSepToken = 2;
inline constexpr TokenId kMaskToken = 3;
inline constexpr TokenId kSpecialTokenCount = 4;

struct Section {
  SectionName name{};
  std::vector<Sentence> sentences;

  bool operator==(const Section&) const = default;
};

// A user profile (side == Profile) or job posting (side == Job): one section
// per schema kind, in schema order, plus the skill labels rendered into the
// Skills section.
struct Document {
  std::string id;
  Side side{};
  std::vector<Section> sections;
  std::vector<int> skill_ids;  // sorted, unique

  const Section& section(SectionName name) const;
  bool operator==(const Document&) const = default;
};

enum class Action : std::uint8_t { Skip, Dismiss, Save, Apply, SyntheticNegative };
enum class Split : std::uint8_t { Pretrain, DownstreamJobRec, DownstreamCandRec };
enum class PretrainLabel : std::uint8_t { Positive, Negative, Excluded };

std::string_view action_label(Action action);
Action parse_action(std::string_view label);
std::string_view split_label(Split split);
Split parse_split(std::string_view label);

// apply/save positive, dismiss/synthetic_negative negative, skip excluded.
PretrainLabel pretrain_label(Action action);
// save/apply -> 1; skip/dismiss/synthetic_negative -> 0.
int downstream_label(Action action);

struct Interaction {
  std::string user_id;
  std::string job_id;
  Action action{};
  Split split{};

  bool operator==(const Interaction&) const = default;
};

struct IntRange {
  int min = 0;
  int max = 0;
  bool operator==(const IntRange&) const = default;
};

struct CorpusConfig {
  std::uint64_t seed = 7;
  int n_users = 200;
  int n_jobs = 300;
  int vocab_size = 2000;
  int k_skills = 100;
  IntRange skills_per_entity{2, 4};
  IntRange sentences_per_section{1, 3};
  IntRange sentence_length{4, 12};
  int template_words_per_section = 24;
  // Probability that a non-skill token is drawn from the section's own template vocabulary.
  double template_token_prob = 0.6;
  // Probability that a sentence in a skill-bearing non-Skills section mentions one of the entity's skills.
  double skill_mention_prob = 0.5;
  double dismiss_prob = 0.1;  // share of organic negatives that are dismissals; the rest are skips
  double match_prob_high = 0.9;
  double match_prob_low = 0.02;
  double negative_ratio = 3.0;
  double pretrain_user_fraction = 0.7;
  double jobrec_user_fraction = 0.15;
  int candidates_per_anchor = 8;
  int candrec_jobs = 150;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const CorpusConfig&) const = default;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

// Token id layout: specials, skill tokens, per-section template words, filler.
struct VocabularyLayout {
  int vocab_size = 0;
  int k_skills = 0;
  int template_words_per_section = 0;

  static VocabularyLayout from(const CorpusConfig& c) {
    return {c.vocab_size, c.k_skills, c.template_words_per_section};
  }
  TokenId skill_token(int skill) const { return kSpecialTokenCount + skill; }
  bool is_skill_token(TokenId t) const { return t >= kSpecialTokenCount && t < kSpecialTokenCount + k_skills; }
  int skill_of(TokenId t) const { return static_cast<int>(t - kSpecialTokenCount); }
  TokenId template_begin(SectionName name) const {
    return kSpecialTokenCount + k_skills + static_cast<TokenId>(name) * template_words_per_section;
  }
  TokenId filler_begin() const {
    return kSpecialTokenCount + k_skills + static_cast<TokenId>(kSectionKindCount) * template_words_per_section;
  }
  int filler_count() const { return vocab_size - static_cast<int>(filler_begin()); }
  std::vector<std::string> token_strings() const;
};

class Corpus {
 public:
  CorpusConfig config;
  std::vector<std::string> vocab;
  std::vector<Document> profiles;
  std::vector<Document> jobs;
  std::vector<Interaction> interactions;

  // Rebuilds id lookups; call after mutating profiles/jobs.
  void reindex();
  const Document* find_profile(std::string_view id) const;
  const Document* find_job(std::string_view id) const;
  std::vector<const Interaction*> split(Split s) const;
  bool empty() const { return profiles.empty() && jobs.empty() && interactions.empty(); }

  bool operator==(const Corpus& other) const;

 private:
  std::map<std::string, std::size_t, std::less<>> profile_index_;
  std::map<std::string, std::size_t, std::less<>> job_index_;
};

// Probability that a user-job pair yields a positive action: linear in the
// Jaccard overlap of their skill sets between match_prob_low and match_prob_high.
double positive_probability(const CorpusConfig& config, std::span<const int> user_skills,
                            std::span<const int> job_skills);
double jaccard(std::span<const int> a, std::span<const int> b);

// Deterministic in config.seed. Throws ConfigError or GenerationError.
Corpus generate(const CorpusConfig& config);

// Line-delimited JSON: a "meta" record, then "profile", "job" and "interaction" records.
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
// Throws CorpusParseError naming the offending line.
Corpus load_corpus(const std::filesystem::path& path);

// Schema and label checks shared by loading and generation.
void validate_document(const Document& doc, const VocabularyLayout& layout);

}  // namespace tarot

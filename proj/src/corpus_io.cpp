#include <fstream>
#include <set>
#include <sstream>

#include "tarot/corpus.hpp"
#include "tarot/errors.hpp"

namespace tarot {

using nlohmann::json;

void to_json(json& j, const CorpusConfig& c) {
  j = json{{"seed", c.seed},
           {"n_users", c.n_users},
           {"n_jobs", c.n_jobs},
           {"vocab_size", c.vocab_size},
           {"k_skills", c.k_skills},
           {"skills_per_entity", {c.skills_per_entity.min, c.skills_per_entity.max}},
           {"sentences_per_section", {c.sentences_per_section.min, c.sentences_per_section.max}},
           {"sentence_length", {c.sentence_length.min, c.sentence_length.max}},
           {"template_words_per_section", c.template_words_per_section},
           {"template_token_prob", c.template_token_prob},
           {"skill_mention_prob", c.skill_mention_prob},
           {"dismiss_prob", c.dismiss_prob},
           {"match_prob_high", c.match_prob_high},
           {"match_prob_low", c.match_prob_low},
           {"negative_ratio", c.negative_ratio},
           {"pretrain_user_fraction", c.pretrain_user_fraction},
           {"jobrec_user_fraction", c.jobrec_user_fraction},
           {"candidates_per_anchor", c.candidates_per_anchor},
           {"candrec_jobs", c.candrec_jobs}};
}

void from_json(const json& j, CorpusConfig& c) {
  static const std::set<std::string> kKnown = {
      "seed", "n_users", "n_jobs", "vocab_size", "k_skills", "skills_per_entity", "sentences_per_section",
      "sentence_length", "template_words_per_section", "template_token_prob", "skill_mention_prob", "dismiss_prob",
      "match_prob_high", "match_prob_low", "negative_ratio", "pretrain_user_fraction", "jobrec_user_fraction",
      "candidates_per_anchor", "candrec_jobs"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.contains(it.key())) throw ConfigError("corpus config: unknown field '" + it.key() + "'");
  }
  auto range = [&](const char* key, IntRange& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("corpus config: ") + key + " must be [min, max]");
    r = {v[0].get<int>(), v[1].get<int>()};
  };
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("seed", c.seed);
  opt("n_users", c.n_users);
  opt("n_jobs", c.n_jobs);
  opt("vocab_size", c.vocab_size);
  opt("k_skills", c.k_skills);
  range("skills_per_entity", c.skills_per_entity);
  range("sentences_per_section", c.sentences_per_section);
  range("sentence_length", c.sentence_length);
  opt("template_words_per_section", c.template_words_per_section);
  opt("template_token_prob", c.template_token_prob);
  opt("skill_mention_prob", c.skill_mention_prob);
  opt("dismiss_prob", c.dismiss_prob);
  opt("match_prob_high", c.match_prob_high);
  opt("match_prob_low", c.match_prob_low);
  opt("negative_ratio", c.negative_ratio);
  opt("pretrain_user_fraction", c.pretrain_user_fraction);
  opt("jobrec_user_fraction", c.jobrec_user_fraction);
  opt("candidates_per_anchor", c.candidates_per_anchor);
  opt("candrec_jobs", c.candrec_jobs);
}

namespace {

json document_json(const Document& d) {
  json sections = json::array();
  for (const auto& s : d.sections) sections.push_back({{"name", section_label(s.name)}, {"sentences", s.sentences}});
  return json{{"type", side_label(d.side)},
              {d.side == Side::Profile ? "user_id" : "job_id", d.id},
              {"skill_ids", d.skill_ids},
              {"sections", std::move(sections)}};
}

Document parse_document(const json& j, Side side) {
  Document d;
  d.side = side;
  d.id = j.at(side == Side::Profile ? "user_id" : "job_id").get<std::string>();
  d.skill_ids = j.at("skill_ids").get<std::vector<int>>();
  for (const auto& s : j.at("sections")) {
    Section sec;
    sec.name = parse_section_name(side, s.at("name").get<std::string>());
    sec.sentences = s.at("sentences").get<std::vector<Sentence>>();
    d.sections.push_back(std::move(sec));
  }
  return d;
}

}  // namespace

std::string serialize_corpus(const Corpus& corpus) {
  if (corpus.empty() && corpus.vocab.empty()) return {};
  std::string out;
  auto line = [&](const json& j) {
    out += j.dump();
    out += '\n';
  };
  line(json{{"type", "meta"}, {"config", corpus.config}, {"vocab", corpus.vocab}});
  for (const auto& p : corpus.profiles) line(document_json(p));
  for (const auto& jb : corpus.jobs) line(document_json(jb));
  for (const auto& i : corpus.interactions) {
    line(json{{"type", "interaction"},
              {"user_id", i.user_id},
              {"job_id", i.job_id},
              {"action", action_label(i.action)},
              {"split", split_label(i.split)}});
  }
  return out;
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  bool have_meta = false;
  VocabularyLayout layout;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (raw.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(raw);
      const std::string type = j.at("type").get<std::string>();
      if (type == "meta") {
        if (have_meta) throw std::invalid_argument("duplicate meta record");
        corpus.config = j.at("config").get<CorpusConfig>();
        corpus.vocab = j.at("vocab").get<std::vector<std::string>>();
        layout = VocabularyLayout::from(corpus.config);
        if (static_cast<int>(corpus.vocab.size()) != layout.vocab_size) {
          throw std::invalid_argument("vocabulary has " + std::to_string(corpus.vocab.size()) +
                                      " entries but config says " + std::to_string(layout.vocab_size));
        }
        have_meta = true;
        continue;
      }
      if (!have_meta) throw std::invalid_argument("record before meta line");
      if (type == "profile" || type == "job") {
        const Side side = type == "profile" ? Side::Profile : Side::Job;
        Document d = parse_document(j, side);
        validate_document(d, layout);
        (side == Side::Profile ? corpus.profiles : corpus.jobs).push_back(std::move(d));
      } else if (type == "interaction") {
        corpus.interactions.push_back({j.at("user_id").get<std::string>(), j.at("job_id").get<std::string>(),
                                       parse_action(j.at("action").get<std::string>()),
                                       parse_split(j.at("split").get<std::string>())});
      } else {
        throw std::invalid_argument("unknown record type '" + type + "'");
      }
    } catch (const CorpusParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorpusParseError(line_no, e.what());
    }
  }
  corpus.reindex();
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << serialize_corpus(corpus);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

}  // namespace tarot

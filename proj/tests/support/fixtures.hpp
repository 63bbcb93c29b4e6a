#pragma once

#include <filesystem>
#include <string>

#include "tarot/corpus.hpp"
#include "tarot/model.hpp"
#include "tarot/trainer.hpp"

namespace tarot::testing {

inline CorpusConfig tiny_corpus_config(std::uint64_t seed = 5) {
  CorpusConfig c;
  c.seed = seed;
  c.n_users = 60;
  c.n_jobs = 80;
  c.vocab_size = 400;
  c.k_skills = 20;
  c.template_words_per_section = 12;
  c.candrec_jobs = 20;
  c.candidates_per_anchor = 6;
  return c;
}

inline const Corpus& tiny_corpus() {
  static const Corpus corpus = generate(tiny_corpus_config());
  return corpus;
}

inline ModelConfig tiny_model_config(const Corpus& corpus, int hidden = 8, int layers = 1) {
  ModelConfig m;
  m.encoder.vocab_size = corpus.config.vocab_size;
  m.encoder.hidden_dim = hidden;
  m.encoder.n_layers = layers;
  m.encoder.ffn_dim = 2 * hidden;
  m.encoder.max_sentence_len = 16;
  m.k_skills = corpus.config.k_skills;
  return m;
}

inline TrainConfig tiny_train_config(int steps = 3) {
  TrainConfig t;
  t.steps = steps;
  t.seed = 11;
  t.learning_rate = 1e-3;
  t.batch = {4, 2, 2, 4};
  t.model = {8, 1, 16, 16};
  return t;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("tarot_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tarot::testing

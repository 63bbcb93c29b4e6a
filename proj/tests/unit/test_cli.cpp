#include <doctest.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "support/fixtures.hpp"
#include "tarot/cli.hpp"
#include "tarot/hash.hpp"

using namespace tarot;
using namespace tarot::testing;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tarot");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  // Keep test output quiet.
  std::ostringstream sink;
  auto* old_out = std::cout.rdbuf(sink.rdbuf());
  auto* old_err = std::cerr.rdbuf(sink.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return code;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& path, const nlohmann::json& j) { std::ofstream(path) << j.dump(); }

struct Workspace {
  TempDir dir{"cli"};
  fs::path corpus_config = dir / "corpus_config.json";
  fs::path train_config = dir / "train_config.json";

  Workspace() {
    write_json(corpus_config, tiny_corpus_config());
    nlohmann::json t = tiny_train_config(3);
    t.erase("grid");
    write_json(train_config, t);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("gen-corpus writes a reproducible corpus and manifest") {
  Workspace ws;
  REQUIRE(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("a"), "--seed", "3"}) == kExitOk);
  REQUIRE(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("b"), "--seed", "3"}) == kExitOk);
  CHECK(sha256_file(ws.dir / "a/corpus.jsonl") == sha256_file(ws.dir / "b/corpus.jsonl"));
  const auto manifest = read_json(ws.dir / "a/manifest.json");
  CHECK(manifest.at("command") == "gen-corpus");
  CHECK(manifest.at("tool_version") == kToolVersion);
  CHECK(manifest.at("config").at("seed") == 3);
  CHECK(manifest.contains("started_at"));
  CHECK(manifest.contains("finished_at"));
  CHECK(manifest.at("outputs").size() == 1);
  REQUIRE(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("c"), "--seed", "4"}) == kExitOk);
  CHECK(sha256_file(ws.dir / "a/corpus.jsonl") != sha256_file(ws.dir / "c/corpus.jsonl"));
}

TEST_CASE("configuration problems exit with code 2") {
  Workspace ws;
  CHECK(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("x"), "--set", "n_users=-1"}) ==
        kExitConfig);
  CHECK(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("x"), "--set", "bogus=1"}) ==
        kExitConfig);
  CHECK(cli({"pretrain", "--corpus", ws.path("missing.jsonl"), "--config", ws.train_config.string(), "--out",
             ws.path("y")}) == kExitConfig);
  CHECK(cli({"gen-corpus"}) == kExitConfig);
  CHECK(cli({"no-such-command"}) == kExitConfig);
  CHECK(cli({"gen-corpus", "--config", ws.path("absent.json"), "--out", ws.path("x")}) == kExitConfig);
}

TEST_CASE("pretrain, eval, export and ablate end to end") {
  Workspace ws;
  REQUIRE(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("data")}) == kExitOk);
  const std::string corpus = ws.path("data/corpus.jsonl");

  REQUIRE(cli({"pretrain", "--corpus", corpus, "--config", ws.train_config.string(), "--out", ws.path("run"), "--set",
               "lambda.App=0"}) == kExitOk);
  const auto log = read_lines(ws.dir / "run/trainlog.jsonl");
  REQUIRE(log.size() == 3);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto entry = nlohmann::json::parse(log[i]);
    CHECK(entry.at("step") == i + 1);
    CHECK_FALSE(entry.at("losses").contains("App"));
    CHECK(entry.at("losses").contains("MLM"));
  }
  const auto manifest = read_json(ws.dir / "run/manifest.json");
  CHECK(manifest.at("config").at("lambda").at("App") == 0.0);
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("corpus_hash"));
  const std::string ckpt = ws.path("run/checkpoint.bin");
  REQUIRE(fs::exists(ckpt));

  for (const char* task : {"job_rec", "candidate_rec"}) {
    CAPTURE(task);
    REQUIRE(cli({"eval", "--corpus", corpus, "--checkpoint", ckpt, "--task", task, "--out", ws.path("eval")}) == kExitOk);
    const auto report = read_json(ws.dir / ("eval/report_" + std::string(task) + ".json"));
    CHECK(report.at("task") == task);
    CHECK(report.contains("AUC"));
    CHECK(fs::exists(ws.dir / ("eval/report_" + std::string(task) + ".txt")));
  }
  fs::copy_file(ckpt, ws.dir / "copy.bin");
  REQUIRE(cli({"eval", "--corpus", corpus, "--checkpoint", ws.path("copy.bin"), "--task", "job_rec", "--out",
               ws.path("eval2")}) == kExitOk);
  CHECK(sha256_file(ws.dir / "eval/report_job_rec.json") == sha256_file(ws.dir / "eval2/report_job_rec.json"));
  CHECK(read_json(ws.dir / "eval/report_job_rec.json").at("metadata").at("checkpoint_sha256") == sha256_file(ckpt));
  CHECK(cli({"eval", "--corpus", corpus, "--checkpoint", ckpt, "--task", "other", "--out", ws.path("eval")}) ==
        kExitConfig);
  CHECK(cli({"eval", "--corpus", corpus, "--checkpoint", ws.path("nothing.bin"), "--out", ws.path("eval")}) ==
        kExitConfig);

  REQUIRE(cli({"export-embeddings", "--corpus", corpus, "--checkpoint", ckpt, "--level", "individual", "--out",
               ws.path("emb")}) == kExitOk);
  const auto lines = read_lines(ws.dir / "emb/embeddings_individual.jsonl");
  const Corpus& c = tiny_corpus();
  CHECK(lines.size() == c.profiles.size() + c.jobs.size());
  const auto first = nlohmann::json::parse(lines.at(0));
  CHECK(first.at("level") == "individual");
  CHECK(first.at("vector").size() == 8);
  REQUIRE(cli({"export-embeddings", "--corpus", corpus, "--checkpoint", ckpt, "--level", "final", "--out",
               ws.path("emb")}) == kExitOk);
  const auto pair = nlohmann::json::parse(read_lines(ws.dir / "emb/embeddings_final.jsonl").at(0));
  CHECK(pair.at("final_user").size() == 8);
  CHECK(pair.at("final_job").size() == 8);
  CHECK(cli({"export-embeddings", "--corpus", corpus, "--checkpoint", ckpt, "--level", "section", "--out",
             ws.path("emb")}) == kExitConfig);

  REQUIRE(cli({"ablate", "--corpus", corpus, "--config", ws.train_config.string(), "--out", ws.path("abl"), "--set",
               "steps=1"}) == kExitOk);
  const auto ablation = read_json(ws.dir / "abl/ablation.json");
  CHECK(ablation.at("rows").size() == 4);
  CHECK(fs::exists(ws.dir / "abl/ablation.txt"));
}

TEST_CASE("pretrain with a grid records the search") {
  Workspace ws;
  REQUIRE(cli({"gen-corpus", "--config", ws.corpus_config.string(), "--out", ws.path("data")}) == kExitOk);
  REQUIRE(cli({"pretrain", "--corpus", ws.path("data/corpus.jsonl"), "--config", ws.train_config.string(), "--out",
               ws.path("run"), "--set", "steps=1", "--set", "grid.learning_rate=[0.001,0.01]"}) == kExitOk);
  const auto grid = read_json(ws.dir / "run/grid_search.json");
  CHECK(grid.at("cells").size() == 2);
  CHECK(grid.at("best_overrides").contains("learning_rate"));
}

TEST_SUITE_END();

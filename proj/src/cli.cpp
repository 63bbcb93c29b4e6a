#include "tarot/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tarot/errors.hpp"
#include "tarot/eval.hpp"
#include "tarot/hash.hpp"
#include "tarot/trainer.hpp"

namespace tarot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config " + path + " must be a JSON object");
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Corpus read_corpus(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("corpus " + path + " does not exist");
  return load_corpus(path);
}

// Common record of one run, completed and written once the outputs exist.
class Manifest {
 public:
  explicit Manifest(std::string command) {
    doc_ = {{"command", std::move(command)},
            {"tool_version", kToolVersion},
            {"started_at", utc_now()},
            {"outputs", json::array()}};
  }

  json& operator[](const char* key) { return doc_[key]; }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }

  void write(const fs::path& dir) {
    doc_["finished_at"] = utc_now();
    write_text(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

struct Options {
  std::string config;
  std::string corpus;
  std::string checkpoint;
  std::string out;
  std::string task = "job_rec";
  std::string level = "individual";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

json resolve_config(const Options& o, bool seed_applies) {
  json doc = o.config.empty() ? json::object() : read_json_file(o.config);
  for (const auto& s : o.overrides) apply_override(doc, s);
  if (seed_applies && o.seed) doc["seed"] = *o.seed;
  return doc;
}

void cmd_gen_corpus(const Options& o) {
  Manifest manifest("gen-corpus");
  const CorpusConfig config = resolve_config(o, true).get<CorpusConfig>();
  config.validate();
  const Corpus corpus = generate(config);
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / "corpus.jsonl";
  save_corpus(path, corpus);
  manifest["config"] = config;
  manifest["corpus_hash"] = corpus_hash(corpus);
  manifest["corpus_path"] = path.string();
  manifest.output(path);
  manifest.write(o.out);
  std::cout << "wrote " << path.string() << " (" << corpus.profiles.size() << " profiles, " << corpus.jobs.size()
            << " jobs, " << corpus.interactions.size() << " interactions)\n";
}

void cmd_pretrain(const Options& o) {
  Manifest manifest("pretrain");
  TrainConfig config = resolve_config(o, true).get<TrainConfig>();
  config.validate();
  const Corpus corpus = read_corpus(o.corpus);
  fs::create_directories(o.out);

  if (!config.grid.empty()) {
    const GridSearchResult grid = grid_search(corpus, config);
    json cells = json::array();
    for (const auto& c : grid.cells) {
      cells.push_back({{"overrides", c.overrides},
                       {"metric", c.metric ? json(*c.metric) : json(nullptr)},
                       {"error", c.error}});
    }
    const fs::path grid_path = fs::path(o.out) / "grid_search.json";
    write_text(grid_path, json{{"best_overrides", grid.best_overrides}, {"cells", cells}}.dump(2) + "\n");
    manifest.output(grid_path);
    manifest["grid_config"] = config;
    config = grid.best;
    config.grid = json::object();
  }

  const fs::path log_path = fs::path(o.out) / "trainlog.jsonl";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw std::runtime_error("cannot open " + log_path.string());
  PretrainOptions options;
  options.checkpoint_dir = fs::path(o.out);
  options.on_step = [&](const TrainLogEntry& e) { log << to_json_line(e).dump() << '\n'; };
  const PretrainResult result = pretrain(corpus, config, options);
  log.close();

  const fs::path ckpt = fs::path(o.out) / "checkpoint.bin";
  manifest["config"] = config;
  manifest["config_hash"] = result.log.config_hash;
  manifest["corpus_hash"] = result.log.corpus_hash;
  manifest["corpus_path"] = o.corpus;
  manifest["checkpoint"] = ckpt.string();
  if (config.checkpoint_every > 0) {
    for (int s = config.checkpoint_every; s <= config.steps; s += config.checkpoint_every) {
      manifest.output(fs::path(o.out) / ("checkpoint_step" + std::to_string(s) + ".bin"));
    }
  }
  manifest.output(ckpt);
  manifest.output(log_path);
  manifest.write(o.out);
  const auto& last = result.log.entries.back();
  std::cout << "trained " << config.steps << " steps, final joint loss " << last.joint << "\n";
}

void cmd_eval(const Options& o) {
  Manifest manifest("eval");
  const RecTask task = parse_rec_task(o.task);
  const Corpus corpus = read_corpus(o.corpus);
  if (!fs::exists(o.checkpoint)) throw ConfigError("checkpoint " + o.checkpoint + " does not exist");
  const TarotModel model = load_checkpoint(o.checkpoint);
  MetricsReport report = run_downstream(model, corpus, task);
  report.metadata["checkpoint_sha256"] = sha256_file(o.checkpoint);

  fs::create_directories(o.out);
  const std::string stem = "report_" + std::string(rec_task_label(task));
  const fs::path json_path = fs::path(o.out) / (stem + ".json");
  const fs::path text_path = fs::path(o.out) / (stem + ".txt");
  write_text(json_path, json(report).dump(2) + "\n");
  const std::string table = format_report_table(std::span<const MetricsReport>(&report, 1));
  write_text(text_path, table);
  manifest["config"] = {{"task", rec_task_label(task)}};
  manifest["corpus_hash"] = corpus_hash(corpus);
  manifest["corpus_path"] = o.corpus;
  manifest["checkpoint"] = o.checkpoint;
  manifest["checkpoint_hash"] = sha256_file(o.checkpoint);
  manifest.output(json_path);
  manifest.output(text_path);
  manifest.write(o.out);
  std::cout << table;
}

void cmd_ablate(const Options& o) {
  Manifest manifest("ablate");
  const TrainConfig config = resolve_config(o, true).get<TrainConfig>();
  config.validate();
  const Corpus corpus = read_corpus(o.corpus);
  fs::create_directories(o.out);
  const AblationReport report =
      run_ablation(corpus, config, [](const std::string& msg) { std::cerr << msg << "\n"; });
  const fs::path json_path = fs::path(o.out) / "ablation.json";
  const fs::path text_path = fs::path(o.out) / "ablation.txt";
  write_text(json_path, json(report).dump(2) + "\n");
  const std::string table = format_ablation_table(report);
  write_text(text_path, table);
  manifest["config"] = config;
  manifest["corpus_hash"] = corpus_hash(corpus);
  manifest["corpus_path"] = o.corpus;
  manifest.output(json_path);
  manifest.output(text_path);
  manifest.write(o.out);
  std::cout << table;
}

json row_json(const Tensor& t) { return json(t.to_vector()); }

void cmd_export(const Options& o) {
  Manifest manifest("export-embeddings");
  if (o.level != "individual" && o.level != "final") {
    throw ConfigError("unknown level '" + o.level + "' (expected individual or final)");
  }
  const Corpus corpus = read_corpus(o.corpus);
  if (!fs::exists(o.checkpoint)) throw ConfigError("checkpoint " + o.checkpoint + " does not exist");
  const TarotModel model = load_checkpoint(o.checkpoint);
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / ("embeddings_" + o.level + ".jsonl");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());

  NoGradGuard no_grad;
  const Hierarchy& h = model.hierarchy();
  std::size_t lines = 0;
  if (o.level == "individual") {
    std::vector<const Document*> docs;
    for (const auto& p : corpus.profiles) docs.push_back(&p);
    for (const auto& j : corpus.jobs) docs.push_back(&j);
    constexpr std::size_t kChunk = 64;
    for (std::size_t b = 0; b < docs.size(); b += kChunk) {
      const std::size_t n = std::min(kChunk, docs.size() - b);
      for (const auto& e : h.encode_documents(std::span(docs).subspan(b, n), true, false)) {
        out << json{{"id", e.doc->id},
                    {"level", "individual"},
                    {"side", side_label(e.doc->side)},
                    {"vector", row_json(e.individual->vector)}}
                   .dump()
            << '\n';
        ++lines;
      }
    }
  } else {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& i : corpus.interactions) {
      if (!seen.insert({i.user_id, i.job_id}).second) continue;
      const Document* u = corpus.find_profile(i.user_id);
      const Document* j = corpus.find_job(i.job_id);
      const Document* pair[] = {u, j};
      auto enc = h.encode_documents(pair, true, false);
      const InteractionEmbedding x = h.cross_interact(enc[0], enc[1]);
      out << json{{"user_id", i.user_id},
                  {"job_id", i.job_id},
                  {"level", "final"},
                  {"final_user", row_json(x.final_user)},
                  {"final_job", row_json(x.final_job)}}
                 .dump()
          << '\n';
      ++lines;
    }
  }
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
  manifest["config"] = {{"level", o.level}};
  manifest["corpus_hash"] = corpus_hash(corpus);
  manifest["corpus_path"] = o.corpus;
  manifest["checkpoint"] = o.checkpoint;
  manifest["checkpoint_hash"] = sha256_file(o.checkpoint);
  manifest.output(path);
  manifest.write(o.out);
  std::cout << "wrote " << lines << " embeddings to " << path.string() << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"TAROT hierarchical multitask pretraining for person-job matching"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; },
                                            "Run seed; every random stream derives from it");
  };
  auto add_set = [&](CLI::App* sub) {
    sub->add_option("--set", o.overrides, "Config override, dot.path=value (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen->add_option("--config", o.config, "Corpus config JSON");
  gen->add_option("--out", o.out, "Output directory")->required();
  add_seed(gen);
  add_set(gen);

  auto* pre = app.add_subcommand("pretrain", "Multitask pretraining");
  pre->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
  pre->add_option("--config", o.config, "Train config JSON");
  pre->add_option("--out", o.out, "Output directory")->required();
  add_seed(pre);
  add_set(pre);

  auto* ev = app.add_subcommand("eval", "Downstream evaluation with a frozen model");
  ev->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint archive")->required();
  ev->add_option("--task", o.task, "job_rec or candidate_rec");
  ev->add_option("--out", o.out, "Output directory")->required();

  auto* abl = app.add_subcommand("ablate", "Leave-one-task-out ablation");
  abl->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
  abl->add_option("--config", o.config, "Train config JSON");
  abl->add_option("--out", o.out, "Output directory")->required();
  add_seed(abl);
  add_set(abl);

  auto* exp = app.add_subcommand("export-embeddings", "Export individual or final embeddings");
  exp->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
  exp->add_option("--checkpoint", o.checkpoint, "Checkpoint archive")->required();
  exp->add_option("--level", o.level, "individual or final");
  exp->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) cmd_gen_corpus(o);
    else if (pre->parsed()) cmd_pretrain(o);
    else if (ev->parsed()) cmd_eval(o);
    else if (abl->parsed()) cmd_ablate(o);
    else if (exp->parsed()) cmd_export(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CorpusParseError& e) {
    std::cerr << "corpus error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tarot

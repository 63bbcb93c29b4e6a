#pragma once

#include <string_view>

namespace tarot {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Entry point of the `tarot` binary: gen-corpus, pretrain, eval, ablate,
// export-embeddings. Every subcommand writes its artifacts and a manifest.json
// into --out.
int run_cli(int argc, char** argv);

}  // namespace tarot

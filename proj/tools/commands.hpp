#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mqf::cli {

enum ExitCode : int { kConverged = 0, kFailure = 1, kMaxIterations = 2 };

struct Args {
  std::vector<std::string> inputs;
  std::string config;  // empty: all defaults
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_fit(const Args& args);
int cmd_select(const Args& args);
int cmd_simulate(const Args& args);
int cmd_experiment(const Args& args);
int cmd_impute(const Args& args);
int cmd_similarity(const Args& args);

/// Runs a command and maps exceptions to exit code 1 with a single
/// `error: <category>: <message>` line on stderr.
int run_guarded(int (*command)(const Args&), const Args& args);

}  // namespace mqf::cli

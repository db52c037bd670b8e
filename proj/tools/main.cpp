#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quantile factor models for matrix panels: estimation, selection and simulation"};
  app.require_subcommand(1);

  mqf::cli::Args args;
  std::uint64_t seed = 0;
  int threads = 0;
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const mqf::cli::Args&);
    int max_inputs;
  };
  const Entry entries[] = {
      {"fit", "Estimate R, C and F_t at one quantile level", mqf::cli::cmd_fit, 1},
      {"select", "Estimate the numbers of row and column factors", mqf::cli::cmd_select, 1},
      {"simulate", "Generate a panel and its normalized truth", mqf::cli::cmd_simulate, 0},
      {"experiment", "Run a Monte Carlo experiment", mqf::cli::cmd_experiment, 0},
      {"impute", "Fill missing entries with the fitted common component", mqf::cli::cmd_impute, 1},
      {"similarity", "Similarity of two loading spaces", mqf::cli::cmd_similarity, 2},
  };
  int (*chosen)(const mqf::cli::Args&) = nullptr;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    if (e.max_inputs > 0)
      sub->add_option("--input", args.inputs, "Input file (long CSV or dense binary)")
          ->expected(1, e.max_inputs)
          ->required();
    sub->add_option("--config", args.config, "JSON configuration file");
    sub->add_option("--out", args.out, "Output directory");
    sub->add_option("--seed", seed, "Random seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads (overrides MQF_THREADS)")
        ->check(CLI::PositiveNumber);
    sub->callback([&chosen, fn = e.fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << std::endl;
    return mqf::cli::kFailure;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed")) args.seed = seed;
    if (sub->count("--threads")) args.threads = threads;
  }
  return mqf::cli::run_guarded(chosen, args);
}

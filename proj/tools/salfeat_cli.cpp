// Command-line front end. Talks to the library only through the C interface.
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "salfeat/salfeat.h"

namespace {

void print_log(sf_log_level level, const char* message, void* user) {
  const bool quiet = *static_cast<bool*>(user);
  if (level == SF_LOG_INFO) {
    if (!quiet) std::fprintf(stdout, "%s%s", message, message[0] && message[std::char_traits<char>::length(message) - 1] == '\n' ? "" : "\n");
    return;
  }
  std::fprintf(stderr, "%s: %s\n", level == SF_LOG_WARNING ? "warning" : "error", message);
}

int report_failure(sf_status status) {
  std::fprintf(stderr, "salfeat: %s\n", sf_last_error());
  // argument and internal failures are reported as data errors
  return status == SF_ERR_CONFIG ? 3 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency-based eye-tracking features and classification"};
  app.set_version_flag("--version", std::string(sf_version()));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  bool quiet = false;

  struct Command {
    const char* name;
    const char* help;
    sf_status (*fn)(sf_run*);
  };
  const Command commands[] = {
      {"synth", "Generate a synthetic dataset (images, fixations, manifests)", sf_cmd_synth},
      {"saliency", "Compute and cache saliency maps for every manifest image", sf_cmd_saliency},
      {"features", "Extract the feature matrix (features.csv)", sf_cmd_features},
      {"crossval", "Cross-validate the configured learner (cv_report.json)", sf_cmd_crossval},
      {"ablate", "Accuracy versus number of saliency models (ablation.csv)", sf_cmd_ablate},
      {"report", "Render report.md from existing artifacts", sf_cmd_report},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config, "Run configuration (YAML)")->required();
    sub->add_option("--seed", seed, "Run seed (overrides the configuration)");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory (overrides the configuration)");
    sub->add_flag("-q,--quiet", quiet, "Only print warnings and errors");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (app.got_subcommand(c.name)) chosen = &c;

  sf_run* run = nullptr;
  sf_status st = sf_run_open(config.c_str(), &run);
  if (st != SF_OK) return report_failure(st);
  sf_run_set_log(run, print_log, &quiet);
  if (seed) sf_run_set_seed(run, *seed);
  if (jobs) st = sf_run_set_jobs(run, *jobs);
  if (st == SF_OK && out) st = sf_run_set_output_dir(run, out->c_str());
  if (st == SF_OK) st = chosen->fn(run);
  const int code = st == SF_OK ? 0 : report_failure(st);
  sf_run_close(run);
  return code;
}

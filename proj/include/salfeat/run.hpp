#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "salfeat/features.hpp"
#include "salfeat/learners.hpp"
#include "salfeat/saliency.hpp"
#include "salfeat/synth.hpp"

namespace salfeat {

enum class LogLevel { Info = 0, Warning = 1, Error = 2 };
using LogSink = std::function<void(LogLevel, const std::string&)>;

// Batch run settings, read from a YAML file. Relative paths resolve against
// the directory of that file.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> fixations;  // default: fixations.csv next to the manifest
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> cache_dir;  // default: <output_dir>/cache
  int jobs = 1;
  std::vector<ModelSpec> models;  // default: the five built-in models
  MetricConfig metrics;
  LearnerConfig learner;
  std::optional<Protocol> protocol;  // default: by manifest mode
  SynthConfig synth;
  std::vector<std::size_t> ablation_sizes;  // default: 1..T
  std::size_t ablation_repeats = 10;

  std::uint64_t require_seed() const;
  ModelRegistry registry() const;
  std::filesystem::path cache() const;
  std::filesystem::path fixations_path() const;
  // Canonical text of every setting that influences results (no paths, no jobs).
  std::string canonical() const;
};

RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct CommandContext {
  RunConfig config;
  LogSink log;
};

struct SaliencySummary {
  std::size_t computed = 0;
  std::size_t cached = 0;
  std::vector<std::string> failed;  // image ids
};

// Artifact file names inside the output directory.
inline constexpr const char* kFeaturesFile = "features.csv";
inline constexpr const char* kCvReportFile = "cv_report.json";
inline constexpr const char* kCvTableFile = "cv_report.txt";
inline constexpr const char* kAblationFile = "ablation.csv";
inline constexpr const char* kReportFile = "report.md";

void cmd_synth(const CommandContext& ctx);
SaliencySummary cmd_saliency(const CommandContext& ctx);
DesignMatrix cmd_features(const CommandContext& ctx);
CvReport cmd_crossval(const CommandContext& ctx);
std::vector<AblationRow> cmd_ablate(const CommandContext& ctx);
std::string cmd_report(const CommandContext& ctx);

// Cache file of one (image content, model) pair.
std::filesystem::path cache_entry(const std::filesystem::path& cache_dir, const std::string& image_sha256,
                                  const ModelRegistry& registry, std::size_t model);

}  // namespace salfeat

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "salfeat/gaze_data.hpp"
#include "salfeat/random.hpp"

namespace salfeat {

enum class BehaviorKind { SaliencyFollower, CenterBiased, Uniform };
const char* to_string(BehaviorKind kind);
std::optional<BehaviorKind> parse_behavior(std::string_view name);

// Fixations are drawn from lambda * behavior density + (1 - lambda) * uniform.
struct ClassBehavior {
  std::string name;
  BehaviorKind kind = BehaviorKind::Uniform;
  double lambda = 0.9;
};

struct SynthConfig {
  int n_images = 30;
  int width = 128;
  int height = 128;
  int subjects_per_class = 20;
  int fixations_per_trial = 8;
  std::vector<ClassBehavior> classes{{"follower", BehaviorKind::SaliencyFollower, 0.9},
                                     {"center", BehaviorKind::CenterBiased, 0.9}};
  std::uint64_t seed = 0;
  bool task_variant = true;  // also emit manifest_task.json

  void validate() const;
};

struct SynthImage {
  std::string id;
  ImageBuffer image;  // 3 channels, values on the k/255 lattice
};

struct SynthDataset {
  DatasetManifest manifest;  // subject mode
  std::optional<DatasetManifest> task_manifest;
  std::vector<FixationRecord> records;
  std::vector<SynthImage> images;
};

// Gray background with 3-6 high-contrast discs or striped patches.
std::vector<SynthImage> generate_images(const SynthConfig& cfg, Rng& rng);
// n independent draws from the categorical distribution over pixels.
std::vector<Pixel> sample_fixations_from_density(const DensityMap& density, std::size_t n, Rng& rng);
// Density a behavior induces on an image, before mixing with uniform.
DensityMap behavior_density(BehaviorKind kind, const ImageBuffer& image);

// Everything in memory; image paths point to images/<id>.png under out_dir.
SynthDataset synthesize(const SynthConfig& cfg, const std::filesystem::path& out_dir);
// Writes images/*.png, fixations.csv, manifest.json (and manifest_task.json).
SynthDataset generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace salfeat

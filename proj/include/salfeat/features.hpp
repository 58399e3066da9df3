#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "salfeat/gaze_data.hpp"
#include "salfeat/metrics.hpp"
#include "salfeat/saliency.hpp"

namespace salfeat {

// Column names "<model>.<metric>", model-major: every metric of model 1, then model 2, ...
struct FeatureLayout {
  std::vector<std::string> model_ids;
  std::vector<MetricId> metrics;

  std::size_t size() const { return model_ids.size() * metrics.size(); }
  std::vector<std::string> column_names() const;
  bool operator==(const FeatureLayout&) const = default;
};

struct FeatureVector {
  FeatureLayout layout;
  std::vector<double> values;
  std::size_t degenerate_count = 0;
};

struct FeatureContext {
  MetricConfig metrics;
  double density_sigma = 0.0;
  const ShuffleSet* shuffle = nullptr;  // required when sauc is enabled
  const DensityMap* baseline = nullptr;  // defaults to the centered Gaussian
  std::uint64_t seed = 0;                // stream seed of this sample
};

FeatureVector image_feature(const FixationMap& fixations, const SaliencyBank& bank, const FeatureContext& ctx);
// Element-wise mean, summed in the given order.
FeatureVector subject_feature(const std::vector<FeatureVector>& per_image);
// image_feature of the union of the subjects' maps.
FeatureVector task_feature(const std::vector<FixationMap>& subject_maps, const SaliencyBank& bank,
                           const FeatureContext& ctx);

// Centered Gaussian as a probability density.
DensityMap center_baseline(int width, int height);

struct LabeledSample {
  std::string sample_id;
  int label = 0;
  std::vector<double> features;
  // whose fixations went into the row: subjects x images
  std::vector<std::string> subjects;
  std::vector<std::string> images;
};

// Where the shuffled-AUC negatives of a row come from: subjects x (images
// minus the row's own images). OwnSubject uses the row's subjects instead of
// the scope's subject list.
struct PoolScope {
  enum class Kind { OwnSubject, AllSubjects };
  Kind kind = Kind::OwnSubject;
  std::vector<std::string> subjects;
  std::vector<std::string> images;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string registry_hash;
  std::string metric_config;
  std::string metric_hash;
  std::size_t degenerate_count = 0;
  std::size_t skipped_trials = 0;
  std::vector<std::string> excluded;  // samples dropped for lack of usable fixations
};

struct DesignMatrix {
  ManifestMode mode = ManifestMode::Subject;
  FeatureLayout layout;
  std::vector<std::string> class_names;
  int positive_class = 0;
  std::vector<LabeledSample> rows;
  PoolScope pool;
  Provenance provenance;

  // Keeps the columns of the given models, in registry order.
  DesignMatrix select_models(const std::vector<std::string>& model_ids) const;
  DesignMatrix select_rows(const std::vector<std::size_t>& indices) const;
};

struct BuildOptions {
  MetricConfig metrics;
  std::uint64_t seed = 0;
  std::string registry_hash;
  // Optional restrictions used by split-aware protocols.
  std::optional<std::set<std::string>> row_images;
  std::optional<std::set<std::string>> row_subjects;
  std::optional<std::set<std::string>> pool_images;
  std::optional<std::set<std::string>> pool_subjects;
  int jobs = 1;
  std::size_t shuffle_cap_factor = 10;
};

// banks: image id -> bank at the image's manifest resolution (or any
// resolution; maps are resized to the fixation map).
DesignMatrix build_design_matrix(const DatasetManifest& manifest, const std::vector<FixationRecord>& records,
                                 const std::map<std::string, SaliencyBank>& banks, const BuildOptions& options);

// CSV `sample_id,label,<model>.<metric>,...` plus a JSON provenance sidecar.
std::string design_matrix_csv(const DesignMatrix& m);
std::string design_matrix_provenance_json(const DesignMatrix& m);
void save_design_matrix(const DesignMatrix& m, const std::filesystem::path& csv_path);
DesignMatrix load_design_matrix(const std::filesystem::path& csv_path);
std::filesystem::path provenance_path(const std::filesystem::path& artifact);

}  // namespace salfeat

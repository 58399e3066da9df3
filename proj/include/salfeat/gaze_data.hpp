#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "salfeat/imaging.hpp"

namespace salfeat {

struct FixationRecord {
  std::string subject_id;
  std::string image_id;
  long index = 0;
  double x = 0.0;
  double y = 0.0;
  std::optional<double> duration_ms;

  bool operator==(const FixationRecord&) const = default;
};

struct Pixel {
  int x = 0;
  int y = 0;
  auto operator<=>(const Pixel&) const = default;
};

// Binary fixation indicator. hits is kept sorted (row-major) and unique.
class FixationMap {
 public:
  FixationMap(int width, int height);
  FixationMap(int width, int height, std::vector<Pixel> hits, std::size_t dropped_count);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Pixel>& hits() const { return hits_; }
  std::size_t dropped_count() const { return dropped_; }
  bool empty() const { return hits_.empty(); }
  bool contains(Pixel p) const;

  // 1 at hits, 0 elsewhere
  Grid to_grid() const;

 private:
  int width_;
  int height_;
  std::vector<Pixel> hits_;
  std::size_t dropped_;
};

// Fixation density: nonnegative, sums to one.
struct DensityMap {
  Grid grid;
};

std::vector<FixationRecord> parse_fixation_table(std::istream& in);
void write_fixation_table(std::ostream& out, const std::vector<FixationRecord>& records);

FixationMap build_fixation_map(const std::vector<FixationRecord>& records, int width, int height);
FixationMap union_fixation_maps(const std::vector<FixationMap>& maps);

// Each hit contributes a Gaussian truncated at 3 sigma and renormalized at the
// borders; the sum is then normalized to 1. sigma == 0 gives delta peaks.
DensityMap blur_to_density(const FixationMap& map, double sigma);
// Any nonnegative grid with positive mass, rescaled to sum 1.
DensityMap density_from_grid(const Grid& g);

enum class ManifestMode { Subject, Task };

const char* to_string(ManifestMode mode);

struct ImageEntry {
  std::string id;
  std::filesystem::path path;  // resolved against the manifest directory
  int width = 0;
  int height = 0;
};

struct SubjectEntry {
  std::string id;
  std::string label;
};

struct DatasetManifest {
  ManifestMode mode = ManifestMode::Subject;
  std::vector<std::string> class_names;
  std::vector<ImageEntry> images;
  std::vector<SubjectEntry> subjects;
  std::optional<std::map<std::string, std::string>> task_labels;
  // optional overrides
  std::optional<std::string> positive_class;
  std::optional<double> density_sigma;

  std::size_t num_classes() const { return class_names.size(); }
  int class_index(const std::string& name) const;  // -1 when unknown
  // Designated positive class or the lexicographically first class name.
  int positive_class_index() const;
  const ImageEntry* find_image(const std::string& id) const;
  const SubjectEntry* find_subject(const std::string& id) const;
  // Density sigma for an image: the manifest override or width / 32.
  double sigma_for(const ImageEntry& image) const;
};

// Parses and validates; every failure is collected into one validation error.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Validation without reading the file system (used by load_manifest and tests).
void validate_manifest(const DatasetManifest& manifest, bool check_paths);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Every record must reference a manifest subject and image.
void check_records_resolve(const DatasetManifest& manifest, const std::vector<FixationRecord>& records);

}  // namespace salfeat

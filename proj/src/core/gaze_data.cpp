#include "salfeat/gaze_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "salfeat/error.hpp"
#include "salfeat/text.hpp"

namespace salfeat {

using nlohmann::json;

FixationMap::FixationMap(int width, int height) : FixationMap(width, height, {}, 0) {}

FixationMap::FixationMap(int width, int height, std::vector<Pixel> hits, std::size_t dropped_count)
    : width_(width), height_(height), hits_(std::move(hits)), dropped_(dropped_count) {
  if (width <= 0 || height <= 0)
    throw Error(ErrorKind::InvalidDimensions, "fixation map dimensions must be positive");
  // row-major ordering so iteration matches grid layout
  std::sort(hits_.begin(), hits_.end(), [](Pixel a, Pixel b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  hits_.erase(std::unique(hits_.begin(), hits_.end()), hits_.end());
  for (Pixel p : hits_)
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
      throw Error(ErrorKind::InvalidDimensions, "fixation hit outside map");
}

bool FixationMap::contains(Pixel p) const {
  return std::binary_search(hits_.begin(), hits_.end(), p,
                            [](Pixel a, Pixel b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
}

Grid FixationMap::to_grid() const {
  Grid g(width_, height_);
  for (Pixel p : hits_) g.at(p.x, p.y) = 1.0;
  return g;
}

namespace {

constexpr const char* kColumns[] = {"subject_id", "image_id", "index", "x", "y", "duration_ms"};

double parse_real(std::string_view field, std::size_t line, const char* name) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError(line, std::string("non-numeric ") + name + " '" + std::string(field) + "'");
  return v;
}

}  // namespace

std::vector<FixationRecord> parse_fixation_table(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, "fixation table is empty (missing header)");
  ++line_no;
  const auto header = split_fields(trim_eol(line), ',');
  int col[6];
  for (int c = 0; c < 6; ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      throw Error(ErrorKind::Format, std::string("fixation table header lacks column '") + kColumns[c] + "'");
    col[c] = static_cast<int>(it - header.begin());
  }

  std::vector<FixationRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim_eol(line);
    if (row.empty()) continue;
    const auto fields = split_fields(row, ',');
    if (fields.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    FixationRecord r;
    r.subject_id = std::string(fields[col[0]]);
    r.image_id = std::string(fields[col[1]]);
    if (r.subject_id.empty() || r.image_id.empty()) throw ParseError(line_no, "empty identifier");
    {
      const std::string_view f = fields[col[2]];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), r.index);
      if (ec != std::errc() || ptr != f.data() + f.size() || r.index < 0)
        throw ParseError(line_no, "invalid index '" + std::string(f) + "'");
    }
    r.x = parse_real(fields[col[3]], line_no, "x coordinate");
    r.y = parse_real(fields[col[4]], line_no, "y coordinate");
    if (!fields[col[5]].empty()) {
      const double d = parse_real(fields[col[5]], line_no, "duration");
      if (d < 0.0) throw ParseError(line_no, "negative duration");
      r.duration_ms = d;
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_fixation_table(std::ostream& out, const std::vector<FixationRecord>& records) {
  out << "subject_id,image_id,index,x,y,duration_ms\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.image_id << ',' << r.index << ',' << format_real(r.x) << ','
        << format_real(r.y) << ',';
    if (r.duration_ms) out << format_real(*r.duration_ms);
    out << '\n';
  }
}

FixationMap build_fixation_map(const std::vector<FixationRecord>& records, int width, int height) {
  if (width <= 0 || height <= 0)
    throw Error(ErrorKind::InvalidDimensions, "fixation map dimensions must be positive");
  std::vector<Pixel> hits;
  std::size_t dropped = 0;
  for (const auto& r : records) {
    const double fx = std::floor(r.x), fy = std::floor(r.y);
    if (fx < 0 || fy < 0 || fx >= width || fy >= height) {
      ++dropped;
      continue;
    }
    hits.push_back({static_cast<int>(fx), static_cast<int>(fy)});
  }
  return FixationMap(width, height, std::move(hits), dropped);
}

FixationMap union_fixation_maps(const std::vector<FixationMap>& maps) {
  if (maps.empty()) throw Error(ErrorKind::EmptyInput, "union of zero fixation maps");
  std::vector<Pixel> hits;
  std::size_t dropped = 0;
  for (const auto& m : maps) {
    if (m.width() != maps.front().width() || m.height() != maps.front().height())
      throw Error(ErrorKind::Shape, "fixation maps differ in dimensions");
    hits.insert(hits.end(), m.hits().begin(), m.hits().end());
    dropped += m.dropped_count();
  }
  return FixationMap(maps.front().width(), maps.front().height(), std::move(hits), dropped);
}

DensityMap blur_to_density(const FixationMap& map, double sigma) {
  if (map.empty()) throw Error(ErrorKind::DegenerateInput, "density of a fixation map without hits");
  if (!(sigma >= 0.0)) throw Error(ErrorKind::Configuration, "density sigma must be nonnegative");
  Grid g(map.width(), map.height());
  const double share = 1.0 / static_cast<double>(map.hits().size());
  if (sigma == 0.0) {
    for (Pixel p : map.hits()) g.at(p.x, p.y) += share;
    return {std::move(g)};
  }
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> profile(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) profile[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (Pixel p : map.hits()) {
    const int x0 = std::max(0, p.x - r), x1 = std::min(map.width() - 1, p.x + r);
    const int y0 = std::max(0, p.y - r), y1 = std::min(map.height() - 1, p.y + r);
    double inside = 0.0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) inside += profile[x - p.x + r] * profile[y - p.y + r];
    const double scale = share / inside;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) g.at(x, y) += scale * profile[x - p.x + r] * profile[y - p.y + r];
  }
  return {std::move(g)};
}

DensityMap density_from_grid(const Grid& g) {
  const double total = g.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateMap, "map has no mass to normalize");
  DensityMap d{g};
  for (double& v : d.grid.values) {
    if (v < 0.0) throw Error(ErrorKind::DegenerateMap, "negative value in density");
    v /= total;
  }
  return d;
}

const char* to_string(ManifestMode mode) {
  return mode == ManifestMode::Subject ? "subject-classification" : "task-classification";
}

int DatasetManifest::class_index(const std::string& name) const {
  auto it = std::find(class_names.begin(), class_names.end(), name);
  return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
}

int DatasetManifest::positive_class_index() const {
  if (positive_class) return class_index(*positive_class);
  auto it = std::min_element(class_names.begin(), class_names.end());
  return static_cast<int>(it - class_names.begin());
}

const ImageEntry* DatasetManifest::find_image(const std::string& id) const {
  for (const auto& im : images)
    if (im.id == id) return &im;
  return nullptr;
}

const SubjectEntry* DatasetManifest::find_subject(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return &s;
  return nullptr;
}

double DatasetManifest::sigma_for(const ImageEntry& image) const {
  return density_sigma ? *density_sigma : image.width / 32.0;
}

void validate_manifest(const DatasetManifest& m, bool check_paths) {
  std::vector<std::string> problems;
  std::set<std::string> classes(m.class_names.begin(), m.class_names.end());
  if (m.class_names.size() < 2) problems.push_back("class_names must list at least 2 classes");
  if (classes.size() != m.class_names.size()) problems.push_back("class_names contains duplicates");
  if (m.positive_class && !classes.count(*m.positive_class))
    problems.push_back("positive_class '" + *m.positive_class + "' is not a class name");
  if (m.density_sigma && !(*m.density_sigma >= 0.0)) problems.push_back("density_sigma must be >= 0");
  if (m.images.empty()) problems.push_back("no images");
  std::set<std::string> image_ids;
  for (const auto& im : m.images) {
    if (!image_ids.insert(im.id).second) problems.push_back("duplicate image id '" + im.id + "'");
    if (im.width <= 0 || im.height <= 0) problems.push_back("image '" + im.id + "' has invalid dimensions");
    if (check_paths) {
      std::ifstream probe(im.path, std::ios::binary);
      if (!probe) problems.push_back("image '" + im.id + "' path unreadable: " + im.path.string());
    }
  }
  if (m.subjects.empty()) problems.push_back("no subjects");
  std::set<std::string> subject_ids;
  for (const auto& s : m.subjects) {
    if (!subject_ids.insert(s.id).second) problems.push_back("duplicate subject id '" + s.id + "'");
    if (!classes.count(s.label))
      problems.push_back("subject '" + s.id + "' has label '" + s.label + "' absent from class_names");
  }
  if (m.mode == ManifestMode::Task && !m.task_labels)
    problems.push_back("task-classification manifest requires task_labels");
  if (m.task_labels) {
    for (const auto& [image, label] : *m.task_labels) {
      if (!image_ids.count(image)) problems.push_back("task_labels references unknown image '" + image + "'");
      if (!classes.count(label))
        problems.push_back("task_labels maps '" + image + "' to unknown class '" + label + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest validation failed:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::Validation, msg);
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, "manifest is not valid JSON: " + std::string(e.what()));
  }
  const auto base = path.parent_path();
  DatasetManifest m;
  try {
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "subject" || mode == "subject-classification") m.mode = ManifestMode::Subject;
    else if (mode == "task" || mode == "task-classification") m.mode = ManifestMode::Task;
    else throw Error(ErrorKind::Validation, "manifest validation failed:\n  - unknown mode '" + mode + "'");
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    for (const auto& im : doc.at("images")) {
      ImageEntry e;
      e.id = im.at("id").get<std::string>();
      const std::filesystem::path p = im.at("path").get<std::string>();
      e.path = p.is_absolute() ? p : base / p;
      e.width = im.at("width").get<int>();
      e.height = im.at("height").get<int>();
      m.images.push_back(std::move(e));
    }
    for (const auto& s : doc.at("subjects"))
      m.subjects.push_back({s.at("id").get<std::string>(), s.at("label").get<std::string>()});
    if (doc.contains("task_labels")) m.task_labels = doc.at("task_labels").get<std::map<std::string, std::string>>();
    if (doc.contains("positive_class")) m.positive_class = doc.at("positive_class").get<std::string>();
    if (doc.contains("density_sigma")) m.density_sigma = doc.at("density_sigma").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, "manifest validation failed:\n  - " + std::string(e.what()));
  }
  validate_manifest(m, true);
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json doc;
  doc["mode"] = m.mode == ManifestMode::Subject ? "subject" : "task";
  doc["class_names"] = m.class_names;
  doc["images"] = json::array();
  for (const auto& im : m.images) {
    auto rel = im.path.lexically_relative(path.parent_path());
    doc["images"].push_back({{"id", im.id}, {"path", (rel.empty() ? im.path : rel).generic_string()},
                             {"width", im.width}, {"height", im.height}});
  }
  doc["subjects"] = json::array();
  for (const auto& s : m.subjects) doc["subjects"].push_back({{"id", s.id}, {"label", s.label}});
  if (m.task_labels) doc["task_labels"] = *m.task_labels;
  if (m.positive_class) doc["positive_class"] = *m.positive_class;
  if (m.density_sigma) doc["density_sigma"] = *m.density_sigma;
  write_file_atomic(path, doc.dump(2) + "\n");
}

void check_records_resolve(const DatasetManifest& m, const std::vector<FixationRecord>& records) {
  std::set<std::string> subjects, images;
  for (const auto& s : m.subjects) subjects.insert(s.id);
  for (const auto& im : m.images) images.insert(im.id);
  std::set<std::string> problems;
  for (const auto& r : records) {
    if (!subjects.count(r.subject_id)) problems.insert("unknown subject '" + r.subject_id + "'");
    if (!images.count(r.image_id)) problems.insert("unknown image '" + r.image_id + "'");
  }
  if (!problems.empty()) {
    std::string msg = "fixation records do not resolve against the manifest:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::Validation, msg);
  }
}

}  // namespace salfeat

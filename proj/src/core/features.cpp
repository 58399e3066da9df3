#include "salfeat/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "salfeat/error.hpp"
#include "salfeat/parallel.hpp"
#include "salfeat/random.hpp"
#include "salfeat/text.hpp"
#include "salfeat/version.hpp"

namespace salfeat {

using nlohmann::ordered_json;

std::vector<std::string> FeatureLayout::column_names() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (const auto& m : model_ids)
    for (MetricId id : metrics) out.push_back(m + "." + to_string(id));
  return out;
}

DensityMap center_baseline(int width, int height) { return density_from_grid(center_gaussian_grid(width, height)); }

FeatureVector image_feature(const FixationMap& fixations, const SaliencyBank& bank, const FeatureContext& ctx) {
  if (bank.maps.empty()) throw Error(ErrorKind::Layout, "saliency bank of '" + bank.image_id + "' is empty");
  if (fixations.empty()) throw Error(ErrorKind::NoFixation, "no fixations for image '" + bank.image_id + "'");
  const int w = fixations.width(), h = fixations.height();
  const DensityMap density = blur_to_density(fixations, ctx.density_sigma);
  std::optional<DensityMap> own_baseline;
  if (!ctx.baseline) own_baseline = center_baseline(w, h);
  const DensityMap& baseline = ctx.baseline ? *ctx.baseline : *own_baseline;

  FeatureVector out;
  out.layout.metrics = ctx.metrics.ordered();
  for (const auto& map : bank.maps) {
    const Grid resized = resize_bilinear(map.grid, w, h);
    EvalInputs in{&resized, &fixations, &density, ctx.shuffle, &baseline};
    const EvalVector ev = evaluate_all(in, ctx.metrics, derive_seed(ctx.seed, map.model_id));
    out.layout.model_ids.push_back(map.model_id);
    out.values.insert(out.values.end(), ev.values.begin(), ev.values.end());
    out.degenerate_count += ev.degenerate_count();
  }
  return out;
}

FeatureVector subject_feature(const std::vector<FeatureVector>& per_image) {
  if (per_image.empty()) throw Error(ErrorKind::EmptyInput, "subject feature of zero images");
  FeatureVector out;
  out.layout = per_image.front().layout;
  out.values.assign(out.layout.size(), 0.0);
  for (const auto& f : per_image) {
    if (!(f.layout == out.layout) || f.values.size() != out.values.size())
      throw Error(ErrorKind::Layout, "feature vectors differ in layout");
    for (std::size_t k = 0; k < f.values.size(); ++k) out.values[k] += f.values[k];
    out.degenerate_count += f.degenerate_count;
  }
  for (double& v : out.values) v /= static_cast<double>(per_image.size());
  return out;
}

FeatureVector task_feature(const std::vector<FixationMap>& subject_maps, const SaliencyBank& bank,
                           const FeatureContext& ctx) {
  return image_feature(union_fixation_maps(subject_maps), bank, ctx);
}

// ------------------------------------------------------------ design matrix

namespace {

struct Trial {
  std::vector<const FixationRecord*> records;
};

using TrialKey = std::pair<std::string, std::string>;  // subject, image

bool allowed(const std::optional<std::set<std::string>>& filter, const std::string& id) {
  return !filter || filter->count(id) > 0;
}

// Fixations recorded on `source` mapped into the pixel grid of `target`.
void append_scaled(std::vector<Pixel>& out, const std::vector<const FixationRecord*>& records,
                   const ImageEntry& source, const ImageEntry& target) {
  const double sx = static_cast<double>(target.width) / source.width;
  const double sy = static_cast<double>(target.height) / source.height;
  for (const auto* r : records) {
    const double fx = std::floor(r->x * sx), fy = std::floor(r->y * sy);
    if (fx < 0 || fy < 0 || fx >= target.width || fy >= target.height) continue;
    out.push_back({static_cast<int>(fx), static_cast<int>(fy)});
  }
}

struct RowJob {
  std::string sample_id;
  int label = 0;
  std::vector<std::string> subjects;            // contributing subjects
  std::vector<std::string> images;              // images aggregated into the row
  std::vector<std::vector<std::string>> image_subjects;  // per image, whose fixations form F*
};

struct RowResult {
  std::optional<LabeledSample> sample;
  std::size_t skipped = 0;
  std::size_t degenerate = 0;
};

}  // namespace

DesignMatrix build_design_matrix(const DatasetManifest& manifest, const std::vector<FixationRecord>& records,
                                 const std::map<std::string, SaliencyBank>& banks, const BuildOptions& options) {
  check_records_resolve(manifest, records);

  std::map<TrialKey, Trial> trials;
  for (const auto& r : records) trials[{r.subject_id, r.image_id}].records.push_back(&r);

  // layout from the banks; every bank must follow the same model order
  std::vector<std::string> model_ids;
  for (const auto& im : manifest.images) {
    if (!allowed(options.row_images, im.id)) continue;
    auto it = banks.find(im.id);
    if (it == banks.end()) throw Error(ErrorKind::Validation, "no saliency bank for image '" + im.id + "'");
    std::vector<std::string> ids;
    for (const auto& m : it->second.maps) ids.push_back(m.model_id);
    if (model_ids.empty()) model_ids = ids;
    else if (ids != model_ids) throw Error(ErrorKind::Layout, "saliency bank of '" + im.id + "' has a different model order");
  }
  if (model_ids.empty()) throw Error(ErrorKind::Layout, "no saliency maps to build features from");

  DesignMatrix m;
  m.mode = manifest.mode;
  m.layout = {model_ids, options.metrics.ordered()};
  m.class_names = manifest.class_names;
  m.positive_class = manifest.positive_class_index();
  m.provenance.seed = options.seed;
  m.provenance.registry_hash = options.registry_hash;
  m.provenance.metric_config = options.metrics.describe();
  m.provenance.metric_hash = sha256_hex(m.provenance.metric_config);

  m.pool.kind = manifest.mode == ManifestMode::Subject ? PoolScope::Kind::OwnSubject : PoolScope::Kind::AllSubjects;
  for (const auto& s : manifest.subjects)
    if (allowed(options.pool_subjects, s.id)) m.pool.subjects.push_back(s.id);
  for (const auto& im : manifest.images)
    if (allowed(options.pool_images, im.id)) m.pool.images.push_back(im.id);

  // rows to compute
  std::vector<RowJob> jobs;
  if (manifest.mode == ManifestMode::Subject) {
    for (const auto& s : manifest.subjects) {
      if (!allowed(options.row_subjects, s.id)) continue;
      RowJob job;
      job.sample_id = s.id;
      job.label = manifest.class_index(s.label);
      job.subjects = {s.id};
      for (const auto& im : manifest.images) {
        if (!allowed(options.row_images, im.id)) continue;  // missing trials count as skipped
        job.images.push_back(im.id);
        job.image_subjects.push_back({s.id});
      }
      jobs.push_back(std::move(job));
    }
  } else {
    for (const auto& im : manifest.images) {
      if (!allowed(options.row_images, im.id)) continue;
      std::map<std::string, std::vector<std::string>> groups;  // label -> subjects
      for (const auto& s : manifest.subjects) {
        if (!allowed(options.row_subjects, s.id) || !trials.count({s.id, im.id})) continue;
        std::string label = s.label;
        if (auto it = manifest.task_labels->find(im.id); it != manifest.task_labels->end()) label = it->second;
        groups[label].push_back(s.id);
      }
      for (auto& [label, subjects] : groups) {
        RowJob job;
        job.sample_id = im.id + "|" + label;
        job.label = manifest.class_index(label);
        job.subjects = subjects;
        job.images = {im.id};
        job.image_subjects = {subjects};
        jobs.push_back(std::move(job));
      }
    }
  }

  std::map<std::pair<int, int>, DensityMap> baselines;
  for (const auto& im : manifest.images)
    if (!baselines.count({im.width, im.height})) baselines.emplace(std::pair{im.width, im.height}, center_baseline(im.width, im.height));

  const bool wants_shuffle = std::count(m.layout.metrics.begin(), m.layout.metrics.end(), MetricId::Sauc) > 0;

  std::vector<RowResult> results(jobs.size());
  parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
    const RowJob& job = jobs[j];
    RowResult& res = results[j];
    std::vector<FeatureVector> per_image;
    std::vector<std::string> used;
    for (std::size_t k = 0; k < job.images.size(); ++k) {
      const ImageEntry& target = *manifest.find_image(job.images[k]);
      std::vector<FixationRecord> own;
      for (const auto& sid : job.image_subjects[k])
        if (auto it = trials.find({sid, target.id}); it != trials.end())
          for (const auto* r : it->second.records) own.push_back(*r);
      const FixationMap fix = build_fixation_map(own, target.width, target.height);
      if (fix.empty()) {
        ++res.skipped;
        continue;
      }
      ShuffleSet shuffle;
      if (wants_shuffle) {
        const auto& pool_subjects = m.pool.kind == PoolScope::Kind::OwnSubject ? job.subjects : m.pool.subjects;
        std::vector<Pixel> points;
        for (const auto& other : m.pool.images) {
          if (other == target.id) continue;
          const ImageEntry& source = *manifest.find_image(other);
          for (const auto& sid : pool_subjects)
            if (auto it = trials.find({sid, other}); it != trials.end())
              append_scaled(points, it->second.records, source, target);
        }
        Rng rng(derive_seed(options.seed, "shuffle", job.sample_id, target.id));
        shuffle = make_shuffle_set(std::move(points), options.shuffle_cap_factor * fix.hits().size(), rng);
      }
      FeatureContext ctx;
      ctx.metrics = options.metrics;
      ctx.density_sigma = manifest.sigma_for(target);
      ctx.shuffle = wants_shuffle ? &shuffle : nullptr;
      ctx.baseline = &baselines.at({target.width, target.height});
      ctx.seed = derive_seed(options.seed, "features", job.sample_id, target.id);
      try {
        per_image.push_back(image_feature(fix, banks.at(target.id), ctx));
      } catch (const Error& e) {
        throw Error(e.kind(), "sample '" + job.sample_id + "', image '" + target.id + "': " + e.what());
      }
      used.push_back(target.id);
    }
    if (per_image.empty()) return;
    FeatureVector f = subject_feature(per_image);
    res.degenerate = f.degenerate_count;
    LabeledSample sample;
    sample.sample_id = job.sample_id;
    sample.label = job.label;
    sample.features = std::move(f.values);
    sample.subjects = job.subjects;
    sample.images = std::move(used);
    res.sample = std::move(sample);
  });

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    m.provenance.skipped_trials += results[j].skipped;
    m.provenance.degenerate_count += results[j].degenerate;
    if (results[j].sample) m.rows.push_back(std::move(*results[j].sample));
    else m.provenance.excluded.push_back(jobs[j].sample_id);
  }
  std::sort(m.rows.begin(), m.rows.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });

  std::vector<std::string> empty_classes;
  for (std::size_t c = 0; c < m.class_names.size(); ++c) {
    const bool present = std::any_of(m.rows.begin(), m.rows.end(), [&](const auto& r) { return r.label == static_cast<int>(c); });
    if (!present) empty_classes.push_back(m.class_names[c]);
  }
  if (!empty_classes.empty()) {
    std::string msg = "design matrix has no rows for class(es):";
    for (const auto& c : empty_classes) msg += " '" + c + "'";
    if (!m.provenance.excluded.empty()) {
      msg += "; excluded samples without usable fixations:";
      for (const auto& e : m.provenance.excluded) msg += " " + e;
    }
    throw Error(ErrorKind::Validation, msg);
  }
  return m;
}

DesignMatrix DesignMatrix::select_models(const std::vector<std::string>& wanted) const {
  DesignMatrix out = *this;
  out.layout.model_ids.clear();
  std::vector<std::size_t> columns;
  const std::size_t p = layout.metrics.size();
  for (std::size_t t = 0; t < layout.model_ids.size(); ++t) {
    if (std::find(wanted.begin(), wanted.end(), layout.model_ids[t]) == wanted.end()) continue;
    out.layout.model_ids.push_back(layout.model_ids[t]);
    for (std::size_t k = 0; k < p; ++k) columns.push_back(t * p + k);
  }
  if (out.layout.model_ids.size() != wanted.size())
    throw Error(ErrorKind::Layout, "model subset names a model absent from the feature layout");
  for (auto& row : out.rows) {
    std::vector<double> v;
    v.reserve(columns.size());
    for (std::size_t c : columns) v.push_back(row.features[c]);
    row.features = std::move(v);
  }
  return out;
}

DesignMatrix DesignMatrix::select_rows(const std::vector<std::size_t>& indices) const {
  DesignMatrix out = *this;
  out.rows.clear();
  for (std::size_t i : indices) out.rows.push_back(rows.at(i));
  return out;
}

// ------------------------------------------------------------------ export

std::string design_matrix_csv(const DesignMatrix& m) {
  std::ostringstream out;
  out << "sample_id,label";
  for (const auto& c : m.layout.column_names()) out << ',' << c;
  out << '\n';
  for (const auto& r : m.rows) {
    out << r.sample_id << ',' << m.class_names.at(r.label);
    for (double v : r.features) out << ',' << format_real(v);
    out << '\n';
  }
  return out.str();
}

std::string design_matrix_provenance_json(const DesignMatrix& m) {
  ordered_json doc;
  doc["artifact"] = "design_matrix";
  doc["salfeat_version"] = kVersion;
  doc["mode"] = m.mode == ManifestMode::Subject ? "subject" : "task";
  doc["seed"] = m.provenance.seed;
  doc["config_hash"] = m.provenance.config_hash;
  doc["registry_hash"] = m.provenance.registry_hash;
  doc["metric_config"] = m.provenance.metric_config;
  doc["metric_hash"] = m.provenance.metric_hash;
  doc["class_names"] = m.class_names;
  doc["positive_class"] = m.class_names.at(m.positive_class);
  doc["models"] = m.layout.model_ids;
  std::vector<std::string> metrics;
  for (MetricId id : m.layout.metrics) metrics.push_back(to_string(id));
  doc["metrics"] = metrics;
  doc["degenerate_count"] = m.provenance.degenerate_count;
  doc["skipped_trials"] = m.provenance.skipped_trials;
  doc["excluded"] = m.provenance.excluded;
  doc["pool"] = {{"kind", m.pool.kind == PoolScope::Kind::OwnSubject ? "own_subject" : "all_subjects"},
                 {"subjects", m.pool.subjects},
                 {"images", m.pool.images}};
  std::string pool_text;
  for (const auto& s : m.pool.subjects) pool_text += s + "\n";
  pool_text += "--\n";
  for (const auto& s : m.pool.images) pool_text += s + "\n";
  doc["pool_hash"] = sha256_hex(pool_text);
  doc["rows"] = ordered_json::array();
  for (const auto& r : m.rows) doc["rows"].push_back({{"sample_id", r.sample_id}, {"subjects", r.subjects}, {"images", r.images}});
  return doc.dump(2) + "\n";
}

std::filesystem::path provenance_path(const std::filesystem::path& artifact) {
  auto p = artifact;
  p += ".provenance.json";
  return p;
}

void save_design_matrix(const DesignMatrix& m, const std::filesystem::path& csv_path) {
  write_file_atomic(csv_path, design_matrix_csv(m));
  write_file_atomic(provenance_path(csv_path), design_matrix_provenance_json(m));
}

DesignMatrix load_design_matrix(const std::filesystem::path& csv_path) {
  const std::string csv = read_file(csv_path);
  const auto side = provenance_path(csv_path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(side));
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::Format, "bad provenance sidecar " + side.string() + ": " + e.what());
  }
  DesignMatrix m;
  try {
    m.mode = doc.at("mode").get<std::string>() == "subject" ? ManifestMode::Subject : ManifestMode::Task;
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    const auto positive = doc.at("positive_class").get<std::string>();
    m.positive_class = static_cast<int>(std::find(m.class_names.begin(), m.class_names.end(), positive) - m.class_names.begin());
    m.layout.model_ids = doc.at("models").get<std::vector<std::string>>();
    for (const auto& name : doc.at("metrics").get<std::vector<std::string>>()) {
      auto id = parse_metric(name);
      if (!id) throw Error(ErrorKind::Format, "unknown metric '" + name + "' in sidecar");
      m.layout.metrics.push_back(*id);
    }
    m.provenance.seed = doc.at("seed").get<std::uint64_t>();
    m.provenance.config_hash = doc.value("config_hash", "");
    m.provenance.registry_hash = doc.at("registry_hash").get<std::string>();
    m.provenance.metric_config = doc.at("metric_config").get<std::string>();
    m.provenance.metric_hash = doc.at("metric_hash").get<std::string>();
    m.provenance.degenerate_count = doc.at("degenerate_count").get<std::size_t>();
    m.provenance.skipped_trials = doc.at("skipped_trials").get<std::size_t>();
    m.provenance.excluded = doc.at("excluded").get<std::vector<std::string>>();
    const auto& pool = doc.at("pool");
    m.pool.kind = pool.at("kind").get<std::string>() == "own_subject" ? PoolScope::Kind::OwnSubject
                                                                       : PoolScope::Kind::AllSubjects;
    m.pool.subjects = pool.at("subjects").get<std::vector<std::string>>();
    m.pool.images = pool.at("images").get<std::vector<std::string>>();
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> sources;
    for (const auto& r : doc.at("rows"))
      sources[r.at("sample_id").get<std::string>()] = {r.at("subjects").get<std::vector<std::string>>(),
                                                       r.at("images").get<std::vector<std::string>>()};

    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    const auto header = split_fields(trim_eol(line), ',');
    const auto expected = m.layout.column_names();
    if (header.size() != expected.size() + 2 || header[0] != "sample_id" || header[1] != "label")
      throw Error(ErrorKind::Format, "feature CSV header does not match its sidecar");
    for (std::size_t k = 0; k < expected.size(); ++k)
      if (header[k + 2] != expected[k]) throw Error(ErrorKind::Format, "feature CSV column '" + std::string(header[k + 2]) + "' does not match its sidecar");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      const auto row = trim_eol(line);
      if (row.empty()) continue;
      const auto fields = split_fields(row, ',');
      if (fields.size() != header.size()) throw ParseError(line_no, "wrong number of fields");
      LabeledSample s;
      s.sample_id = std::string(fields[0]);
      const int label = static_cast<int>(std::find(m.class_names.begin(), m.class_names.end(), fields[1]) - m.class_names.begin());
      if (label >= static_cast<int>(m.class_names.size())) throw ParseError(line_no, "unknown label '" + std::string(fields[1]) + "'");
      s.label = label;
      for (std::size_t k = 2; k < fields.size(); ++k) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(fields[k].data(), fields[k].data() + fields[k].size(), v);
        if (ec != std::errc() || ptr != fields[k].data() + fields[k].size() || !std::isfinite(v))
          throw ParseError(line_no, "non-numeric feature '" + std::string(fields[k]) + "'");
        s.features.push_back(v);
      }
      if (auto it = sources.find(s.sample_id); it != sources.end()) {
        s.subjects = it->second.first;
        s.images = it->second.second;
      }
      m.rows.push_back(std::move(s));
    }
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::Format, "bad provenance sidecar " + side.string() + ": " + e.what());
  }
  return m;
}

}  // namespace salfeat

#include "salfeat/run.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "salfeat/error.hpp"
#include "salfeat/parallel.hpp"
#include "salfeat/random.hpp"
#include "salfeat/text.hpp"
#include "salfeat/version.hpp"

namespace salfeat {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ------------------------------------------------------------- config file

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Configuration, what); }

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) config_error(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    config_error("bad value for " + where);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void parse_svm(const YAML::Node& n, SvmConfig& svm) {
  check_keys(n, "learner.svm", {"C", "degree", "gamma", "coef0", "tolerance", "balanced", "max_iterations"});
  if (n["C"]) svm.C = scalar<double>(n["C"], "learner.svm.C");
  if (n["degree"]) svm.degree = scalar<int>(n["degree"], "learner.svm.degree");
  if (n["gamma"]) svm.gamma = scalar<double>(n["gamma"], "learner.svm.gamma");
  if (n["coef0"]) svm.coef0 = scalar<double>(n["coef0"], "learner.svm.coef0");
  if (n["tolerance"]) svm.tolerance = scalar<double>(n["tolerance"], "learner.svm.tolerance");
  if (n["balanced"]) svm.balanced = scalar<bool>(n["balanced"], "learner.svm.balanced");
  if (n["max_iterations"]) svm.max_iterations = scalar<long>(n["max_iterations"], "learner.svm.max_iterations");
  svm.validate();
}

void parse_gbt(const YAML::Node& n, GbtConfig& gbt) {
  check_keys(n, "learner.gbt", {"n_estimators", "max_depth", "learning_rate", "lambda"});
  if (n["n_estimators"]) gbt.n_estimators = scalar<int>(n["n_estimators"], "learner.gbt.n_estimators");
  if (n["max_depth"]) gbt.max_depth = scalar<int>(n["max_depth"], "learner.gbt.max_depth");
  if (n["learning_rate"]) gbt.learning_rate = scalar<double>(n["learning_rate"], "learner.gbt.learning_rate");
  if (n["lambda"]) gbt.lambda = scalar<double>(n["lambda"], "learner.gbt.lambda");
  gbt.validate();
}

void parse_synth(const YAML::Node& n, SynthConfig& s) {
  check_keys(n, "synth", {"n_images", "width", "height", "subjects_per_class", "fixations_per_trial", "classes", "task_variant"});
  if (n["n_images"]) s.n_images = scalar<int>(n["n_images"], "synth.n_images");
  if (n["width"]) s.width = scalar<int>(n["width"], "synth.width");
  if (n["height"]) s.height = scalar<int>(n["height"], "synth.height");
  if (n["subjects_per_class"]) s.subjects_per_class = scalar<int>(n["subjects_per_class"], "synth.subjects_per_class");
  if (n["fixations_per_trial"]) s.fixations_per_trial = scalar<int>(n["fixations_per_trial"], "synth.fixations_per_trial");
  if (n["task_variant"]) s.task_variant = scalar<bool>(n["task_variant"], "synth.task_variant");
  if (const auto classes = n["classes"]) {
    if (!classes.IsSequence()) config_error("synth.classes must be a list");
    s.classes.clear();
    for (const auto& c : classes) {
      check_keys(c, "synth.classes entry", {"name", "behavior", "lambda"});
      ClassBehavior b;
      if (!c["name"] || !c["behavior"]) config_error("synth.classes entries need name and behavior");
      b.name = scalar<std::string>(c["name"], "synth.classes.name");
      const auto behavior = scalar<std::string>(c["behavior"], "synth.classes.behavior");
      const auto kind = parse_behavior(behavior);
      if (!kind) config_error("unknown behavior '" + behavior + "' (saliency_follower, center_biased, uniform)");
      b.kind = *kind;
      if (c["lambda"]) b.lambda = scalar<double>(c["lambda"], "synth.classes.lambda");
      s.classes.push_back(b);
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    config_error(std::string("cannot parse run configuration: ") + e.what());
  }
  RunConfig c;
  if (root.IsNull()) return c;
  check_keys(root, "run configuration",
             {"seed", "manifest", "fixations", "output_dir", "cache_dir", "jobs", "models", "metrics", "learner",
              "protocol", "synth", "ablation"});
  if (root["seed"]) c.seed = scalar<std::uint64_t>(root["seed"], "seed");
  if (root["manifest"]) c.manifest = resolve(base, scalar<std::string>(root["manifest"], "manifest"));
  if (root["fixations"]) c.fixations = resolve(base, scalar<std::string>(root["fixations"], "fixations"));
  if (root["output_dir"]) c.output_dir = resolve(base, scalar<std::string>(root["output_dir"], "output_dir"));
  else c.output_dir = resolve(base, "out");
  if (root["cache_dir"]) c.cache_dir = resolve(base, scalar<std::string>(root["cache_dir"], "cache_dir"));
  if (root["jobs"]) c.jobs = scalar<int>(root["jobs"], "jobs");
  if (c.jobs < 1) config_error("jobs must be at least 1");

  if (const auto models = root["models"]) {
    if (!models.IsSequence() || models.size() == 0) config_error("models must be a non-empty list");
    for (const auto& m : models) {
      ModelSpec spec;
      if (m.IsScalar()) {
        spec.id = m.as<std::string>();
      } else {
        check_keys(m, "models entry", {"id", "kind", "params"});
        if (!m["id"]) config_error("models entries need an id");
        spec.id = scalar<std::string>(m["id"], "models.id");
        if (m["kind"]) spec.kind = scalar<std::string>(m["kind"], "models.kind");
        if (const auto params = m["params"]) {
          if (!params.IsMap()) config_error("params of model '" + spec.id + "' must be a mapping");
          for (const auto& kv : params)
            spec.params[kv.first.as<std::string>()] = scalar<double>(kv.second, "models." + spec.id + ".params");
        }
      }
      c.models.push_back(spec);
    }
  }
  if (const auto metrics = root["metrics"]) {
    check_keys(metrics, "metrics", {"enabled", "n_splits"});
    if (const auto enabled = metrics["enabled"]) {
      if (!enabled.IsSequence() || enabled.size() == 0) config_error("metrics.enabled must be a non-empty list");
      c.metrics.enabled.clear();
      for (const auto& e : enabled) {
        const auto name = scalar<std::string>(e, "metrics.enabled");
        const auto id = parse_metric(name);
        if (!id) config_error("unknown metric '" + name + "'");
        c.metrics.enabled.push_back(*id);
      }
    }
    if (metrics["n_splits"]) c.metrics.n_splits = scalar<int>(metrics["n_splits"], "metrics.n_splits");
    if (c.metrics.n_splits < 1) config_error("metrics.n_splits must be at least 1");
  }
  if (const auto learner = root["learner"]) {
    check_keys(learner, "learner", {"kind", "svm", "gbt"});
    if (learner["kind"]) {
      const auto name = scalar<std::string>(learner["kind"], "learner.kind");
      const auto kind = parse_learner(name);
      if (!kind) config_error("unknown learner '" + name + "' (svm, gbt)");
      c.learner.kind = *kind;
    }
    if (learner["svm"]) parse_svm(learner["svm"], c.learner.svm);
    if (learner["gbt"]) parse_gbt(learner["gbt"], c.learner.gbt);
  }
  if (root["protocol"]) {
    const auto name = scalar<std::string>(root["protocol"], "protocol");
    c.protocol = parse_protocol(name);
    if (!c.protocol)
      config_error("unknown protocol '" + name +
                   "' (leave_one_subject_out, leave_one_image_out, kfold10, half_images, half_subjects)");
  }
  if (root["synth"]) parse_synth(root["synth"], c.synth);
  if (const auto ablation = root["ablation"]) {
    check_keys(ablation, "ablation", {"sizes", "repeats"});
    if (const auto sizes = ablation["sizes"]) {
      if (!sizes.IsSequence()) config_error("ablation.sizes must be a list");
      for (const auto& s : sizes) c.ablation_sizes.push_back(scalar<std::size_t>(s, "ablation.sizes"));
    }
    if (ablation["repeats"]) c.ablation_repeats = scalar<std::size_t>(ablation["repeats"], "ablation.repeats");
  }
  c.registry();  // validates model kinds and parameters
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    config_error("cannot read run configuration: " + path.string());
  }
  return parse_run_config(text, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) config_error("a seed is required (set `seed:` in the configuration or pass --seed)");
  return *seed;
}

ModelRegistry RunConfig::registry() const {
  if (models.empty()) return ModelRegistry::defaults();
  ModelRegistry r;
  for (const auto& m : models) r.add(m.id, m.kind, m.params);
  return r;
}

fs::path RunConfig::cache() const { return cache_dir ? *cache_dir : output_dir / "cache"; }

fs::path RunConfig::fixations_path() const {
  if (fixations) return *fixations;
  if (!manifest) config_error("the configuration names no manifest");
  return manifest->parent_path() / "fixations.csv";
}

std::string RunConfig::canonical() const {
  ordered_json j;
  j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  const auto reg = registry();
  j["models"] = ordered_json::array();
  for (std::size_t i = 0; i < reg.size(); ++i) j["models"].push_back(reg.specs()[i].id + "=" + reg.describe(i));
  j["metrics"] = metrics.describe();
  j["learner"] = ordered_json::parse(learner.describe());
  j["protocol"] = protocol ? ordered_json(to_string(*protocol)) : ordered_json(nullptr);
  j["ablation"] = {{"sizes", ablation_sizes}, {"repeats", ablation_repeats}};
  return j.dump();
}

// ---------------------------------------------------------------- helpers

namespace {

void info(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log) ctx.log(LogLevel::Info, msg);
}
void warn(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log) ctx.log(LogLevel::Warning, msg);
}

ordered_json base_provenance(const CommandContext& ctx, const std::string& artifact) {
  ordered_json j;
  j["artifact"] = artifact;
  j["salfeat_version"] = kVersion;
  j["seed"] = ctx.config.seed ? ordered_json(*ctx.config.seed) : ordered_json(nullptr);
  j["config_hash"] = sha256_hex(ctx.config.canonical());
  return j;
}

void write_with_provenance(const fs::path& path, const std::string& content, const ordered_json& provenance) {
  write_file_atomic(path, content);
  write_file_atomic(provenance_path(path), provenance.dump(2) + "\n");
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<FixationRecord> records;
  std::string manifest_sha;
  std::string fixations_sha;
};

DatasetManifest load_run_manifest(const RunConfig& c) {
  if (!c.manifest) config_error("the configuration names no manifest");
  if (!fs::exists(*c.manifest)) config_error("manifest not found: " + c.manifest->string());
  return load_manifest(*c.manifest);
}

Dataset load_dataset(const RunConfig& c) {
  Dataset d;
  d.manifest = load_run_manifest(c);
  d.manifest_sha = sha256_hex(read_file(*c.manifest));
  const auto fix = c.fixations_path();
  if (!fs::exists(fix)) throw Error(ErrorKind::Io, "fixation table not found: " + fix.string());
  const std::string text = read_file(fix);
  d.fixations_sha = sha256_hex(text);
  std::istringstream in(text);
  try {
    d.records = parse_fixation_table(in);
  } catch (const Error& e) {
    throw Error(e.kind(), fix.string() + ": " + e.what());
  }
  check_records_resolve(d.manifest, d.records);
  return d;
}

// Loads every bank from the cache, computing missing entries.
std::map<std::string, SaliencyBank> load_banks(const CommandContext& ctx, const DatasetManifest& manifest,
                                               SaliencySummary* summary) {
  const RunConfig& c = ctx.config;
  const ModelRegistry registry = c.registry();
  const fs::path cache = c.cache();
  std::vector<std::optional<SaliencyBank>> banks(manifest.images.size());
  std::vector<std::string> errors(manifest.images.size());
  std::mutex lock;
  SaliencySummary local;

  parallel_for(manifest.images.size(), c.jobs, [&](std::size_t i) {
    const ImageEntry& entry = manifest.images[i];
    try {
      const std::string bytes = read_file(entry.path);
      const std::string sha = sha256_hex(bytes);
      std::optional<ImageBuffer> image;
      SaliencyBank bank;
      bank.image_id = entry.id;
      std::size_t computed = 0, cached = 0;
      for (std::size_t k = 0; k < registry.size(); ++k) {
        const fs::path file = cache_entry(cache, sha, registry, k);
        SaliencyMap map;
        map.model_id = registry.specs()[k].id;
        if (fs::exists(file)) {
          map.grid = read_smf1(file);
          ++cached;
        } else {
          if (!image) {
            image = load_image(entry.path);
            if (image->width != entry.width || image->height != entry.height)
              throw Error(ErrorKind::Validation, "image is " + std::to_string(image->width) + "x" + std::to_string(image->height) +
                                                     ", the manifest says " + std::to_string(entry.width) + "x" +
                                                     std::to_string(entry.height));
          }
          SaliencyMap fresh = compute_model(registry, k, *image);
          const std::string encoded = encode_smf1(fresh.grid);
          map.grid = decode_smf1(encoded);  // identical to what a cache hit returns
          write_file_atomic(file, encoded);
          ordered_json prov;
          prov["artifact"] = "saliency_map";
          prov["salfeat_version"] = kVersion;
          prov["image_sha256"] = sha;
          prov["model_id"] = map.model_id;
          prov["model"] = registry.describe(k);
          prov["degenerate"] = fresh.degenerate;
          write_file_atomic(provenance_path(file), prov.dump(2) + "\n");
          ++computed;
        }
        bank.maps.push_back(std::move(map));
      }
      banks[i] = std::move(bank);
      std::lock_guard guard(lock);
      local.computed += computed;
      local.cached += cached;
    } catch (const Error& e) {
      errors[i] = e.what();
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::map<std::string, SaliencyBank> out;
  for (std::size_t i = 0; i < banks.size(); ++i) {
    if (banks[i]) {
      out.emplace(manifest.images[i].id, std::move(*banks[i]));
    } else {
      local.failed.push_back(manifest.images[i].id);
      if (ctx.log) ctx.log(LogLevel::Error, "image '" + manifest.images[i].id + "': " + errors[i]);
    }
  }
  if (summary) *summary = local;
  if (!local.failed.empty()) {
    std::string ids;
    for (const auto& id : local.failed) ids += " " + id;
    throw Error(ErrorKind::Io, std::to_string(local.failed.size()) + " image(s) failed:" + ids);
  }
  return out;
}

BuildOptions build_options(const RunConfig& c, const ModelRegistry& registry) {
  BuildOptions o;
  o.metrics = c.metrics;
  o.seed = derive_seed(c.require_seed(), "features");
  o.registry_hash = registry.hash();
  o.jobs = c.jobs;
  return o;
}

Protocol protocol_for(const RunConfig& c, ManifestMode mode) {
  if (c.protocol) return *c.protocol;
  return mode == ManifestMode::Subject ? Protocol::LeaveOneSubjectOut : Protocol::LeaveOneImageOut;
}

struct LoadedFeatures {
  DesignMatrix matrix;
  Dataset data;
};

LoadedFeatures load_features(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const std::uint64_t seed = c.require_seed();
  const fs::path path = c.output_dir / kFeaturesFile;
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "features file not found: " + path.string() + " (run `features` first)");
  if (!fs::exists(provenance_path(path)))
    throw Error(ErrorKind::Io, "provenance sidecar not found: " + provenance_path(path).string());
  LoadedFeatures out;
  out.matrix = load_design_matrix(path);
  out.data = load_dataset(c);
  const auto registry = c.registry();
  const auto& p = out.matrix.provenance;
  if (p.seed != derive_seed(seed, "features") || p.registry_hash != registry.hash() ||
      p.metric_hash != sha256_hex(c.metrics.describe()))
    config_error("features in " + path.string() + " were built with a different seed, model registry or metric configuration; rerun `features`");
  return out;
}

std::uint64_t learner_seed(const RunConfig& c) { return derive_seed(c.require_seed(), "learners"); }

// Rebuilds features per split for task-mode protocols; banks load on first use.
struct Materializer {
  const CommandContext& ctx;
  const Dataset& data;
  std::once_flag once;
  std::map<std::string, SaliencyBank> banks;

  DesignMatrix operator()(const BuildRestriction& r) {
    std::call_once(once, [&] { banks = load_banks(ctx, data.manifest, nullptr); });
    BuildOptions o = build_options(ctx.config, ctx.config.registry());
    o.jobs = 1;
    o.row_images = r.row_images;
    o.row_subjects = r.row_subjects;
    o.pool_images = r.pool_images;
    o.pool_subjects = r.pool_subjects;
    return build_design_matrix(data.manifest, data.records, banks, o);
  }
};

}  // namespace

fs::path cache_entry(const fs::path& cache_dir, const std::string& sha, const ModelRegistry& registry, std::size_t k) {
  const std::string params = sha256_hex(registry.describe(k)).substr(0, 16);
  return cache_dir / sha.substr(0, 2) / (sha + "_" + registry.specs()[k].id + "_" + params + ".smf1");
}

// ---------------------------------------------------------------- commands

void cmd_synth(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  SynthConfig s = c.synth;
  s.seed = c.require_seed();
  s.validate();
  const auto ds = generate_dataset(s, c.output_dir);
  ordered_json prov = base_provenance(ctx, "synthetic_dataset");
  ordered_json classes = ordered_json::array();
  for (const auto& cl : s.classes)
    classes.push_back({{"name", cl.name}, {"behavior", to_string(cl.kind)}, {"lambda", cl.lambda}});
  prov["synth"] = {{"n_images", s.n_images},
                   {"width", s.width},
                   {"height", s.height},
                   {"subjects_per_class", s.subjects_per_class},
                   {"fixations_per_trial", s.fixations_per_trial},
                   {"classes", classes},
                   {"task_variant", s.task_variant}};
  write_file_atomic(c.output_dir / "synth.provenance.json", prov.dump(2) + "\n");
  info(ctx, "wrote " + std::to_string(ds.images.size()) + " images, " + std::to_string(ds.manifest.subjects.size()) +
                " subjects and " + std::to_string(ds.records.size()) + " fixations to " + c.output_dir.string());
}

SaliencySummary cmd_saliency(const CommandContext& ctx) {
  const auto manifest = load_run_manifest(ctx.config);
  SaliencySummary summary;
  try {
    load_banks(ctx, manifest, &summary);
  } catch (const Error&) {
    info(ctx, "saliency maps: " + std::to_string(summary.computed) + " computed, " + std::to_string(summary.cached) +
                  " cached, " + std::to_string(summary.failed.size()) + " image(s) failed");
    throw;
  }
  info(ctx, "saliency maps: " + std::to_string(summary.computed) + " computed, " + std::to_string(summary.cached) + " cached");
  return summary;
}

DesignMatrix cmd_features(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  c.require_seed();
  const Dataset data = load_dataset(c);
  const auto banks = load_banks(ctx, data.manifest, nullptr);
  const auto registry = c.registry();
  DesignMatrix m = build_design_matrix(data.manifest, data.records, banks, build_options(c, registry));
  m.provenance.config_hash = sha256_hex(c.canonical());
  const fs::path path = c.output_dir / kFeaturesFile;
  write_file_atomic(path, design_matrix_csv(m));
  auto prov = ordered_json::parse(design_matrix_provenance_json(m));
  prov["manifest_sha256"] = data.manifest_sha;
  prov["fixations_sha256"] = data.fixations_sha;
  write_file_atomic(provenance_path(path), prov.dump(2) + "\n");
  if (m.provenance.skipped_trials > 0)
    warn(ctx, std::to_string(m.provenance.skipped_trials) + " trial(s) without in-bounds fixations were skipped");
  for (const auto& e : m.provenance.excluded) warn(ctx, "sample '" + e + "' has no usable fixations and was excluded");
  if (m.provenance.degenerate_count > 0)
    warn(ctx, std::to_string(m.provenance.degenerate_count) + " metric value(s) used the constant-map fallback");
  info(ctx, "features: " + std::to_string(m.rows.size()) + " rows x " + std::to_string(m.layout.size()) + " columns -> " +
                path.string());
  return m;
}

namespace {

CvReport run_crossval(const CommandContext& ctx, const LoadedFeatures& lf, const CvOptions& base) {
  Materializer mat{ctx, lf.data, {}, {}};
  FoldMaterializer fn = [&](const BuildRestriction& r) { return mat(r); };
  CvOptions o = base;
  o.jobs = ctx.config.jobs;
  if (lf.matrix.mode == ManifestMode::Task) o.materializer = &fn;
  return cross_validate(lf.matrix, protocol_for(ctx.config, lf.matrix.mode), ctx.config.learner, learner_seed(ctx.config), o);
}

}  // namespace

CvReport cmd_crossval(const CommandContext& ctx) {
  const LoadedFeatures lf = load_features(ctx);
  const CvReport report = run_crossval(ctx, lf, {});
  const fs::path dir = ctx.config.output_dir;
  auto prov = base_provenance(ctx, "cv_report");
  prov["features_sha256"] = sha256_hex(read_file(dir / kFeaturesFile));
  write_with_provenance(dir / kCvReportFile, cv_report_json(report), prov);
  const std::string table = cv_report_table(report);
  prov["artifact"] = "cv_table";
  write_with_provenance(dir / kCvTableFile, table, prov);
  for (const auto& f : report.folds)
    if (f.skipped) warn(ctx, "fold " + std::to_string(f.index) + " skipped: " + f.reason);
  info(ctx, table);
  return report;
}

std::vector<AblationRow> cmd_ablate(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const LoadedFeatures lf = load_features(ctx);
  AblationOptions o;
  o.repeats = c.ablation_repeats;
  o.sizes = c.ablation_sizes;
  if (o.sizes.empty())
    for (std::size_t s = 1; s <= lf.matrix.layout.model_ids.size(); ++s) o.sizes.push_back(s);
  Materializer mat{ctx, lf.data, {}, {}};
  FoldMaterializer fn = [&](const BuildRestriction& r) { return mat(r); };
  o.cv.jobs = c.jobs;
  if (lf.matrix.mode == ManifestMode::Task) o.cv.materializer = &fn;
  const auto rows = ablation_sweep(lf.matrix, protocol_for(c, lf.matrix.mode), c.learner, learner_seed(c), o);
  auto prov = base_provenance(ctx, "ablation");
  prov["protocol"] = to_string(protocol_for(c, lf.matrix.mode));
  prov["features_sha256"] = sha256_hex(read_file(c.output_dir / kFeaturesFile));
  const std::string csv = ablation_csv(rows);
  write_with_provenance(c.output_dir / kAblationFile, csv, prov);
  std::ostringstream table;
  table << "size  runs  mean accuracy   std\n";
  for (const auto& r : rows) {
    char line[96];
    std::snprintf(line, sizeof line, "%4zu  %4zu  %13.2f  %5.2f\n", r.size, r.accuracies.size(), r.mean, r.stdev);
    table << line;
  }
  info(ctx, table.str());
  return rows;
}

std::string cmd_report(const CommandContext& ctx) {
  const fs::path dir = ctx.config.output_dir;
  const fs::path cv = dir / kCvReportFile;
  if (!fs::exists(cv)) throw Error(ErrorKind::Io, "cross-validation report not found: " + cv.string() + " (run `crossval` first)");
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(cv));
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::Format, "bad report " + cv.string() + ": " + e.what());
  }
  std::ostringstream out;
  auto cell = [](const ordered_json& v, double factor) {
    if (v.is_null()) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v.get<double>() * factor);
    return std::string(buf);
  };
  try {
    const auto& p = doc.at("pooled");
    out << "# Classification report\n\n";
    out << "- protocol: " << doc.at("protocol").get<std::string>() << "\n";
    out << "- learner: " << doc.at("learner").at("kind").get<std::string>() << "\n";
    out << "- models: " << doc.at("models").size() << "\n";
    out << "- positive class: " << doc.at("positive_class").get<std::string>() << "\n";
    out << "- folds: " << doc.at("folds").size() << " (" << doc.at("skipped_folds").get<std::size_t>() << " skipped)\n\n";
    out << "| Accuracy | Sensitivity | Specificity | AUC |\n|---:|---:|---:|---:|\n";
    out << "| " << cell(p.at("accuracy"), 1) << " | " << cell(p.at("sensitivity"), 1) << " | "
        << cell(p.at("specificity"), 1) << " | " << cell(p.at("auc"), 100) << " |\n";
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorKind::Format, "bad report " + cv.string() + ": " + e.what());
  }
  const fs::path ab = dir / kAblationFile;
  if (fs::exists(ab)) {
    out << "\n## Model-count ablation\n\n| Models | Runs | Mean accuracy | Std |\n|---:|---:|---:|---:|\n";
    std::istringstream in(read_file(ab));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_fields(trim_eol(line), ',');
      if (f.size() < 4) continue;
      char buf[128];
      std::snprintf(buf, sizeof buf, "| %s | %s | %.2f | %.2f |\n", std::string(f[0]).c_str(), std::string(f[1]).c_str(),
                    std::stod(std::string(f[2])), std::stod(std::string(f[3])));
      out << buf;
    }
  }
  const std::string text = out.str();
  auto prov = base_provenance(ctx, "report");
  prov["cv_report_sha256"] = sha256_hex(read_file(cv));
  write_with_provenance(dir / kReportFile, text, prov);
  info(ctx, text);
  return text;
}

}  // namespace salfeat

#include "salfeat/salfeat.h"

#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "salfeat/error.hpp"
#include "salfeat/features.hpp"
#include "salfeat/metrics.hpp"
#include "salfeat/run.hpp"
#include "salfeat/saliency.hpp"
#include "salfeat/version.hpp"

struct sf_run {
  salfeat::CommandContext ctx;
  sf_log_fn log_fn = nullptr;
  void* log_user = nullptr;
};

struct sf_image {
  salfeat::ImageBuffer image;
};

struct sf_map {
  salfeat::Grid grid;
};

struct sf_fixmap {
  salfeat::FixationMap map{1, 1};
};

namespace {

thread_local std::string last_error;
thread_local std::string last_kind;

sf_status fail(sf_status status, std::string kind, std::string message) {
  last_kind = std::move(kind);
  last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
sf_status guarded(Fn&& fn) {
  last_error.clear();
  last_kind.clear();
  try {
    fn();
    return SF_OK;
  } catch (const salfeat::Error& e) {
    return fail(e.is_configuration_error() ? SF_ERR_CONFIG : SF_ERR_DATA, salfeat::to_string(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SF_ERR_INTERNAL, "internal", "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SF_ERR_DATA, "io", e.what());
  } catch (const std::exception& e) {
    return fail(SF_ERR_INTERNAL, "internal", e.what());
  }
}

sf_status null_argument(const char* what) { return fail(SF_ERR_ARGUMENT, "argument", std::string(what) + " is null"); }

void attach_log(sf_run* run) {
  run->ctx.log = [run](salfeat::LogLevel level, const std::string& msg) {
    if (run->log_fn) run->log_fn(static_cast<sf_log_level>(level), msg.c_str(), run->log_user);
  };
}

}  // namespace

extern "C" {

const char* sf_version(void) { return salfeat::kVersion; }
const char* sf_last_error(void) { return last_error.c_str(); }
const char* sf_last_error_kind(void) { return last_kind.c_str(); }

sf_status sf_run_open(const char* config_path, sf_run** out) {
  if (!config_path) return null_argument("config_path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<sf_run>();
    run->ctx.config = salfeat::load_run_config(config_path);
    attach_log(run.get());
    *out = run.release();
  });
}

sf_status sf_run_open_text(const char* yaml_text, const char* base_dir, sf_run** out) {
  if (!yaml_text) return null_argument("yaml_text");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<sf_run>();
    run->ctx.config = salfeat::parse_run_config(yaml_text, base_dir ? base_dir : ".");
    attach_log(run.get());
    *out = run.release();
  });
}

void sf_run_close(sf_run* run) { delete run; }

sf_status sf_run_set_seed(sf_run* run, uint64_t seed) {
  if (!run) return null_argument("run");
  run->ctx.config.seed = seed;
  return SF_OK;
}

sf_status sf_run_set_jobs(sf_run* run, int jobs) {
  if (!run) return null_argument("run");
  if (jobs < 1) return fail(SF_ERR_CONFIG, "configuration", "jobs must be at least 1");
  run->ctx.config.jobs = jobs;
  return SF_OK;
}

sf_status sf_run_set_output_dir(sf_run* run, const char* path) {
  if (!run) return null_argument("run");
  if (!path) return null_argument("path");
  run->ctx.config.output_dir = path;
  return SF_OK;
}

sf_status sf_run_set_log(sf_run* run, sf_log_fn fn, void* user) {
  if (!run) return null_argument("run");
  run->log_fn = fn;
  run->log_user = user;
  return SF_OK;
}

#define SF_COMMAND(name)                                               \
  sf_status sf_cmd_##name(sf_run* run) {                               \
    if (!run) return null_argument("run");                             \
    return guarded([&] { (void)salfeat::cmd_##name(run->ctx); });     \
  }

sf_status sf_cmd_synth(sf_run* run) {
  if (!run) return null_argument("run");
  return guarded([&] { salfeat::cmd_synth(run->ctx); });
}
SF_COMMAND(saliency)
SF_COMMAND(features)
SF_COMMAND(crossval)
SF_COMMAND(ablate)
SF_COMMAND(report)

#undef SF_COMMAND

sf_status sf_image_load(const char* path, sf_image** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new sf_image{salfeat::load_image(path)}; });
}

void sf_image_free(sf_image* image) { delete image; }

sf_status sf_image_size(const sf_image* image, int* width, int* height, int* channels) {
  if (!image) return null_argument("image");
  if (width) *width = image->image.width;
  if (height) *height = image->image.height;
  if (channels) *channels = image->image.channels;
  return SF_OK;
}

sf_status sf_saliency_compute(const sf_image* image, const char* kind, sf_map** out, int* degenerate) {
  if (!image) return null_argument("image");
  if (!kind) return null_argument("kind");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    salfeat::ModelRegistry registry;
    registry.add(kind);
    const auto map = salfeat::compute_model(registry, 0, image->image);
    if (degenerate) *degenerate = map.degenerate ? 1 : 0;
    *out = new sf_map{map.grid};
  });
}

sf_status sf_map_create(int width, int height, const double* values, sf_map** out) {
  if (!values) return null_argument("values");
  if (!out) return null_argument("out");
  *out = nullptr;
  if (width < 1 || height < 1) return fail(SF_ERR_ARGUMENT, "argument", "map dimensions must be positive");
  return guarded([&] {
    salfeat::Grid g(width, height);
    g.values.assign(values, values + g.size());
    *out = new sf_map{std::move(g)};
  });
}

void sf_map_free(sf_map* map) { delete map; }

sf_status sf_map_size(const sf_map* map, int* width, int* height) {
  if (!map) return null_argument("map");
  if (width) *width = map->grid.width;
  if (height) *height = map->grid.height;
  return SF_OK;
}

sf_status sf_map_values(const sf_map* map, double* out, size_t n) {
  if (!map) return null_argument("map");
  if (!out) return null_argument("out");
  if (n < map->grid.size()) return fail(SF_ERR_ARGUMENT, "argument", "output buffer is too small");
  std::copy(map->grid.values.begin(), map->grid.values.end(), out);
  return SF_OK;
}

sf_status sf_map_read_smf1(const char* path, sf_map** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new sf_map{salfeat::read_smf1(path)}; });
}

sf_status sf_map_write_smf1(const sf_map* map, const char* path) {
  if (!map) return null_argument("map");
  if (!path) return null_argument("path");
  return guarded([&] { salfeat::write_smf1(map->grid, path); });
}

sf_status sf_fixmap_create(int width, int height, const int* xy, size_t n, sf_fixmap** out) {
  if (!out) return null_argument("out");
  *out = nullptr;
  if (n > 0 && !xy) return null_argument("xy");
  return guarded([&] {
    std::vector<salfeat::FixationRecord> records;
    for (size_t i = 0; i < n; ++i)
      records.push_back({"", "", static_cast<long>(i), xy[2 * i] + 0.5, xy[2 * i + 1] + 0.5, std::nullopt});
    *out = new sf_fixmap{salfeat::build_fixation_map(records, width, height)};
  });
}

void sf_fixmap_free(sf_fixmap* map) { delete map; }

sf_status sf_fixmap_count(const sf_fixmap* map, size_t* hits) {
  if (!map) return null_argument("map");
  if (!hits) return null_argument("hits");
  *hits = map->map.hits().size();
  return SF_OK;
}

const char* sf_metric_name(int i) {
  if (i < 0 || i >= SF_METRIC_COUNT) return nullptr;
  return salfeat::to_string(salfeat::kAllMetrics[static_cast<std::size_t>(i)]);
}

sf_status sf_evaluate_all(const sf_map* saliency, const sf_fixmap* fixations, double density_sigma,
                          const int* shuffle_xy, size_t n_shuffle, int n_splits, uint64_t seed,
                          double values[SF_METRIC_COUNT], int degenerate[SF_METRIC_COUNT]) {
  if (!saliency) return null_argument("saliency");
  if (!fixations) return null_argument("fixations");
  if (!values) return null_argument("values");
  if (n_shuffle > 0 && !shuffle_xy) return null_argument("shuffle_xy");
  if (n_splits < 1) return fail(SF_ERR_CONFIG, "configuration", "n_splits must be at least 1");
  return guarded([&] {
    using namespace salfeat;
    const FixationMap& fix = fixations->map;
    const double sigma = density_sigma > 0 ? density_sigma : fix.width() / 32.0;
    const DensityMap density = blur_to_density(fix, sigma);
    const DensityMap baseline = center_baseline(fix.width(), fix.height());
    std::vector<Pixel> points;
    for (size_t i = 0; i < n_shuffle; ++i) points.push_back({shuffle_xy[2 * i], shuffle_xy[2 * i + 1]});
    Rng rng(derive_seed(seed, "shuffle"));
    const ShuffleSet shuffle = make_shuffle_set(std::move(points), n_shuffle, rng);

    MetricConfig config;
    config.n_splits = n_splits;
    if (n_shuffle == 0)
      config.enabled.erase(std::remove(config.enabled.begin(), config.enabled.end(), MetricId::Sauc), config.enabled.end());
    EvalInputs in{&saliency->grid, &fix, &density, &shuffle, &baseline};
    const EvalVector ev = evaluate_all(in, config, seed);
    std::size_t k = 0;
    for (int i = 0; i < SF_METRIC_COUNT; ++i) {
      const bool present = k < ev.metric_ids.size() && ev.metric_ids[k] == kAllMetrics[i];
      values[i] = present ? ev.values[k] : 0.5;
      if (degenerate) degenerate[i] = present ? (ev.degenerate[k] ? 1 : 0) : 1;
      if (present) ++k;
    }
  });
}

}  // extern "C"

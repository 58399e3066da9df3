#include "salfeat/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "salfeat/error.hpp"
#include "salfeat/saliency.hpp"
#include "salfeat/text.hpp"

namespace salfeat {

const char* to_string(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::SaliencyFollower: return "saliency_follower";
    case BehaviorKind::CenterBiased: return "center_biased";
    case BehaviorKind::Uniform: return "uniform";
  }
  return "?";
}

std::optional<BehaviorKind> parse_behavior(std::string_view name) {
  for (auto k : {BehaviorKind::SaliencyFollower, BehaviorKind::CenterBiased, BehaviorKind::Uniform})
    if (name == to_string(k)) return k;
  return std::nullopt;
}

void SynthConfig::validate() const {
  std::vector<std::string> problems;
  if (n_images < 1) problems.push_back("n_images must be at least 1");
  if (width < 64 || height < 64) problems.push_back("image size must be at least 64x64");
  if (subjects_per_class < 1) problems.push_back("subjects_per_class must be at least 1");
  if (fixations_per_trial < 1) problems.push_back("fixations_per_trial must be at least 1");
  if (classes.size() < 2) problems.push_back("at least two classes are needed");
  std::set<std::string> names;
  for (const auto& c : classes) {
    if (c.name.empty()) problems.push_back("class names must be non-empty");
    else if (!names.insert(c.name).second) problems.push_back("duplicate class name '" + c.name + "'");
    if (!(c.lambda >= 0.0 && c.lambda <= 1.0))
      problems.push_back("lambda of class '" + c.name + "' must lie in [0, 1], got " + format_real(c.lambda));
  }
  if (!problems.empty()) {
    std::string msg = "invalid synth configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::Configuration, msg);
  }
}

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::array<double, 3> random_color(Rng& rng) {
  // saturated: each channel near one extreme, never all equal
  std::array<double, 3> c;
  do {
    for (double& v : c) v = uniform_index(rng, 2) ? 0.85 + 0.15 * uniform_unit(rng) : 0.15 * uniform_unit(rng);
  } while ((c[0] > 0.5) == (c[1] > 0.5) && (c[1] > 0.5) == (c[2] > 0.5));
  return c;
}

void paint_disc(ImageBuffer& img, double cx, double cy, double r, const std::array<double, 3>& color) {
  for (int y = std::max(0, int(cy - r)); y <= std::min(img.height - 1, int(cy + r) + 1); ++y)
    for (int x = std::max(0, int(cx - r)); x <= std::min(img.width - 1, int(cx + r) + 1); ++x)
      if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
}

void paint_grating(ImageBuffer& img, double cx, double cy, double half, double period, double theta,
                   const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = std::max(0, int(cy - half)); y <= std::min(img.height - 1, int(cy + half)); ++y)
    for (int x = std::max(0, int(cx - half)); x <= std::min(img.width - 1, int(cx + half)); ++x) {
      const double u = (x + 0.5 - cx) * ct + (y + 0.5 - cy) * st;
      const bool stripe = std::sin(2.0 * std::numbers::pi * u / period) >= 0.0;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = stripe ? a[c] : b[c];
    }
}

DensityMap mixture(const DensityMap& behavior, double lambda) {
  Grid g = behavior.grid;
  const double u = 1.0 / static_cast<double>(g.size());
  for (double& v : g.values) v = lambda * v + (1.0 - lambda) * u;
  return density_from_grid(g);
}

}  // namespace

std::vector<SynthImage> generate_images(const SynthConfig& cfg, Rng& rng) {
  const double scale = std::min(cfg.width, cfg.height) / 128.0;
  std::vector<SynthImage> out;
  for (int i = 0; i < cfg.n_images; ++i) {
    ImageBuffer img(cfg.width, cfg.height, 3, 0.5);
    const int shapes = 3 + static_cast<int>(uniform_index(rng, 4));
    for (int s = 0; s < shapes; ++s) {
      const double r = scale * (6.0 + 10.0 * uniform_unit(rng));
      const double cx = r + (cfg.width - 2.0 * r) * uniform_unit(rng);
      const double cy = r + (cfg.height - 2.0 * r) * uniform_unit(rng);
      const auto color = random_color(rng);
      if (uniform_index(rng, 2) == 0) {
        paint_disc(img, cx, cy, r, color);
      } else {
        const double period = scale * (4.0 + 4.0 * uniform_unit(rng));
        const double theta = std::numbers::pi * uniform_unit(rng);
        paint_grating(img, cx, cy, r, period, theta, color, random_color(rng));
      }
    }
    for (double& v : img.values) v = quantize(v);
    char id[32];
    std::snprintf(id, sizeof id, "img%03d", i + 1);
    out.push_back({id, std::move(img)});
  }
  return out;
}

std::vector<Pixel> sample_fixations_from_density(const DensityMap& density, std::size_t n, Rng& rng) {
  const Grid& g = density.grid;
  std::vector<double> cumulative(g.values.size());
  double total = 0.0;
  for (std::size_t k = 0; k < g.values.size(); ++k) {
    total += std::max(0.0, g.values[k]);
    cumulative[k] = total;
  }
  if (!(total > 0)) throw Error(ErrorKind::DegenerateInput, "density has no mass");
  std::vector<Pixel> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform_unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    // skip zero-mass cells that share the cumulative value
    std::size_t k = std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
    while (g.values[k] <= 0.0 && k + 1 < cumulative.size()) ++k;
    out.push_back({static_cast<int>(k % g.width), static_cast<int>(k / g.width)});
  }
  return out;
}

DensityMap behavior_density(BehaviorKind kind, const ImageBuffer& image) {
  switch (kind) {
    case BehaviorKind::SaliencyFollower: {
      const SaliencyMap m = itti_koch(image);
      if (m.degenerate) throw Error(ErrorKind::DegenerateInput, "saliency map of a synthetic image is flat");
      return density_from_grid(m.grid);
    }
    case BehaviorKind::CenterBiased:
      return density_from_grid(center_gaussian_grid(image.width, image.height));
    case BehaviorKind::Uniform:
      break;
  }
  return density_from_grid(Grid(image.width, image.height, 1.0));
}

SynthDataset synthesize(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synth"));
  SynthDataset ds;
  ds.images = generate_images(cfg, rng);

  DatasetManifest& m = ds.manifest;
  m.mode = ManifestMode::Subject;
  for (const auto& c : cfg.classes) m.class_names.push_back(c.name);
  for (const auto& im : ds.images)
    m.images.push_back({im.id, out_dir / "images" / (im.id + ".png"), im.image.width, im.image.height});

  // behavior densities are shared by all subjects of a class
  std::vector<std::vector<DensityMap>> densities(cfg.classes.size());
  for (std::size_t c = 0; c < cfg.classes.size(); ++c)
    for (const auto& im : ds.images) densities[c].push_back(mixture(behavior_density(cfg.classes[c].kind, im.image), cfg.classes[c].lambda));

  int subject_no = 0;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (int s = 0; s < cfg.subjects_per_class; ++s) {
      char id[32];
      std::snprintf(id, sizeof id, "s%03d", ++subject_no);
      m.subjects.push_back({id, cfg.classes[c].name});
      for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const auto points = sample_fixations_from_density(densities[c][i], cfg.fixations_per_trial, rng);
        long index = 0;
        for (const Pixel& p : points)
          ds.records.push_back({id, ds.images[i].id, index++, p.x + 0.5, p.y + 0.5, std::nullopt});
      }
    }
  }
  if (cfg.task_variant) {
    DatasetManifest t = m;
    t.mode = ManifestMode::Task;
    t.task_labels = std::map<std::string, std::string>{};
    ds.task_manifest = std::move(t);
  }
  return ds;
}

SynthDataset generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  SynthDataset ds = synthesize(cfg, out_dir);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto path = ds.manifest.images[i].path;
    auto tmp = path;
    tmp.replace_extension(".tmp.png");
    std::filesystem::create_directories(path.parent_path());
    save_png(ds.images[i].image, tmp);
    std::filesystem::rename(tmp, path);
  }
  std::ostringstream table;
  write_fixation_table(table, ds.records);
  write_file_atomic(out_dir / "fixations.csv", table.str());
  write_manifest(ds.manifest, out_dir / "manifest.json");
  if (ds.task_manifest) write_manifest(*ds.task_manifest, out_dir / "manifest_task.json");
  return ds;
}

}  // namespace salfeat

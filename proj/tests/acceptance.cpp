// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "salfeat/error.hpp"
#include "salfeat/features.hpp"
#include "salfeat/learners.hpp"
#include "salfeat/metrics.hpp"
#include "salfeat/run.hpp"
#include "salfeat/saliency.hpp"
#include "salfeat/synth.hpp"
#include "salfeat/text.hpp"
#include "support.hpp"

using namespace salfeat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Grid grid_of(int w, int h, std::vector<double> v) {
  Grid g(w, h);
  g.values = std::move(v);
  return g;
}

// ---- 1
Outcome metric_oracles() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Grid s = testing::random_grid(8, 8, rng);
    const auto fix = testing::random_fixations(8, 8, 1 + uniform_index(rng, 20), rng);
    Grid d = testing::random_grid(8, 8, rng);
    const double total = d.sum();
    for (double& v : d.values) v /= total;
    const DensityMap dm{d};
    worst = std::max({worst, std::abs(auc_judd(s, fix) - testing::brute_auc(s, fix)),
                      std::abs(nss(s, fix) - testing::direct_nss(s, fix)), std::abs(cc(s, d) - testing::direct_cc(s, d)),
                      std::abs(sim(s, dm) - testing::direct_sim(s, d)), std::abs(kl_div(s, dm) - testing::direct_kl(s, d))});
  }
  const double t = seconds_since(t0);
  o.require(worst <= 1e-9, "max deviation " + fmt("%.3g", worst));
  o.require(t < 10.0, "runtime " + fmt("%.1f s", t));
  o.note("max deviation " + fmt("%.2g", worst) + ", " + fmt("%.2f s", t));
  return o;
}

// ---- 2
Outcome analytic_values() {
  Outcome o;
  const FixationMap corner(2, 2, {{1, 1}}, 0), origin(2, 2, {{0, 0}}, 0);
  const Grid s = grid_of(2, 2, {0, 0, 0, 1});
  const double v_nss = nss(s, corner);
  const double v_nss_low = nss(s, origin);
  const double v_kl = kl_div(grid_of(2, 1, {0.5, 0.5}), DensityMap{grid_of(2, 1, {0.75, 0.25})});
  const double v_sim = sim(grid_of(2, 1, {1, 0}), DensityMap{grid_of(2, 1, {0.5, 0.5})});
  const double v_ig_up = info_gain(grid_of(2, 2, {2, 1, 1, 0}), origin, DensityMap{Grid(2, 2, 0.25)});
  const double v_ig_down = info_gain(Grid(2, 2, 1.0), origin, DensityMap{grid_of(2, 2, {0.5, 0.2, 0.2, 0.1})});
  o.require(std::abs(v_nss - std::numbers::sqrt3) <= 1e-6, "nss " + fmt("%.9f", v_nss));
  o.require(std::abs(v_nss_low + 1 / std::numbers::sqrt3) <= 1e-6, "nss " + fmt("%.9f", v_nss_low));
  o.require(std::abs(v_kl - 0.130812) <= 1e-6, "kl " + fmt("%.9f", v_kl));
  o.require(std::abs(v_sim - 0.5) <= 1e-6, "sim " + fmt("%.9f", v_sim));
  o.require(std::abs(v_ig_up - 1.0) <= 1e-6, "ig " + fmt("%.9f", v_ig_up));
  o.require(std::abs(v_ig_down + 1.0) <= 1e-6, "ig " + fmt("%.9f", v_ig_down));
  o.note("nss " + fmt("%.7f", v_nss) + ", kl " + fmt("%.7f", v_kl) + ", sim " + fmt("%.7f", v_sim) + ", ig " +
         fmt("%+.7f", v_ig_up) + "/" + fmt("%+.7f", v_ig_down));
  return o;
}

// ---- 3
Outcome center_bias_cancellation() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const int w = 128, h = 96, n_images = 50, per_image = 80;
  Grid mix = center_gaussian_grid(w, h);
  const double total = mix.sum();
  for (double& v : mix.values) v = 0.9 * v / total + 0.1 / (w * h);
  const DensityMap density = density_from_grid(mix);
  Rng rng(derive_seed(7, "acceptance", "center_bias"));
  std::vector<std::vector<Pixel>> points;
  for (int i = 0; i < n_images; ++i) points.push_back(sample_fixations_from_density(density, per_image, rng));

  const Grid saliency = center_gaussian_grid(w, h);
  const DensityMap baseline = center_baseline(w, h);
  MetricConfig cfg;
  cfg.enabled = {MetricId::AucJudd, MetricId::Sauc};
  cfg.n_splits = 100;
  double judd = 0.0, shuffled = 0.0;
  for (int i = 0; i < n_images; ++i) {
    std::vector<FixationRecord> recs;
    for (const auto& p : points[i]) recs.push_back({"s", "i", 0, p.x + 0.5, p.y + 0.5, std::nullopt});
    const FixationMap fix = build_fixation_map(recs, w, h);
    std::vector<Pixel> others;
    for (int j = 0; j < n_images; ++j)
      if (j != i) others.insert(others.end(), points[j].begin(), points[j].end());
    const ShuffleSet shuffle = make_shuffle_set(std::move(others), 10 * fix.hits().size(), rng);
    const DensityMap d = blur_to_density(fix, w / 32.0);
    const EvalInputs in{&saliency, &fix, &d, &shuffle, &baseline};
    const auto ev = evaluate_all(in, cfg, derive_seed(7, "image", std::to_string(i)));
    judd += ev.values[0];
    shuffled += ev.values[1];
  }
  judd /= n_images;
  shuffled /= n_images;
  const double t = seconds_since(t0);
  o.require(judd >= 0.65, "auc_judd " + fmt("%.4f", judd));
  o.require(std::abs(shuffled - 0.5) <= 0.05, "sauc " + fmt("%.4f", shuffled));
  o.require(t < 30.0, "runtime " + fmt("%.1f s", t));
  o.note("auc_judd " + fmt("%.4f", judd) + ", sauc " + fmt("%.4f", shuffled) + ", " + fmt("%.1f s", t));
  return o;
}

// ---- 4
Outcome gbvs_correctness() {
  Outcome o;
  SynthConfig sc;
  sc.n_images = 6;
  Rng rng(derive_seed(7, "acceptance", "gbvs"));
  std::vector<ImageBuffer> images;
  for (auto& im : generate_images(sc, rng)) images.push_back(std::move(im.image));
  images.push_back(testing::disk_image(160, 120, 50, 70, 18));
  images.push_back(testing::constant_image(96, 96, 0.3));

  double worst_residual = 0.0;
  const GbvsParams params;
  for (const auto& img : images)
    for (const auto& f : gbvs_feature_maps(img, params)) {
      const auto eq = stationary_distribution(gbvs_chain(f, params.sigma_fraction * std::hypot(f.width, f.height)));
      worst_residual = std::max(worst_residual, eq.residual);
    }
  o.require(worst_residual < 1e-8, "residual " + fmt("%.3g", worst_residual));

  GbvsParams small;
  small.working_width = 8;
  double worst_gap = 0.0;
  for (std::size_t k = 0; k + 2 < images.size(); ++k)
    for (const auto& f : gbvs_feature_maps(images[k], small)) {
      if (f.width != 8 || f.height != 8) {
        o.require(false, "working grid is " + std::to_string(f.width) + "x" + std::to_string(f.height));
        continue;
      }
      const auto chain = gbvs_chain(f, small.sigma_fraction * std::hypot(8.0, 8.0));
      const auto eq = stationary_distribution(chain);
      const auto dense = testing::dense_stationary(chain);
      for (std::size_t i = 0; i < dense.size(); ++i) worst_gap = std::max(worst_gap, std::abs(eq.distribution[i] - dense[i]));
    }
  o.require(worst_gap <= 1e-6, "eigen gap " + fmt("%.3g", worst_gap));
  o.note("max residual " + fmt("%.3g", worst_residual) + ", max gap to dense solve " + fmt("%.2g", worst_gap));
  return o;
}

// ---- 5
Outcome degenerate_inputs() {
  Outcome o;
  for (double level : {0.0, 0.37, 1.0}) {
    const auto img = testing::constant_image(80, 64, level);
    const auto ik = itti_koch(img);
    const auto lc = local_covariance(img);
    o.require(ik.degenerate && ik.grid.max() == 0.0, "itti_koch not degenerate at level " + fmt("%.2f", level));
    o.require(lc.degenerate && lc.grid.max() == 0.0, "local_covariance not degenerate at level " + fmt("%.2f", level));
    for (const auto& f : gbvs_feature_maps(img)) {
      const auto eq = stationary_distribution(gbvs_chain(f, 0.15 * std::hypot(f.width, f.height)));
      const double u = 1.0 / static_cast<double>(eq.distribution.size());
      double gap = 0.0;
      for (double v : eq.distribution) gap = std::max(gap, std::abs(v - u));
      o.require(gap <= 1e-9, "gbvs equilibrium not uniform (gap " + fmt("%.3g", gap) + ")");
    }

    const auto bank = compute_bank(ModelRegistry::defaults(), "flat", img);
    Rng rng(5);
    const auto fix = testing::random_fixations(80, 64, 12, rng);
    const auto density = blur_to_density(fix, 2.5);
    const auto baseline = center_baseline(80, 64);
    const ShuffleSet shuffle = make_shuffle_set({{1, 1}, {70, 50}, {40, 10}, {5, 60}}, 40, rng);
    for (const auto& map : bank.maps) {
      const EvalInputs in{&map.grid, &fix, &density, &shuffle, &baseline};
      const auto ev = evaluate_all(in, MetricConfig{}, 3);
      for (double v : ev.values) o.require(std::isfinite(v), map.model_id + " produced a non-finite metric");
      if (map.degenerate) {
        o.require(ev.degenerate_count() == ev.values.size(), map.model_id + " fallbacks not flagged");
        o.require(ev.values[0] == 0.5 && ev.values[1] == 0.5 && ev.values[2] == 0.5 && ev.values[3] == 0.0 &&
                      ev.values[4] == 0.0,
                  map.model_id + " fallback values differ");
      }
    }
  }
  if (o.pass) o.note("constant images: flat itti_koch/local_covariance maps, uniform gbvs equilibria, flagged fallbacks");
  return o;
}

// ---- 6, 7, 8, 10: full pipeline on synthetic datasets

const char* kPipelineConfig = R"(seed: 20240607
manifest: data/manifest.json
synth:
  n_images: 30
  width: 128
  height: 128
  subjects_per_class: 20
  fixations_per_trial: 8
  classes:
    - {name: follower, behavior: saliency_follower, lambda: LAMBDA}
    - {name: center, behavior: center_biased, lambda: LAMBDA}
)";

CommandContext pipeline_context(const fs::path& dir, double lambda) {
  std::string text = kPipelineConfig;
  for (auto pos = text.find("LAMBDA"); pos != std::string::npos; pos = text.find("LAMBDA"))
    text.replace(pos, 6, fmt("%g", lambda));
  CommandContext ctx{parse_run_config(text, dir), nullptr};
  return ctx;
}

void synthesize_into(const fs::path& dir, double lambda) {
  auto ctx = pipeline_context(dir, lambda);
  ctx.config.output_dir = dir / "data";
  cmd_synth(ctx);
}

CvReport crossval_with(CommandContext ctx, LearnerKind kind, const fs::path& out) {
  ctx.config.learner.kind = kind;
  ctx.config.output_dir = out;
  return cmd_crossval(ctx);
}

struct PipelineRun {
  fs::path dir;
  CvReport svm, gbt;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const std::string& name, double lambda) {
  PipelineRun r;
  r.dir = testing::scratch_dir(name);
  const auto t0 = std::chrono::steady_clock::now();
  synthesize_into(r.dir, lambda);
  auto ctx = pipeline_context(r.dir, lambda);
  ctx.config.output_dir = r.dir / "svm";
  cmd_features(ctx);
  r.svm = crossval_with(ctx, LearnerKind::Svm, r.dir / "svm");
  ctx.config.output_dir = r.dir / "gbt";
  cmd_features(ctx);
  r.gbt = crossval_with(ctx, LearnerKind::Gbt, r.dir / "gbt");
  r.seconds = seconds_since(t0);
  return r;
}

std::string stats_text(const char* name, const ClassificationStats& s) {
  return std::string(name) + " " + fmt("%.2f%%", 100 * s.accuracy) + " auc " + (s.auc ? fmt("%.4f", *s.auc) : "n/a");
}

Outcome end_to_end(const PipelineRun& r) {
  Outcome o;
  for (const auto* rep : {&r.svm, &r.gbt}) {
    const char* name = rep == &r.svm ? "svm" : "gbt";
    o.require(rep->protocol == Protocol::LeaveOneSubjectOut, std::string(name) + " protocol");
    o.require(rep->model_ids.size() == 5, std::string(name) + " uses " + std::to_string(rep->model_ids.size()) + " models");
    o.require(rep->pooled.n == 40, std::string(name) + " pooled " + std::to_string(rep->pooled.n) + " subjects");
    o.require(rep->pooled.accuracy >= 0.90, stats_text(name, rep->pooled));
    o.require(rep->pooled.auc && *rep->pooled.auc >= 0.95, stats_text(name, rep->pooled));
  }
  o.require(r.seconds < 300.0, "runtime " + fmt("%.0f s", r.seconds));
  o.note(stats_text("svm", r.svm.pooled) + ", " + stats_text("gbt", r.gbt.pooled) + ", " + fmt("%.0f s", r.seconds));
  return o;
}

Outcome null_case(const PipelineRun& r) {
  Outcome o;
  for (const auto* rep : {&r.svm, &r.gbt}) {
    const char* name = rep == &r.svm ? "svm" : "gbt";
    o.require(std::abs(rep->pooled.accuracy - 0.5) <= 0.15, stats_text(name, rep->pooled));
  }
  o.note(stats_text("svm", r.svm.pooled) + ", " + stats_text("gbt", r.gbt.pooled));
  return o;
}

Outcome ablation_trend(const PipelineRun& r) {
  Outcome o;
  auto ctx = pipeline_context(r.dir, 0.9);
  ctx.config.output_dir = r.dir / "svm";
  ctx.config.ablation_repeats = 10;
  const auto rows = cmd_ablate(ctx);
  if (rows.size() != 5) {
    o.require(false, "expected sizes 1..5, got " + std::to_string(rows.size()) + " rows");
    return o;
  }
  // pooled standard deviation of the per-run accuracies of both sizes in a step
  std::string means;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    means += (k ? " " : "") + fmt("%.2f", rows[k].mean);
    if (k == 0) continue;
    const auto& a = rows[k - 1];
    const auto& b = rows[k];
    const double na = static_cast<double>(a.accuracies.size()), nb = static_cast<double>(b.accuracies.size());
    const double pooled = std::sqrt((na * a.stdev * a.stdev + nb * b.stdev * b.stdev) / (na + nb));
    o.require(b.mean >= a.mean - pooled, "size " + std::to_string(b.size) + " mean " + fmt("%.2f", b.mean) +
                                             " below size " + std::to_string(a.size) + " mean " + fmt("%.2f", a.mean) +
                                             " by more than " + fmt("%.2f", pooled));
  }
  o.note("mean accuracy by size " + means);
  return o;
}

Outcome determinism(const PipelineRun& r) {
  Outcome o;
  // an independent second run: fresh synthetic data, cache and outputs
  const fs::path dir = testing::scratch_dir("acc_repeat");
  synthesize_into(dir, 0.9);
  auto ctx = pipeline_context(dir, 0.9);
  ctx.config.output_dir = dir / "svm";
  cmd_features(ctx);
  crossval_with(ctx, LearnerKind::Svm, dir / "svm");
  o.require(read_file(r.dir / "data" / "fixations.csv") == read_file(dir / "data" / "fixations.csv"), "fixation tables differ");
  o.require(read_file(r.dir / "svm" / kFeaturesFile) == read_file(dir / "svm" / kFeaturesFile), "feature CSVs differ");
  o.require(read_file(r.dir / "svm" / kCvReportFile) == read_file(dir / "svm" / kCvReportFile), "CvReport JSONs differ");
  if (o.pass) o.note("features.csv and cv_report.json byte-identical across runs");
  return o;
}

// ---- 9
Outcome learner_checks() {
  Outcome o;
  Rng rng(derive_seed(7, "acceptance", "learners"));
  auto gauss = [&] {
    const double u = 1.0 - uniform_unit(rng), v = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  };
  auto train_acc = [](const TrainedModel& m, const std::vector<std::vector<double>>& x, const std::vector<bool>& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ok += (decision_value(m, x[i]) > 0) == y[i];
    return static_cast<double>(ok) / static_cast<double>(x.size());
  };

  std::vector<std::vector<double>> x;
  std::vector<bool> y;
  for (int i = 0; i < 20; ++i) {
    const double c = i % 2 ? 5.0 : 0.0;
    x.push_back({c + 0.7 * gauss(), c + 0.7 * gauss()});
    y.push_back(i % 2);
  }
  const double sep = train_acc(svm_fit(x, y, SvmConfig{}), x, y);
  o.require(sep == 1.0, "separable training accuracy " + fmt("%.3f", sep));

  x.clear();
  y.clear();
  for (int q = 0; q < 4; ++q)
    for (int i = 0; i < 10; ++i) {
      const double sx = q & 1 ? 1 : -1, sy = q & 2 ? 1 : -1;
      x.push_back({sx * (0.5 + uniform_unit(rng)), sy * (0.5 + uniform_unit(rng))});
      y.push_back(sx * sy > 0);
    }
  SvmConfig xor_cfg;
  xor_cfg.C = 10.0;
  xor_cfg.degree = 2;
  const double xr = train_acc(svm_fit(x, y, xor_cfg), x, y);
  o.require(xr == 1.0, "XOR training accuracy " + fmt("%.3f", xr));

  x.clear();
  y.clear();
  for (int i = 0; i < 100; ++i) {
    x.push_back({gauss(), gauss(), gauss()});
    y.push_back(x.back()[0] - x.back()[1] * x.back()[2] + 0.5 * gauss() > 0);
  }
  const auto gbt = gbt_fit(x, y, GbtConfig{});
  bool monotone = gbt.stage_loss.size() == 101;
  for (std::size_t k = 1; k < gbt.stage_loss.size(); ++k) monotone = monotone && gbt.stage_loss[k] <= gbt.stage_loss[k - 1] + 1e-12;
  o.require(monotone, "gbt stage loss increased");

  const auto s = classification_report({0, 0, 0, 0, 1, 1, 1, 1, 0, 1}, {0, 0, 1, 0, 1, 0, 1, 1, 1, 1},
                                       {0.9, 0.8, -0.3, 0.4, -0.7, 0.6, -0.2, -0.9, -0.1, -0.5}, 0);
  const bool fixture = std::abs(s.accuracy - 0.7) < 1e-12 && s.sensitivity && std::abs(*s.sensitivity - 0.6) < 1e-12 &&
                       s.specificity && std::abs(*s.specificity - 0.8) < 1e-12 && s.auc && std::abs(*s.auc - 0.84) < 1e-12;
  o.require(fixture, "report fixture mismatch");
  o.note("separable " + fmt("%.0f%%", 100 * sep) + ", XOR " + fmt("%.0f%%", 100 * xr) + ", gbt loss " +
         fmt("%.4f", gbt.stage_loss.front()) + " -> " + fmt("%.4f", gbt.stage_loss.back()) + ", fixture acc/sens/spec/auc " +
         fmt("%.2f", s.accuracy) + "/" + fmt("%.2f", s.sensitivity.value_or(-1)) + "/" +
         fmt("%.2f", s.specificity.value_or(-1)) + "/" + fmt("%.2f", s.auc.value_or(-1)));
  return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* title, const Outcome& o) {
    std::printf("criterion %2d %-36s %s  %s\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };

  report(1, "metric oracle equivalence", guarded(metric_oracles));
  report(2, "analytic metric values", guarded(analytic_values));
  report(3, "center-bias cancellation", guarded(center_bias_cancellation));
  report(4, "gbvs equilibrium", guarded(gbvs_correctness));
  report(5, "degenerate inputs", guarded(degenerate_inputs));

  std::optional<PipelineRun> signal, null;
  std::string signal_error, null_error;
  try {
    signal = run_pipeline("acc_signal", 0.9);
  } catch (const std::exception& e) {
    signal_error = e.what();
  }
  const Outcome missing{false, "pipeline failed: " + signal_error};
  report(6, "end-to-end synthetic classification", signal ? guarded([&] { return end_to_end(*signal); }) : missing);
  try {
    null = run_pipeline("acc_null", 0.0);
  } catch (const std::exception& e) {
    null_error = e.what();
  }
  report(7, "null case", null ? guarded([&] { return null_case(*null); }) : Outcome{false, "pipeline failed: " + null_error});
  report(8, "ablation trend", signal ? guarded([&] { return ablation_trend(*signal); }) : missing);
  report(9, "learner checks", guarded(learner_checks));
  report(10, "determinism", signal ? guarded([&] { return determinism(*signal); }) : missing);

  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}

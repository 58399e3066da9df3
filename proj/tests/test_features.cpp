#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "salfeat/error.hpp"
#include "salfeat/features.hpp"
#include "salfeat/text.hpp"
#include "support.hpp"

using namespace salfeat;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

// Cheap deterministic models so tests can afford many images.
ModelRegistry cheap_registry(int t) {
  ModelRegistry r;
  r.add("cg", "center_gaussian");
  for (int k = 1; k < t; ++k) {
    r.add_custom("ramp" + std::to_string(k), [k](const ImageBuffer& img, const ModelParams&) {
      Grid g(img.width, img.height);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          g.at(x, y) = std::fmod(x * (k + 1) + y * k * 0.5 + img.at(0, 0) * 10, 7.0);
      return g;
    });
  }
  return r;
}

struct Fixture {
  DatasetManifest manifest;
  std::vector<FixationRecord> records;
  std::map<std::string, SaliencyBank> banks;
};

Fixture make_fixture(ManifestMode mode, int n_subjects, int n_images, int size, int per_trial, std::uint64_t seed,
                     int t = 2) {
  Fixture f;
  f.manifest.mode = mode;
  f.manifest.class_names = {"a", "b"};
  Rng rng(seed);
  const auto registry = cheap_registry(t);
  for (int i = 0; i < n_images; ++i) {
    const std::string id = "im" + std::to_string(100 + i);
    f.manifest.images.push_back({id, id + ".png", size, size});
    f.banks[id] = compute_bank(registry, id, testing::constant_image(size, size, (i % 17) / 17.0));
  }
  for (int s = 0; s < n_subjects; ++s) {
    const std::string id = "s" + std::to_string(100 + s);
    f.manifest.subjects.push_back({id, s % 2 == 0 ? "a" : "b"});
    for (const auto& im : f.manifest.images)
      for (int k = 0; k < per_trial; ++k)
        f.records.push_back({id, im.id, k, uniform_unit(rng) * size, uniform_unit(rng) * size, std::nullopt});
  }
  if (mode == ManifestMode::Task) f.manifest.task_labels = std::map<std::string, std::string>{};
  return f;
}

BuildOptions quick_options(std::uint64_t seed = 3) {
  BuildOptions o;
  o.metrics.n_splits = 10;
  o.seed = seed;
  o.registry_hash = "test";
  return o;
}

FixationMap map_of(const std::vector<Pixel>& hits, int size) { return FixationMap(size, size, hits, 0); }

FeatureContext context_for(int size, const ShuffleSet* shuffle) {
  FeatureContext ctx;
  ctx.metrics.n_splits = 20;
  ctx.density_sigma = size / 32.0;
  ctx.shuffle = shuffle;
  ctx.seed = 77;
  return ctx;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("image feature concatenates every model's metrics") {
    const auto registry = cheap_registry(5);
    const auto bank = compute_bank(registry, "x", testing::constant_image(24, 24, 0.3));
    Rng rng(1);
    const auto fix = testing::random_fixations(24, 24, 7, rng);
    const ShuffleSet shuffle{{{0, 0}, {23, 23}, {5, 17}}};
    const auto ctx = context_for(24, &shuffle);
    const auto f = image_feature(fix, bank, ctx);
    CHECK(f.values.size() == 40);
    CHECK(f.layout.size() == 40);
    CHECK(f.layout.column_names()[8] == "ramp1.auc_judd");
    CHECK(image_feature(fix, bank, ctx).values == f.values);

    // T = 1 reproduces that model's evaluation vector
    SaliencyBank single{"x", {bank.maps[2]}};
    const auto one = image_feature(fix, single, ctx);
    const auto density = blur_to_density(fix, ctx.density_sigma);
    const auto baseline = center_baseline(24, 24);
    const auto ev = evaluate_all({&bank.maps[2].grid, &fix, &density, &shuffle, &baseline}, ctx.metrics,
                                 derive_seed(ctx.seed, bank.maps[2].model_id));
    CHECK(one.values == ev.values);
    for (std::size_t k = 0; k < 8; ++k) CHECK(f.values[16 + k] == one.values[k]);

    CHECK(kind_of([&] { image_feature(FixationMap(24, 24), bank, ctx); }) == ErrorKind::NoFixation);
    CHECK(kind_of([&] { image_feature(fix, SaliencyBank{"x", {}}, ctx); }) == ErrorKind::Layout);
  }

  TEST_CASE("maps are resized to the fixation grid") {
    const auto bank = compute_bank(cheap_registry(2), "x", testing::constant_image(48, 48, 0.3));
    Rng rng(2);
    const auto fix = testing::random_fixations(24, 24, 5, rng);
    const ShuffleSet shuffle{{{1, 1}}};
    CHECK(image_feature(fix, bank, context_for(24, &shuffle)).values.size() == 16);
  }

  TEST_CASE("subject feature is the element-wise mean") {
    FeatureVector zero{{{"m"}, {MetricId::Nss, MetricId::Cc}}, {0.0, 0.0}, 0};
    FeatureVector one{zero.layout, {1.0, 1.0}, 1};
    CHECK(subject_feature({zero}).values == zero.values);
    const auto mean = subject_feature({zero, one});
    CHECK(mean.values == std::vector<double>{0.5, 0.5});
    CHECK(mean.degenerate_count == 1);
    CHECK(kind_of([] { subject_feature({}); }) == ErrorKind::EmptyInput);
    FeatureVector other{{{"n"}, {MetricId::Nss, MetricId::Cc}}, {0.0, 0.0}, 0};
    CHECK(kind_of([&] { subject_feature({zero, other}); }) == ErrorKind::Layout);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<FeatureVector> vs;
      for (int i = 0; i < 6; ++i) vs.push_back({zero.layout, {uniform_unit(rng), uniform_unit(rng) * 100}, 0});
      const auto a = subject_feature(vs);
      std::shuffle(vs.begin(), vs.end(), rng);
      const auto b = subject_feature(vs);
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-12);
    }
  }

  TEST_CASE("task feature evaluates the union map") {
    const auto bank = compute_bank(cheap_registry(3), "x", testing::constant_image(20, 20, 0.6));
    const ShuffleSet shuffle{{{0, 19}, {19, 0}, {10, 10}, {3, 3}}};
    const auto ctx = context_for(20, &shuffle);
    const auto a = map_of({{2, 2}, {4, 9}}, 20);
    const auto b = map_of({{15, 6}, {11, 12}, {7, 7}}, 20);
    CHECK(task_feature({a}, bank, ctx).values == image_feature(a, bank, ctx).values);
    CHECK(task_feature({a, a, a}, bank, ctx).values == image_feature(a, bank, ctx).values);
    // explicit union: all hits of both subjects in one map
    const auto merged = map_of({{2, 2}, {4, 9}, {15, 6}, {11, 12}, {7, 7}}, 20);
    CHECK(task_feature({a, b}, bank, ctx).values == image_feature(merged, bank, ctx).values);
  }

  TEST_CASE("subject mode gives one row per subject at paper scale") {
    auto f = make_fixture(ManifestMode::Subject, 41, 100, 16, 3, 4, 1);
    BuildOptions o = quick_options();
    o.metrics.enabled = {MetricId::AucJudd, MetricId::Nss, MetricId::Sauc};
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, o);
    CHECK(m.rows.size() == 41);
    CHECK(m.layout.size() == 3);
    CHECK(std::is_sorted(m.rows.begin(), m.rows.end(),
                         [](const auto& x, const auto& y) { return x.sample_id < y.sample_id; }));
    for (const auto& r : m.rows) {
      CHECK(r.images.size() == 100);
      for (double v : r.features) CHECK(std::isfinite(v));
    }
    CHECK(m.provenance.skipped_trials == 0);
  }

  TEST_CASE("task mode gives one row per image and label group") {
    auto f = make_fixture(ManifestMode::Task, 4, 300, 16, 2, 5, 1);
    BuildOptions o = quick_options();
    o.metrics.enabled = {MetricId::AucJudd, MetricId::Cc};
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, o);
    CHECK(m.rows.size() == 600);
    CHECK(m.rows[0].sample_id == "im100|a");
    CHECK(m.rows[0].subjects == std::vector<std::string>{"s100", "s102"});
    CHECK(m.pool.kind == PoolScope::Kind::AllSubjects);
  }

  TEST_CASE("task labels override subject labels per image") {
    auto f = make_fixture(ManifestMode::Task, 3, 4, 16, 2, 6, 1);
    f.manifest.task_labels = std::map<std::string, std::string>{{"im100", "a"}, {"im101", "b"}};
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, quick_options());
    std::vector<std::string> ids;
    for (const auto& r : m.rows) ids.push_back(r.sample_id);
    CHECK(ids == std::vector<std::string>{"im100|a", "im101|b", "im102|a", "im102|b", "im103|a", "im103|b"});
    CHECK(m.rows[0].subjects.size() == 3);
  }

  TEST_CASE("subject with fixations on 3 of 5 images averages those 3") {
    auto f = make_fixture(ManifestMode::Subject, 4, 5, 16, 4, 7);
    // s101 keeps only im100, im102, im104; im103 survives as an out-of-bounds trial
    std::vector<FixationRecord> kept;
    for (const auto& r : f.records) {
      if (r.subject_id == "s101" && r.image_id == "im101") continue;
      if (r.subject_id == "s101" && r.image_id == "im103") {
        auto off = r;
        off.x = -5;
        kept.push_back(off);
        continue;
      }
      kept.push_back(r);
    }
    BuildOptions o = quick_options();
    const auto m = build_design_matrix(f.manifest, kept, f.banks, o);
    CHECK(m.provenance.skipped_trials == 2);
    const auto& row = *std::find_if(m.rows.begin(), m.rows.end(), [](const auto& r) { return r.sample_id == "s101"; });
    CHECK(row.images == std::vector<std::string>{"im100", "im102", "im104"});

    // oracle: the mean of the three per-image features computed by hand
    BuildOptions only = o;
    std::vector<double> sum(row.features.size(), 0.0);
    for (const std::string im : {"im100", "im102", "im104"}) {
      std::vector<FixationRecord> own;
      for (const auto& r : kept)
        if (r.subject_id == "s101" && r.image_id == im) own.push_back(r);
      const auto fix = build_fixation_map(own, 16, 16);
      std::vector<Pixel> pool;
      for (const auto& r : kept)
        if (r.subject_id == "s101" && r.image_id != im && r.x >= 0)
          pool.push_back({static_cast<int>(std::floor(r.x)), static_cast<int>(std::floor(r.y))});
      Rng rng(derive_seed(o.seed, "shuffle", "s101", im));
      const auto shuffle = make_shuffle_set(pool, 10 * fix.hits().size(), rng);
      FeatureContext ctx;
      ctx.metrics = o.metrics;
      ctx.density_sigma = 0.5;
      ctx.shuffle = &shuffle;
      ctx.seed = derive_seed(o.seed, "features", "s101", im);
      const auto v = image_feature(fix, f.banks.at(im), ctx);
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += v.values[k];
    }
    for (std::size_t k = 0; k < sum.size(); ++k) CHECK(std::abs(row.features[k] - sum[k] / 3.0) <= 1e-12);
  }

  TEST_CASE("subjects without usable trials are excluded, empty classes are fatal") {
    auto f = make_fixture(ManifestMode::Subject, 4, 3, 16, 2, 8);
    std::vector<FixationRecord> kept;
    for (const auto& r : f.records)
      if (r.subject_id != "s102") kept.push_back(r);
    const auto m = build_design_matrix(f.manifest, kept, f.banks, quick_options());
    CHECK(m.rows.size() == 3);
    CHECK(m.provenance.excluded == std::vector<std::string>{"s102"});

    std::vector<FixationRecord> only_a;
    for (const auto& r : f.records)
      if (r.subject_id == "s100" || r.subject_id == "s102") only_a.push_back(r);
    try {
      build_design_matrix(f.manifest, only_a, f.banks, quick_options());
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
      CHECK(std::string(e.what()).find("s101") != std::string::npos);
    }
  }

  TEST_CASE("missing banks, mismatched banks and unresolved records fail") {
    auto f = make_fixture(ManifestMode::Subject, 2, 3, 16, 2, 9);
    auto missing = f.banks;
    missing.erase("im101");
    CHECK(kind_of([&] { build_design_matrix(f.manifest, f.records, missing, quick_options()); }) ==
          ErrorKind::Validation);
    auto swapped = f.banks;
    std::swap(swapped["im102"].maps[0], swapped["im102"].maps[1]);
    CHECK(kind_of([&] { build_design_matrix(f.manifest, f.records, swapped, quick_options()); }) == ErrorKind::Layout);
    auto bad = f.records;
    bad.push_back({"ghost", "im100", 0, 1, 1, std::nullopt});
    CHECK(kind_of([&] { build_design_matrix(f.manifest, bad, f.banks, quick_options()); }) == ErrorKind::Validation);
  }

  TEST_CASE("design matrices are deterministic and independent of the job count") {
    auto f = make_fixture(ManifestMode::Subject, 6, 5, 16, 4, 10);
    auto one = quick_options();
    auto four = quick_options();
    four.jobs = 4;
    const auto a = build_design_matrix(f.manifest, f.records, f.banks, one);
    const auto b = build_design_matrix(f.manifest, f.records, f.banks, four);
    CHECK(design_matrix_csv(a) == design_matrix_csv(b));
    CHECK(design_matrix_provenance_json(a) == design_matrix_provenance_json(b));
    auto other = quick_options(4);
    CHECK(design_matrix_csv(build_design_matrix(f.manifest, f.records, f.banks, other)) != design_matrix_csv(a));
  }

  TEST_CASE("restricting rows and pools") {
    auto f = make_fixture(ManifestMode::Subject, 4, 6, 16, 4, 11);
    BuildOptions o = quick_options();
    o.row_images = std::set<std::string>{"im100", "im101", "im102"};
    o.pool_images = o.row_images;
    o.row_subjects = std::set<std::string>{"s100", "s101"};
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, o);
    CHECK(m.rows.size() == 2);
    CHECK(m.rows[0].images.size() == 3);
    CHECK(m.pool.images == std::vector<std::string>{"im100", "im101", "im102"});
    CHECK(m.pool.subjects.size() == 4);
  }

  TEST_CASE("csv export, sidecar and reload") {
    auto f = make_fixture(ManifestMode::Subject, 4, 3, 16, 3, 12);
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, quick_options());
    const std::string csv = design_matrix_csv(m);
    CHECK(csv.rfind("sample_id,label,cg.auc_judd,cg.auc_borji,cg.sauc,cg.nss,cg.cc,cg.sim,cg.kl_div,cg.info_gain,ramp1.auc_judd", 0) == 0);
    const auto dir = testing::scratch_dir("features_io");
    save_design_matrix(m, dir / "features.csv");
    CHECK(std::filesystem::exists(dir / "features.csv.provenance.json"));
    const auto back = load_design_matrix(dir / "features.csv");
    CHECK(design_matrix_csv(back) == csv);
    CHECK(back.rows[1].images == m.rows[1].images);
    CHECK(back.pool.images == m.pool.images);
    CHECK(back.provenance.metric_hash == m.provenance.metric_hash);
    CHECK(back.positive_class == m.positive_class);

    write_file_atomic(dir / "features.csv", csv + "s9,a,1,2\n");
    CHECK(kind_of([&] { load_design_matrix(dir / "features.csv"); }) == ErrorKind::Parse);
  }

  TEST_CASE("model selection slices the layout") {
    auto f = make_fixture(ManifestMode::Subject, 4, 3, 16, 3, 13, 3);
    const auto m = build_design_matrix(f.manifest, f.records, f.banks, quick_options());
    const auto s = m.select_models({"ramp2", "cg"});
    CHECK(s.layout.model_ids == std::vector<std::string>{"cg", "ramp2"});
    CHECK(s.rows[0].features.size() == 16);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(s.rows[0].features[k] == m.rows[0].features[k]);
      CHECK(s.rows[0].features[8 + k] == m.rows[0].features[16 + k]);
    }
    CHECK(kind_of([&] { m.select_models({"nope"}); }) == ErrorKind::Layout);
    const auto r = m.select_rows({2, 0});
    CHECK(r.rows[0].sample_id == m.rows[2].sample_id);
  }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "salfeat/error.hpp"
#include "salfeat/gaze_data.hpp"
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

std::vector<FixationRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_fixation_table(in);
}

const char* kHeader = "subject_id,image_id,index,x,y,duration_ms\n";

FixationRecord at(double x, double y) { return {"s", "i", 0, x, y, std::nullopt}; }

DatasetManifest small_manifest() {
  DatasetManifest m;
  m.class_names = {"A", "B"};
  m.images = {{"i1", "i1.png", 16, 16}, {"i2", "i2.png", 16, 16}, {"i3", "i3.png", 16, 16}};
  m.subjects = {{"s1", "A"}, {"s2", "B"}};
  return m;
}

}  // namespace

TEST_SUITE("gaze_data") {
  TEST_CASE("fixation table row maps onto one record") {
    const auto r = parse(std::string(kHeader) + "s1,img7,0,12.5,30.0,180\n");
    REQUIRE(r.size() == 1);
    CHECK(r[0] == FixationRecord{"s1", "img7", 0, 12.5, 30.0, 180.0});
  }

  TEST_CASE("header only gives no records and empty duration is absent") {
    CHECK(parse(kHeader).empty());
    const auto r = parse(std::string(kHeader) + "s1,a,3,1,2,\r\n");
    REQUIRE(r.size() == 1);
    CHECK_FALSE(r[0].duration_ms.has_value());
    CHECK(r[0].index == 3);
  }

  TEST_CASE("malformed rows report their line") {
    try {
      parse(std::string(kHeader) + "s1,img7,0,abc,30.0,180\n");
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse(std::string(kHeader) + "s1,a,0,1,1,\ns1,a,1,2\n");
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK(kind_of([] { parse(std::string(kHeader) + "s1,a,0,1,1,-5\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { parse(std::string(kHeader) + "s1,a,-1,1,1,\n"); }) == ErrorKind::Parse);
  }

  TEST_CASE("missing header column is a format error") {
    CHECK(kind_of([] { parse("subject_id,image_id,x,y\ns,i,1,1\n"); }) == ErrorKind::Format);
    CHECK(kind_of([] { parse(""); }) == ErrorKind::Format);
  }

  TEST_CASE("table round trip preserves records and order") {
    std::vector<FixationRecord> in{{"s2", "b", 1, 0.25, 7.0, 12.5}, {"s1", "a", 0, 3.0, 1.0 / 3.0, std::nullopt}};
    std::ostringstream out;
    write_fixation_table(out, in);
    CHECK(parse(out.str()) == in);
  }

  TEST_CASE("fixation map floors coordinates and drops out-of-bounds points") {
    auto m = build_fixation_map({at(1.2, 2.9), at(1.7, 2.1)}, 4, 4);
    REQUIRE(m.hits().size() == 1);
    CHECK(m.hits()[0] == Pixel{1, 2});
    CHECK(m.dropped_count() == 0);

    m = build_fixation_map({at(-1, 0)}, 4, 4);
    CHECK(m.empty());
    CHECK(m.dropped_count() == 1);

    m = build_fixation_map({at(0, 0), at(1, 1), at(3.99, 3.99)}, 4, 4);
    CHECK(m.hits().size() == 3);
    CHECK(build_fixation_map({at(4.0, 0)}, 4, 4).dropped_count() == 1);
    CHECK(kind_of([] { build_fixation_map({}, 0, 4); }) == ErrorKind::InvalidDimensions);
  }

  TEST_CASE("fixation map is permutation invariant and accounts for every record") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<FixationRecord> recs;
      const int n = 1 + static_cast<int>(uniform_index(rng, 30));
      for (int i = 0; i < n; ++i)
        recs.push_back(at(uniform_unit(rng) * 12 - 2, uniform_unit(rng) * 12 - 2));
      const auto a = build_fixation_map(recs, 8, 8);
      std::vector<FixationRecord> shuffled = recs;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto b = build_fixation_map(shuffled, 8, 8);
      CHECK(a.hits() == b.hits());
      CHECK(a.dropped_count() == b.dropped_count());

      // oracle: count in-bounds floored points and their collisions directly
      std::size_t in_bounds = 0;
      std::set<std::pair<int, int>> seen;
      for (const auto& r : recs) {
        const int x = static_cast<int>(std::floor(r.x)), y = static_cast<int>(std::floor(r.y));
        if (x < 0 || y < 0 || x >= 8 || y >= 8) continue;
        ++in_bounds;
        seen.insert({x, y});
      }
      const std::size_t duplicates = in_bounds - seen.size();
      CHECK(a.hits().size() + duplicates + a.dropped_count() == recs.size());
    }
  }

  TEST_CASE("union of fixation maps") {
    const auto a = build_fixation_map({at(0, 0)}, 4, 4);
    const auto b = build_fixation_map({at(1, 1)}, 4, 4);
    const auto u = union_fixation_maps({a, b});
    CHECK(u.hits() == std::vector<Pixel>{{0, 0}, {1, 1}});
    CHECK(union_fixation_maps({a, a}).hits() == a.hits());
    CHECK(union_fixation_maps({a, b}).hits() == union_fixation_maps({b, a}).hits());
    CHECK(kind_of([] { union_fixation_maps({}); }) == ErrorKind::EmptyInput);
    CHECK(kind_of([&] { union_fixation_maps({a, FixationMap(8, 8)}); }) == ErrorKind::Shape);
    const auto dropped = build_fixation_map({at(-3, 0), at(9, 9)}, 4, 4);
    CHECK(union_fixation_maps({a, dropped}).dropped_count() == 2);
  }

  TEST_CASE("union is associative on random maps") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = testing::random_fixations(6, 6, 1 + uniform_index(rng, 5), rng);
      const auto b = testing::random_fixations(6, 6, 1 + uniform_index(rng, 5), rng);
      const auto c = testing::random_fixations(6, 6, 1 + uniform_index(rng, 5), rng);
      CHECK(union_fixation_maps({union_fixation_maps({a, b}), c}).hits() ==
            union_fixation_maps({a, union_fixation_maps({b, c})}).hits());
    }
  }

  TEST_CASE("density of a single hit with sigma 0 is a delta") {
    const auto d = blur_to_density(build_fixation_map({at(2, 1)}, 4, 4), 0.0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(d.grid.at(x, y) == (x == 2 && y == 1 ? 1.0 : 0.0));
  }

  TEST_CASE("density is symmetric for mirrored hits") {
    const auto d = blur_to_density(build_fixation_map({at(3, 5), at(16, 5)}, 20, 12), 2.3);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 20; ++x) CHECK(d.grid.at(x, y) == doctest::Approx(d.grid.at(19 - x, y)).epsilon(1e-12));
  }

  TEST_CASE("central hit density peaks at the hit and sums to one") {
    const auto d = blur_to_density(build_fixation_map({at(16, 16)}, 33, 33), 2.0);
    const auto it = std::max_element(d.grid.values.begin(), d.grid.values.end());
    CHECK(it - d.grid.values.begin() == 16 * 33 + 16);
    CHECK(std::abs(d.grid.sum() - 1.0) < 1e-9);
  }

  TEST_CASE("density sums to one for any hits including corners") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
      const int w = 5 + static_cast<int>(uniform_index(rng, 20)), h = 5 + static_cast<int>(uniform_index(rng, 20));
      auto fix = testing::random_fixations(w, h, 1 + uniform_index(rng, 6), rng);
      if (trial % 4 == 0) fix = build_fixation_map({at(0, 0), at(w - 1, h - 1)}, w, h);
      const auto d = blur_to_density(fix, uniform_unit(rng) * 6.0);
      CHECK(std::abs(d.grid.sum() - 1.0) < 1e-9);
      CHECK(d.grid.min() >= 0.0);
    }
    CHECK(kind_of([] { blur_to_density(FixationMap(4, 4), 1.0); }) == ErrorKind::DegenerateInput);
  }

  TEST_CASE("manifest validation collects every problem") {
    auto m = small_manifest();
    CHECK_NOTHROW(validate_manifest(m, false));
    m.subjects.push_back({"s3", "C"});
    m.task_labels = std::map<std::string, std::string>{{"i1", "Z"}};
    try {
      validate_manifest(m, false);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
      const std::string what = e.what();
      CHECK(what.find("s3") != std::string::npos);
      CHECK(what.find("'Z'") != std::string::npos);
    }
    auto t = small_manifest();
    t.mode = ManifestMode::Task;
    CHECK(kind_of([&] { validate_manifest(t, false); }) == ErrorKind::Validation);
    auto one = small_manifest();
    one.class_names = {"A"};
    CHECK(kind_of([&] { validate_manifest(one, false); }) == ErrorKind::Validation);
  }

  TEST_CASE("manifest file round trip and path checks") {
    const auto dir = testing::scratch_dir("manifest");
    auto m = small_manifest();
    for (auto& im : m.images) {
      im.path = dir / (im.id + ".png");
      save_png(testing::constant_image(16, 16, 0.5), im.path);
    }
    m.positive_class = "B";
    write_manifest(m, dir / "manifest.json");
    const auto back = load_manifest(dir / "manifest.json");
    CHECK(back.subjects.size() == 2);
    CHECK(back.images.size() == 3);
    CHECK(back.num_classes() == 2);
    CHECK(back.positive_class_index() == 1);
    CHECK(back.images[1].path == dir / "i2.png");

    std::filesystem::remove(dir / "i3.png");
    CHECK(kind_of([&] { load_manifest(dir / "manifest.json"); }) == ErrorKind::Validation);
    CHECK(kind_of([&] { load_manifest(dir / "absent.json"); }) == ErrorKind::Io);
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK(kind_of([&] { load_manifest(dir / "bad.json"); }) == ErrorKind::Format);
  }

  TEST_CASE("positive class defaults to the lexicographically first name") {
    auto m = small_manifest();
    m.class_names = {"td", "asd"};
    CHECK(m.positive_class_index() == 1);
    CHECK(m.sigma_for(m.images[0]) == 0.5);
    m.density_sigma = 3.0;
    CHECK(m.sigma_for(m.images[0]) == 3.0);
  }

  TEST_CASE("records must resolve against the manifest") {
    const auto m = small_manifest();
    CHECK_NOTHROW(check_records_resolve(m, {{"s1", "i1", 0, 1, 1, std::nullopt}}));
    CHECK(kind_of([&] { check_records_resolve(m, {{"s9", "i1", 0, 1, 1, std::nullopt}}); }) ==
          ErrorKind::Validation);
  }
}

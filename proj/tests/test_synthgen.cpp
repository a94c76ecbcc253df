#include "uigroup/synthgen.hpp"

#include <filesystem>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "uigroup/grouping.hpp"

using namespace uigroup;
namespace fs = std::filesystem;
namespace tu = uigroup::testutil;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("uigroup_test_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GenConfig small_config(std::uint64_t seed = 5) {
  GenConfig cfg;
  cfg.n_prototypes = 24;
  cfg.elements_min = 8;
  cfg.elements_max = 12;
  cfg.seed = seed;
  return cfg;
}

std::vector<DesignPrototype> load_all(const DatasetManifest& manifest, const fs::path& dir) {
  std::vector<DesignPrototype> protos;
  for (const auto& [split, files] : manifest.splits)
    for (const auto& rel : files) protos.push_back(parse_prototype(read_file(dir / rel)));
  return protos;
}

}  // namespace

TEST_CASE("rasterize: full-bleed black rectangle") {
  UINode rect{"r", NodeClass::kRectangle, "box", {0, 0, 50, 50}, Rgba{0, 0, 0, 255}, {}, {}};
  const Image64 img = rasterize_element(rect);

  // Corner pixels stay background white, center is pure black.
  CHECK(img.at(0, 0, 0) == 1.0f);
  CHECK(img.at(0, 63, 63) == 1.0f);
  CHECK(img.at(0, 32, 32) == 0.0f);

  int filled = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img.at(0, y, x) < 0.5f) ++filled;
  CHECK(filled == 60 * 60);  // square scales to the full 60px drawing box
}

TEST_CASE("rasterize: ellipse covers about pi/4 of its box") {
  UINode oval{"o", NodeClass::kOval, "dot", {0, 0, 80, 80}, Rgba{0, 0, 0, 255}, {}, {}};
  const Image64 img = rasterize_element(oval);
  int filled = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img.at(0, y, x) < 0.5f) ++filled;
  const double fraction = static_cast<double>(filled) / (60.0 * 60.0);
  CHECK(fraction == doctest::Approx(3.14159265 / 4.0).epsilon(0.05));
}

TEST_CASE("rasterize: degenerate and container nodes") {
  UINode flat{"f", NodeClass::kRectangle, "hairline", {0, 0, 0, 10}, std::nullopt, {}, {}};
  const Image64 img = rasterize_element(flat);
  for (float v : img.data) CHECK(v == 1.0f);

  UINode container{"c", NodeClass::kGroup, "section", {0, 0, 10, 10}, std::nullopt, {}, {}};
  CHECK_THROWS_AS(rasterize_element(container), ShapeError);
}

TEST_CASE("rasterize: always 3x64x64 with values in [0,1]") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    static const NodeClass kClasses[] = {NodeClass::kOval, NodeClass::kRectangle,
                                         NodeClass::kPath, NodeClass::kText, NodeClass::kBitmap};
    UINode leaf{"x",
                kClasses[rng.uniform_int(0, 4)],
                "any",
                {0, 0, rng.uniform(0, 200), rng.uniform(0, 200)},
                rng.bernoulli(0.5)
                    ? std::optional<Rgba>(Rgba{rng.uniform(0, 255), rng.uniform(0, 255),
                                               rng.uniform(0, 255), rng.uniform(0, 255)})
                    : std::nullopt,
                {},
                {}};
    const Image64 img = rasterize_element(leaf);
    CHECK(img.data.size() == static_cast<std::size_t>(Image64::kFloats));
    for (float v : img.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("generate: identical seed gives byte-identical files and manifest") {
  TempDir a("det_a"), b("det_b");
  const GenConfig cfg = small_config();
  const DatasetManifest ma = generate_dataset(cfg, a.path);
  const DatasetManifest mb = generate_dataset(cfg, b.path, /*threads=*/2);
  save_manifest(ma, a.path / "manifest.json");
  save_manifest(mb, b.path / "manifest.json");

  CHECK(read_file(a.path / "manifest.json") == read_file(b.path / "manifest.json"));
  for (const std::string& rel : ma.splits.at("train")) {
    CHECK(read_file(a.path / rel) == read_file(b.path / rel));
    fs::path stem_a = a.path / rel, stem_b = b.path / rel;
    stem_a.replace_extension();
    stem_b.replace_extension();
    CHECK(read_file(stem_a.string() + ".images.bin") == read_file(stem_b.string() + ".images.bin"));
  }
}

TEST_CASE("generate: groups are well-formed and counts match a recount") {
  TempDir dir("shape");
  const GenConfig cfg = small_config(11);
  const DatasetManifest manifest = generate_dataset(cfg, dir.path);

  LabelCounts recount{0, 0, 0};
  for (const DesignPrototype& proto : load_all(manifest, dir.path)) {
    const ElementSequence seq = extract_sequence(proto);
    std::vector<Label> labels;
    std::vector<std::string> uuids;
    for (const auto& rec : seq.records) {
      REQUIRE(rec.label.has_value());
      labels.push_back(*rec.label);
      uuids.push_back(rec.uuid);
      ++recount[static_cast<std::size_t>(*rec.label)];
      // Text leaves never join groups.
      if (rec.cls == NodeClass::kText) CHECK(rec.label == Label::kNonMerge);
    }
    for (const MergedGroup& g : decode_groups(labels, uuids)) CHECK(g.uuids.size() >= 2);
  }
  CHECK(recount == manifest.counts.at("train"));
}

TEST_CASE("generate: corpus merge ratio lands near the 1:8 target") {
  TempDir dir("ratio");
  GenConfig cfg;  // defaults: 400 prototypes, target 0.125
  cfg.seed = 21;
  const DatasetManifest manifest = generate_dataset(cfg, dir.path);
  const LabelCounts& c = manifest.counts.at("train");
  const double ratio = static_cast<double>(c[0] + c[1]) / static_cast<double>(c[2]);
  CHECK(ratio >= 0.10);
  CHECK(ratio <= 0.15);
}

TEST_CASE("generate: overlap configs produce intersecting group boxes") {
  TempDir dir("overlap");
  GenConfig cfg = small_config(31);
  cfg.n_prototypes = 40;
  cfg.overlap_fraction = 0.2;
  const DatasetManifest manifest = generate_dataset(cfg, dir.path);

  bool found = false;
  for (const DesignPrototype& proto : load_all(manifest, dir.path)) {
    const ElementSequence seq = extract_sequence(proto);
    std::vector<Label> labels;
    std::vector<std::string> uuids;
    for (const auto& rec : seq.records) {
      labels.push_back(rec.label.value_or(Label::kNonMerge));
      uuids.push_back(rec.uuid);
    }
    std::unordered_map<std::string, Frame> frames;
    for (const auto& rec : seq.records) frames[rec.uuid] = rec.frame;
    for (const MergedGroup& g : decode_groups(labels, uuids)) {
      double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
      std::unordered_set<std::string> members(g.uuids.begin(), g.uuids.end());
      for (const auto& u : g.uuids) {
        const Frame& f = frames[u];
        x0 = std::min(x0, f.x);
        y0 = std::min(y0, f.y);
        x1 = std::max(x1, f.x + f.w);
        y1 = std::max(y1, f.y + f.h);
      }
      for (const auto& rec : seq.records) {
        if (members.count(rec.uuid)) continue;
        const Frame& f = rec.frame;
        if (f.x < x1 && x0 < f.x + f.w && f.y < y1 && y0 < f.y + f.h) found = true;
      }
    }
  }
  CHECK(found);
}

TEST_CASE("generate: unsatisfiable group size is a config error") {
  GenConfig cfg = small_config();
  cfg.group_size_min = 20;
  cfg.group_size_max = 25;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sidecar images: roundtrip is exact") {
  TempDir dir("sidecar");
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 20, 20}, Rgba{12, 200, 90, 255}),
       tu::leaf("b", NodeClass::kText, "b", {0, 30, 50, 12})}));
  write_element_images(p, dir.path / "proto");
  const auto images = load_element_images(dir.path / "proto");
  REQUIRE(images.size() == 2);

  const ElementSequence seq = extract_sequence(p);
  for (const auto& rec : seq.records) {
    UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, rec.label, {}};
    const Image64 direct = rasterize_element(leaf);
    CHECK(images.at(rec.uuid).data == direct.data);
  }
}

TEST_CASE("split: 10 files follow the 8:1:1 ratio and reshuffles deterministically") {
  TempDir dir("split");
  GenConfig cfg = small_config(41);
  cfg.n_prototypes = 10;
  const DatasetManifest base = generate_dataset(cfg, dir.path);

  const DatasetManifest s1 = split_dataset(base, {8, 1, 1}, 7, dir.path);
  CHECK(s1.splits.at("train").size() == 8);
  CHECK(s1.splits.at("val").size() == 1);
  CHECK(s1.splits.at("test").size() == 1);

  const DatasetManifest s2 = split_dataset(base, {8, 1, 1}, 7, dir.path);
  CHECK(s1.splits == s2.splits);

  // Partition property: union matches, pairwise disjoint.
  std::set<std::string> all;
  std::size_t total = 0;
  for (const auto& [name, files] : s1.splits) {
    total += files.size();
    all.insert(files.begin(), files.end());
  }
  CHECK(total == 10);
  CHECK(all.size() == 10);

  LabelCounts sum{0, 0, 0};
  for (const auto& [name, c] : s1.counts)
    for (std::size_t k = 0; k < 3; ++k) sum[k] += c[k];
  CHECK(sum == base.counts.at("train"));
}

TEST_CASE("split: fewer files than splits is an error") {
  TempDir dir("split_small");
  GenConfig cfg = small_config(43);
  cfg.n_prototypes = 2;
  const DatasetManifest base = generate_dataset(cfg, dir.path);
  CHECK_THROWS_AS(split_dataset(base, {8, 1, 1}, 1, dir.path), SplitError);
}

TEST_CASE("manifest: save/load roundtrip and disjointness check") {
  TempDir dir("manifest");
  GenConfig cfg = small_config(47);
  cfg.n_prototypes = 6;
  const DatasetManifest base = generate_dataset(cfg, dir.path);
  const DatasetManifest split = split_dataset(base, {8, 1, 1}, 3, dir.path);
  save_manifest(split, dir.path / "manifest.json");
  const DatasetManifest loaded = load_manifest(dir.path / "manifest.json");
  CHECK(loaded.splits == split.splits);
  CHECK(loaded.counts == split.counts);
  CHECK(loaded.seed == split.seed);

  // Duplicated file across splits must be rejected.
  DatasetManifest broken = split;
  broken.splits["val"].push_back(broken.splits["train"].front());
  save_manifest(broken, dir.path / "broken.json");
  CHECK_THROWS_AS(load_manifest(dir.path / "broken.json"), ValidationError);
}

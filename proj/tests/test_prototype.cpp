#include "uigroup/prototype.hpp"

#include <set>

#include "doctest.h"
#include "test_util.hpp"

using namespace uigroup;
namespace tu = uigroup::testutil;

namespace {

const char* kMinimalDoc = R"({
  "id": "doc1",
  "canvas": {"width": 100, "height": 100},
  "root": {
    "uuid": "root", "class": "group", "name": "screen",
    "frame": {"x": 0, "y": 0, "w": 100, "h": 100},
    "color": null,
    "children": [
      {"uuid": "r1", "class": "rectangle", "name": "box",
       "frame": {"x": 10, "y": 20, "w": 30, "h": 40},
       "color": [255, 0, 0, 255], "label": "non-merge", "children": []}
    ]
  }
})";

std::vector<std::string> leaf_uuids(const DesignPrototype& p) {
  std::vector<std::string> out;
  for (const auto& rec : extract_sequence(p).records) out.push_back(rec.uuid);
  return out;
}

}  // namespace

TEST_CASE("parse: minimal document yields one leaf") {
  const DesignPrototype p = parse_prototype(kMinimalDoc);
  CHECK(p.id == "doc1");
  CHECK(p.canvas_width == 100);
  const ElementSequence seq = extract_sequence(p);
  REQUIRE(seq.size() == 1);
  CHECK(seq.records[0].uuid == "r1");
  CHECK(seq.records[0].cls == NodeClass::kRectangle);
  CHECK(seq.records[0].label == Label::kNonMerge);
  REQUIRE(seq.records[0].color.has_value());
  CHECK(seq.records[0].color->r == 255);
}

TEST_CASE("parse: truncated JSON raises ParseError with offset") {
  const std::string doc(kMinimalDoc);
  CHECK_THROWS_AS(parse_prototype(doc.substr(0, doc.size() / 2)), ParseError);
}

TEST_CASE("parse: null color stays absent") {
  const DesignPrototype p = parse_prototype(kMinimalDoc);
  CHECK(!p.root.color.has_value());
}

TEST_CASE("parse: missing field names the path") {
  std::string doc = kMinimalDoc;
  const auto pos = doc.find("\"name\": \"box\",");
  doc.erase(pos, std::string("\"name\": \"box\",").size());
  try {
    parse_prototype(doc);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.path.find("children[0]") != std::string::npos);
  }
}

TEST_CASE("parse: negative sizes rejected") {
  std::string doc = kMinimalDoc;
  const auto pos = doc.find("\"w\": 30");
  doc.replace(pos, 7, "\"w\": -3");
  CHECK_THROWS_AS(parse_prototype(doc), ValidationError);
}

TEST_CASE("parse: duplicate uuid rejected") {
  std::string doc = kMinimalDoc;
  const auto pos = doc.find("\"uuid\": \"r1\"");
  doc.replace(pos, 12, "\"uuid\": \"root\"");
  CHECK_THROWS_AS(parse_prototype(doc), ValidationError);
}

TEST_CASE("parse: unknown class maps to unk") {
  std::string doc = kMinimalDoc;
  const auto pos = doc.find("\"rectangle\"");
  doc.replace(pos, std::string("\"rectangle\"").size(), "\"artboard\"");
  const DesignPrototype p = parse_prototype(doc);
  CHECK(extract_sequence(p).records[0].cls == NodeClass::kUnk);
}

TEST_CASE("extract: pre-order over leaves, containers skipped") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("A", "section",
                 {tu::leaf("B", NodeClass::kOval, "b", {0, 0, 10, 10}),
                  tu::leaf("C", NodeClass::kPath, "c", {10, 0, 10, 10})}),
       tu::leaf("D", NodeClass::kText, "d", {0, 20, 10, 10})}));
  CHECK(leaf_uuids(p) == std::vector<std::string>{"B", "C", "D"});
}

TEST_CASE("extract: single leaf") {
  auto p = tu::proto_of(tu::group("root", "screen",
                                  {tu::leaf("only", NodeClass::kRectangle, "x", {0, 0, 5, 5})}));
  CHECK(leaf_uuids(p) == std::vector<std::string>{"only"});
}

TEST_CASE("extract: labels derived for leaves under a #merge# container") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("g", kMergeMarker,
                 {tu::leaf("m1", NodeClass::kOval, "path 1", {0, 0, 8, 8}),
                  tu::leaf("m2", NodeClass::kOval, "path 2", {8, 0, 8, 8})}),
       tu::leaf("w", NodeClass::kText, "title", {0, 20, 40, 10})}));
  const auto seq = extract_sequence(p);
  REQUIRE(seq.size() == 3);
  CHECK(seq.records[0].label == Label::kStartMerge);
  CHECK(seq.records[1].label == Label::kMerge);
  CHECK(!seq.records[2].label.has_value());
}

TEST_CASE("extract: explicit labels win over derivation") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("g", kMergeMarker,
                 {tu::leaf("m1", NodeClass::kOval, "a", {0, 0, 8, 8}, std::nullopt,
                           Label::kNonMerge),
                  tu::leaf("m2", NodeClass::kOval, "b", {8, 0, 8, 8})})}));
  const auto seq = extract_sequence(p);
  CHECK(seq.records[0].label == Label::kNonMerge);
  // The derived first slot goes to the first leaf without an explicit label.
  CHECK(seq.records[1].label == Label::kStartMerge);
}

TEST_CASE("extract: sibling order drives sequence order") {
  auto a = tu::leaf("A", NodeClass::kOval, "a", {0, 0, 4, 4});
  auto b = tu::leaf("B", NodeClass::kPath, "b", {4, 0, 4, 4});
  auto p1 = tu::proto_of(tu::group("root", "screen", {a, b}));
  auto p2 = tu::proto_of(tu::group("root", "screen", {b, a}));
  CHECK(leaf_uuids(p1) == std::vector<std::string>{"A", "B"});
  CHECK(leaf_uuids(p2) == std::vector<std::string>{"B", "A"});
}

TEST_CASE("serialize: canonical roundtrip") {
  const DesignPrototype p = parse_prototype(kMinimalDoc);
  const std::string s1 = serialize_prototype(p);
  const DesignPrototype p2 = parse_prototype(s1);
  CHECK(p2 == p);
  CHECK(serialize_prototype(p2) == s1);  // byte-identical
  CHECK(s1.find("\"color\":null") != std::string::npos);
  CHECK(s1.find("30.000000") != std::string::npos);  // fixed 6-decimal floats
}

TEST_CASE("serialize/parse roundtrip on random trees") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    const DesignPrototype p = tu::random_prototype(rng);
    const DesignPrototype q = parse_prototype(serialize_prototype(p));
    CHECK(q == p);
    CHECK(serialize_prototype(q) == serialize_prototype(p));
  }
}

TEST_CASE("regroup: two adjacent siblings wrapped under #merge#") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 10, 10}),
       tu::leaf("b", NodeClass::kOval, "b", {10, 0, 10, 12}),
       tu::leaf("c", NodeClass::kText, "c", {0, 20, 10, 10})}));
  const DesignPrototype out =
      regroup_hierarchy(p, {MergedGroup{{"a", "b"}, MergedGroup::Source::kPredicted}});
  REQUIRE(out.root.children.size() == 2);
  const UINode& merged = out.root.children[0];
  CHECK(merged.name == kMergeMarker);
  CHECK(merged.cls == NodeClass::kGroup);
  REQUIRE(merged.children.size() == 2);
  CHECK(merged.children[0].uuid == "a");
  CHECK(merged.children[1].uuid == "b");
  // bounding box of members
  CHECK(merged.frame.x == 0);
  CHECK(merged.frame.w == 20);
  CHECK(merged.frame.h == 12);
  CHECK(leaf_uuids(out) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("regroup: empty group list is the identity") {
  Rng rng(7);
  const DesignPrototype p = tu::random_prototype(rng);
  const DesignPrototype out = regroup_hierarchy(p, {});
  CHECK(serialize_prototype(out) == serialize_prototype(p));
}

TEST_CASE("regroup: group spanning two branches attaches at the LCA") {
  // Leaves in DFS order: a, b | c, d -- group {b, c} spans both sections.
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("s1", "left",
                 {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 5, 5}),
                  tu::leaf("b", NodeClass::kOval, "b", {5, 0, 5, 5})}),
       tu::group("s2", "right",
                 {tu::leaf("c", NodeClass::kOval, "c", {10, 0, 5, 5}),
                  tu::leaf("d", NodeClass::kOval, "d", {15, 0, 5, 5})})}));
  const auto before = leaf_uuids(p);
  const DesignPrototype out =
      regroup_hierarchy(p, {MergedGroup{{"b", "c"}, MergedGroup::Source::kPredicted}});
  CHECK(leaf_uuids(out) == before);
  // The wrapper landed under the root (the LCA), between the two sections.
  REQUIRE(out.root.children.size() == 3);
  CHECK(out.root.children[1].name == kMergeMarker);
}

TEST_CASE("regroup: members sharing a parent nest the wrapper inside it") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("s1", "wrap",
                 {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 5, 5}),
                  tu::leaf("b", NodeClass::kOval, "b", {5, 0, 5, 5})}),
       tu::leaf("c", NodeClass::kText, "c", {0, 20, 10, 10})}));
  const DesignPrototype out =
      regroup_hierarchy(p, {MergedGroup{{"a", "b"}, MergedGroup::Source::kPredicted}});
  CHECK(leaf_uuids(out) == std::vector<std::string>{"a", "b", "c"});
  // LCA of {a,b} is their shared parent; the wrapper lands under it.
  REQUIRE(out.root.children.size() == 2);
  CHECK(out.root.children[0].uuid == "s1");
  REQUIRE(out.root.children[0].children.size() == 1);
  CHECK(out.root.children[0].children[0].name == kMergeMarker);
}

TEST_CASE("regroup: emptied sibling subtree is pruned") {
  // Group {b, c} pulls c out of s2, leaving s2 childless; s2 disappears.
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::group("s1", "left",
                 {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 5, 5}),
                  tu::leaf("b", NodeClass::kOval, "b", {5, 0, 5, 5})}),
       tu::group("s2", "lone", {tu::leaf("c", NodeClass::kOval, "c", {10, 0, 5, 5})}),
       tu::leaf("d", NodeClass::kText, "d", {0, 20, 10, 10})}));
  const DesignPrototype out =
      regroup_hierarchy(p, {MergedGroup{{"b", "c"}, MergedGroup::Source::kPredicted}});
  CHECK(leaf_uuids(out) == std::vector<std::string>{"a", "b", "c", "d"});
  REQUIRE(out.root.children.size() == 3);
  CHECK(out.root.children[0].uuid == "s1");
  CHECK(out.root.children[1].name == kMergeMarker);
  CHECK(out.root.children[2].uuid == "d");
}

TEST_CASE("regroup: unknown uuid and non-contiguous members rejected") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 5, 5}),
       tu::leaf("b", NodeClass::kOval, "b", {5, 0, 5, 5}),
       tu::leaf("c", NodeClass::kOval, "c", {10, 0, 5, 5})}));
  CHECK_THROWS_AS(regroup_hierarchy(p, {MergedGroup{{"a", "zz"}, {}}}), LookupError);
  CHECK_THROWS_AS(regroup_hierarchy(p, {MergedGroup{{"a", "c"}, {}}}), ContiguityError);
}

TEST_CASE("regroup: leaf order and multiset preserved on random trees") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const DesignPrototype p = tu::random_prototype(rng);
    const auto uuids = leaf_uuids(p);
    if (uuids.size() < 3) continue;
    // Pick a random contiguous run as a group.
    const std::size_t len = static_cast<std::size_t>(rng.uniform_int(2, 3));
    if (uuids.size() < len) continue;
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(uuids.size() - len)));
    MergedGroup g;
    for (std::size_t i = start; i < start + len; ++i) g.uuids.push_back(uuids[i]);
    const DesignPrototype out = regroup_hierarchy(p, {g});
    CHECK(leaf_uuids(out) == uuids);
  }
}

TEST_CASE("strata: tiny requires both sides under 32") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::leaf("t", NodeClass::kOval, "t", {0, 0, 31, 31}),
       tu::leaf("n", NodeClass::kOval, "n", {100, 100, 31, 40})}));
  const auto flags = tag_strata(p);
  CHECK(flags[0].tiny);
  CHECK(!flags[1].tiny);
  CHECK(!flags[0].overlapping);
  CHECK(!flags[1].overlapping);
}

TEST_CASE("strata: positive-area intersection flags both elements") {
  auto p = tu::proto_of(tu::group(
      "root", "screen",
      {tu::leaf("a", NodeClass::kOval, "a", {0, 0, 20, 20}),
       tu::leaf("b", NodeClass::kOval, "b", {10, 10, 20, 20}),
       tu::leaf("c", NodeClass::kOval, "c", {20, 0, 10, 10})}));  // touches a only at the edge
  const auto flags = tag_strata(p);
  CHECK(flags[0].overlapping);
  CHECK(flags[1].overlapping);
  CHECK(!flags[2].overlapping);
}

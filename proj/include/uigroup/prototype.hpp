#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uigroup/error.hpp"

namespace uigroup {

// Bounding box in canvas pixels.
struct Frame {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Frame&) const = default;
};

// Raw channels in [0, 255]; normalized to [0, 1] only at embedding time.
struct Rgba {
  double r = 0, g = 0, b = 0, a = 255;
  bool operator==(const Rgba&) const = default;
};

enum class NodeClass { kOval, kRectangle, kPath, kText, kBitmap, kSymbol, kGroup, kUnk };

enum class Label { kStartMerge, kMerge, kNonMerge };

constexpr int kNumLabels = 3;

const char* to_string(NodeClass c);
const char* to_string(Label l);
NodeClass node_class_from_string(const std::string& s);          // unknown -> kUnk
std::optional<Label> label_from_string(const std::string& s);    // unknown -> nullopt

struct UINode {
  std::string uuid;
  NodeClass cls = NodeClass::kUnk;
  std::string name;
  Frame frame;
  std::optional<Rgba> color;
  std::optional<Label> label;
  std::vector<UINode> children;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const UINode&) const = default;
};

struct DesignPrototype {
  std::string id;
  double canvas_width = 0;
  double canvas_height = 0;
  UINode root;

  bool operator==(const DesignPrototype&) const = default;
};

// One flattened element, in pre-order DFS position.
struct ElementRecord {
  std::string uuid;
  NodeClass cls = NodeClass::kUnk;
  std::string name;
  Frame frame;
  std::optional<Rgba> color;
  std::optional<Label> label;
};

struct ElementSequence {
  std::vector<ElementRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct MergedGroup {
  enum class Source { kGroundTruth, kPredicted };
  std::vector<std::string> uuids;  // sequence order
  Source source = Source::kPredicted;
};

// Name given to inserted wrapper nodes; matches the annotation convention the
// training labels are derived from.
inline constexpr const char* kMergeMarker = "#merge#";

// Parse + validate a prototype document. Unknown class strings map to kUnk,
// "color": null stays absent. Throws ParseError / SchemaError /
// ValidationError.
DesignPrototype parse_prototype(const std::string& bytes);

// Canonical serialization: sorted keys, floats with 6 decimal places. Two
// serializations of equal prototypes are byte-identical, and
// parse(serialize(p)) == p for values representable at that precision.
std::string serialize_prototype(const DesignPrototype& proto);

// Pre-order DFS over leaves. Container nodes (class "group", or any node with
// children) are structural and are not emitted. Explicit leaf labels pass
// through; leaves under a "#merge#"-named container get start-merge/merge
// derived from traversal order (topmost marker wins when nested).
ElementSequence extract_sequence(const DesignPrototype& proto);

// Rewrite the hierarchy: wrap each group's members in a new "#merge#" node
// attached under the members' lowest common ancestor. Leaf uuid multiset and
// leaf DFS order are unchanged. Members must exist as leaves and be
// contiguous in DFS order.
DesignPrototype regroup_hierarchy(const DesignPrototype& proto,
                                  const std::vector<MergedGroup>& groups);

// Per-element stratification flags, aligned with extract_sequence order.
struct StrataFlags {
  bool tiny = false;         // w < 32 and h < 32
  bool overlapping = false;  // frame intersects another leaf frame with positive area
};

std::vector<StrataFlags> tag_strata(const DesignPrototype& proto);

}  // namespace uigroup

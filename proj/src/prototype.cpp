#include "uigroup/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace uigroup {

using nlohmann::json;

const char* to_string(NodeClass c) {
  switch (c) {
    case NodeClass::kOval: return "oval";
    case NodeClass::kRectangle: return "rectangle";
    case NodeClass::kPath: return "path";
    case NodeClass::kText: return "text";
    case NodeClass::kBitmap: return "bitmap";
    case NodeClass::kSymbol: return "symbol";
    case NodeClass::kGroup: return "group";
    case NodeClass::kUnk: return "unk";
  }
  return "unk";
}

const char* to_string(Label l) {
  switch (l) {
    case Label::kStartMerge: return "start-merge";
    case Label::kMerge: return "merge";
    case Label::kNonMerge: return "non-merge";
  }
  return "non-merge";
}

NodeClass node_class_from_string(const std::string& s) {
  if (s == "oval") return NodeClass::kOval;
  if (s == "rectangle") return NodeClass::kRectangle;
  if (s == "path") return NodeClass::kPath;
  if (s == "text") return NodeClass::kText;
  if (s == "bitmap") return NodeClass::kBitmap;
  if (s == "symbol") return NodeClass::kSymbol;
  if (s == "group") return NodeClass::kGroup;
  return NodeClass::kUnk;
}

std::optional<Label> label_from_string(const std::string& s) {
  if (s == "start-merge") return Label::kStartMerge;
  if (s == "merge") return Label::kMerge;
  if (s == "non-merge") return Label::kNonMerge;
  return std::nullopt;
}

namespace {

double require_number(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError("missing required field '" + std::string(key) + "'", path);
  if (!it->is_number()) throw SchemaError("field '" + std::string(key) + "' must be a number", path);
  return it->get<double>();
}

std::string require_string(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError("missing required field '" + std::string(key) + "'", path);
  if (!it->is_string()) throw SchemaError("field '" + std::string(key) + "' must be a string", path);
  return it->get<std::string>();
}

UINode parse_node(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError("node must be an object", path);
  UINode node;
  node.uuid = require_string(j, "uuid", path);
  node.cls = node_class_from_string(require_string(j, "class", path));
  node.name = require_string(j, "name", path);

  auto fit = j.find("frame");
  if (fit == j.end()) throw SchemaError("missing required field 'frame'", path);
  const std::string fpath = path + ".frame";
  node.frame.x = require_number(*fit, "x", fpath);
  node.frame.y = require_number(*fit, "y", fpath);
  node.frame.w = require_number(*fit, "w", fpath);
  node.frame.h = require_number(*fit, "h", fpath);

  if (auto cit = j.find("color"); cit != j.end() && !cit->is_null()) {
    if (!cit->is_array() || cit->size() != 4)
      throw SchemaError("color must be null or [r,g,b,a]", path + ".color");
    for (const auto& ch : *cit)
      if (!ch.is_number()) throw SchemaError("color channels must be numbers", path + ".color");
    node.color = Rgba{(*cit)[0].get<double>(), (*cit)[1].get<double>(), (*cit)[2].get<double>(),
                      (*cit)[3].get<double>()};
  }

  if (auto lit = j.find("label"); lit != j.end() && !lit->is_null()) {
    if (!lit->is_string()) throw SchemaError("label must be a string", path + ".label");
    auto lbl = label_from_string(lit->get<std::string>());
    if (!lbl) throw SchemaError("unknown label '" + lit->get<std::string>() + "'", path + ".label");
    node.label = lbl;
  }

  auto kit = j.find("children");
  if (kit == j.end()) throw SchemaError("missing required field 'children'", path);
  if (!kit->is_array()) throw SchemaError("children must be an array", path + ".children");
  node.children.reserve(kit->size());
  for (std::size_t i = 0; i < kit->size(); ++i)
    node.children.push_back(parse_node((*kit)[i], path + ".children[" + std::to_string(i) + "]"));
  return node;
}

void validate_node(const UINode& node, std::unordered_set<std::string>& seen) {
  if (!seen.insert(node.uuid).second)
    throw ValidationError("duplicate uuid '" + node.uuid + "'");
  if (!std::isfinite(node.frame.x) || !std::isfinite(node.frame.y) ||
      !std::isfinite(node.frame.w) || !std::isfinite(node.frame.h))
    throw ValidationError("non-finite frame on node '" + node.uuid + "'");
  if (node.frame.w < 0 || node.frame.h < 0)
    throw ValidationError("negative frame size on node '" + node.uuid + "'");
  if (node.color) {
    const Rgba& c = *node.color;
    for (double ch : {c.r, c.g, c.b, c.a})
      if (!(ch >= 0.0 && ch <= 255.0))
        throw ValidationError("color channel out of [0,255] on node '" + node.uuid + "'");
  }
  for (const UINode& child : node.children) validate_node(child, seen);
}

// --- canonical writer ---------------------------------------------------

void write_escaped(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

void write_number(std::string& out, double v) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

void write_node(std::string& out, const UINode& n) {
  out += "{\"children\":[";
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (i) out += ',';
    write_node(out, n.children[i]);
  }
  out += "],\"class\":";
  write_escaped(out, to_string(n.cls));
  out += ",\"color\":";
  if (n.color) {
    out += '[';
    write_number(out, n.color->r);
    out += ',';
    write_number(out, n.color->g);
    out += ',';
    write_number(out, n.color->b);
    out += ',';
    write_number(out, n.color->a);
    out += ']';
  } else {
    out += "null";
  }
  out += ",\"frame\":{\"h\":";
  write_number(out, n.frame.h);
  out += ",\"w\":";
  write_number(out, n.frame.w);
  out += ",\"x\":";
  write_number(out, n.frame.x);
  out += ",\"y\":";
  write_number(out, n.frame.y);
  out += '}';
  if (n.label) {
    out += ",\"label\":";
    write_escaped(out, to_string(*n.label));
  }
  out += ",\"name\":";
  write_escaped(out, n.name);
  out += ",\"uuid\":";
  write_escaped(out, n.uuid);
  out += '}';
}

// A node is structural if it has children or is declared a group; only the
// rest carry pixels and enter the element sequence.
bool is_container(const UINode& n) {
  return !n.children.empty() || n.cls == NodeClass::kGroup;
}

void collect_sequence(const UINode& node, bool in_merge, bool* merge_started,
                      ElementSequence& out) {
  if (!is_container(node)) {
    ElementRecord rec{node.uuid, node.cls, node.name, node.frame, node.color, node.label};
    if (!rec.label && in_merge) {
      rec.label = *merge_started ? Label::kMerge : Label::kStartMerge;
      *merge_started = true;
    }
    out.records.push_back(std::move(rec));
    return;
  }
  const bool opens_merge = !in_merge && node.name == kMergeMarker;
  bool started = false;
  for (const UINode& child : node.children)
    collect_sequence(child, in_merge || opens_merge,
                     opens_merge ? &started : merge_started, out);
}

// --- mutable tree for regrouping ----------------------------------------

struct MutNode {
  UINode data;  // children field unused here
  MutNode* parent = nullptr;
  std::vector<std::unique_ptr<MutNode>> children;
};

std::unique_ptr<MutNode> to_mut(const UINode& n, MutNode* parent) {
  auto m = std::make_unique<MutNode>();
  m->data = n;
  m->data.children.clear();
  m->parent = parent;
  for (const UINode& c : n.children) m->children.push_back(to_mut(c, m.get()));
  return m;
}

UINode to_value(const MutNode& m) {
  UINode n = m.data;
  n.children.clear();
  for (const auto& c : m.children) n.children.push_back(to_value(*c));
  return n;
}

bool mut_is_container(const MutNode& m) {
  return !m.children.empty() || m.data.cls == NodeClass::kGroup;
}

void collect_leaves(MutNode* node, std::vector<MutNode*>& out) {
  if (!mut_is_container(*node)) {
    out.push_back(node);
    return;
  }
  for (auto& c : node->children) collect_leaves(c.get(), out);
}

std::vector<MutNode*> ancestry(MutNode* n) {
  std::vector<MutNode*> chain;  // root..n
  for (MutNode* p = n; p; p = p->parent) chain.push_back(p);
  std::reverse(chain.begin(), chain.end());
  return chain;
}

MutNode* lowest_common_ancestor(const std::vector<MutNode*>& nodes) {
  auto chain = ancestry(nodes.front());
  std::size_t depth = chain.size();
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    auto other = ancestry(nodes[k]);
    std::size_t d = 0;
    while (d < depth && d < other.size() && chain[d] == other[d]) ++d;
    depth = d;
  }
  return chain[depth - 1];
}

// Direct child of `lca` whose subtree contains `n` (or n itself).
MutNode* child_toward(MutNode* lca, MutNode* n) {
  MutNode* cur = n;
  while (cur->parent != lca) cur = cur->parent;
  return cur;
}

std::size_t child_index(MutNode* parent, MutNode* child) {
  for (std::size_t i = 0; i < parent->children.size(); ++i)
    if (parent->children[i].get() == child) return i;
  throw LookupError("internal: child not found under parent");
}

std::unique_ptr<MutNode> detach_child(MutNode* parent, MutNode* child) {
  std::size_t i = child_index(parent, child);
  auto owned = std::move(parent->children[i]);
  parent->children.erase(parent->children.begin() + static_cast<std::ptrdiff_t>(i));
  return owned;
}

Frame bounding_box(const std::vector<MutNode*>& members) {
  double x0 = members.front()->data.frame.x, y0 = members.front()->data.frame.y;
  double x1 = x0 + members.front()->data.frame.w, y1 = y0 + members.front()->data.frame.h;
  for (MutNode* m : members) {
    const Frame& f = m->data.frame;
    x0 = std::min(x0, f.x);
    y0 = std::min(y0, f.y);
    x1 = std::max(x1, f.x + f.w);
    y1 = std::max(y1, f.y + f.h);
  }
  return Frame{x0, y0, x1 - x0, y1 - y0};
}

void apply_group(MutNode* root, const MergedGroup& group,
                 std::unordered_set<std::string>& used_uuids) {
  if (group.uuids.empty()) return;

  std::vector<MutNode*> leaves;
  collect_leaves(root, leaves);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < leaves.size(); ++i) pos[leaves[i]->data.uuid] = i;

  std::vector<MutNode*> members;
  members.reserve(group.uuids.size());
  std::size_t prev = 0;
  for (std::size_t k = 0; k < group.uuids.size(); ++k) {
    auto it = pos.find(group.uuids[k]);
    if (it == pos.end())
      throw LookupError("group member '" + group.uuids[k] + "' is not a leaf of the prototype");
    if (k > 0 && it->second != prev + 1)
      throw ContiguityError("group members are not contiguous in DFS order near '" +
                            group.uuids[k] + "'");
    prev = it->second;
    members.push_back(leaves[it->second]);
  }

  MutNode* lca = lowest_common_ancestor(members);
  if (lca == members.front()) throw LookupError("group member cannot be its own ancestor");

  // Record where the group sits among the LCA's children before surgery.
  std::unordered_map<MutNode*, std::size_t> orig_index;
  for (std::size_t i = 0; i < lca->children.size(); ++i)
    orig_index[lca->children[i].get()] = i;
  const std::size_t first_idx = orig_index.at(child_toward(lca, members.front()));

  auto merged = std::make_unique<MutNode>();
  std::string uuid = "merge:" + members.front()->data.uuid;
  while (used_uuids.count(uuid)) uuid += "+";
  used_uuids.insert(uuid);
  merged->data.uuid = uuid;
  merged->data.cls = NodeClass::kGroup;
  merged->data.name = kMergeMarker;
  merged->data.frame = bounding_box(members);

  for (MutNode* m : members) {
    MutNode* parent = m->parent;
    auto owned = detach_child(parent, m);
    owned->parent = merged.get();
    merged->children.push_back(std::move(owned));
    // Drop ancestors emptied by the move, up to (not including) the LCA.
    for (MutNode* cur = parent; cur != lca && cur->children.empty();) {
      MutNode* up = cur->parent;
      detach_child(up, cur);
      cur = up;
    }
  }

  // Insert before the first surviving child that originally came after the
  // member span; contiguity guarantees this restores the leaf order.
  std::size_t insert_at = lca->children.size();
  for (std::size_t i = 0; i < lca->children.size(); ++i) {
    auto it = orig_index.find(lca->children[i].get());
    if (it != orig_index.end() && it->second > first_idx) {
      insert_at = i;
      break;
    }
  }
  merged->parent = lca;
  lca->children.insert(lca->children.begin() + static_cast<std::ptrdiff_t>(insert_at),
                       std::move(merged));
}

void collect_uuids(const UINode& n, std::unordered_set<std::string>& out) {
  out.insert(n.uuid);
  for (const UINode& c : n.children) collect_uuids(c, out);
}

}  // namespace

DesignPrototype parse_prototype(const std::string& bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!doc.is_object()) throw SchemaError("document must be an object", "$");

  DesignPrototype proto;
  proto.id = require_string(doc, "id", "$");
  auto cit = doc.find("canvas");
  if (cit == doc.end()) throw SchemaError("missing required field 'canvas'", "$");
  proto.canvas_width = require_number(*cit, "width", "$.canvas");
  proto.canvas_height = require_number(*cit, "height", "$.canvas");
  auto rit = doc.find("root");
  if (rit == doc.end()) throw SchemaError("missing required field 'root'", "$");
  proto.root = parse_node(*rit, "$.root");

  if (!(proto.canvas_width > 0) || !(proto.canvas_height > 0) ||
      !std::isfinite(proto.canvas_width) || !std::isfinite(proto.canvas_height))
    throw ValidationError("canvas dimensions must be positive finite numbers");
  std::unordered_set<std::string> seen;
  validate_node(proto.root, seen);
  return proto;
}

std::string serialize_prototype(const DesignPrototype& proto) {
  std::string out;
  out.reserve(4096);
  out += "{\"canvas\":{\"height\":";
  write_number(out, proto.canvas_height);
  out += ",\"width\":";
  write_number(out, proto.canvas_width);
  out += "},\"id\":";
  write_escaped(out, proto.id);
  out += ",\"root\":";
  write_node(out, proto.root);
  out += '}';
  return out;
}

ElementSequence extract_sequence(const DesignPrototype& proto) {
  ElementSequence seq;
  collect_sequence(proto.root, false, nullptr, seq);
  return seq;
}

DesignPrototype regroup_hierarchy(const DesignPrototype& proto,
                                  const std::vector<MergedGroup>& groups) {
  auto root = to_mut(proto.root, nullptr);
  std::unordered_set<std::string> used;
  collect_uuids(proto.root, used);
  for (const MergedGroup& g : groups) apply_group(root.get(), g, used);

  DesignPrototype out = proto;
  out.root = to_value(*root);
  return out;
}

std::vector<StrataFlags> tag_strata(const DesignPrototype& proto) {
  ElementSequence seq = extract_sequence(proto);
  std::vector<StrataFlags> flags(seq.size());
  const auto& recs = seq.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const Frame& f = recs[i].frame;
    flags[i].tiny = f.w < 32.0 && f.h < 32.0;
  }
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const Frame& a = recs[i].frame;
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      const Frame& b = recs[j].frame;
      const bool positive_area = a.x < b.x + b.w && b.x < a.x + a.w &&
                                 a.y < b.y + b.h && b.y < a.y + a.h;
      if (positive_area) {
        flags[i].overlapping = true;
        flags[j].overlapping = true;
      }
    }
  }
  return flags;
}

}  // namespace uigroup

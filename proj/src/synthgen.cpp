#include "uigroup/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "uigroup/parallel.hpp"
#include "uigroup/rng.hpp"

namespace uigroup {

namespace fs = std::filesystem;
using nlohmann::json;

void GenConfig::validate() const {
  if (n_prototypes < 1) throw ConfigError("n_prototypes must be >= 1");
  if (elements_min < 1 || elements_min > elements_max)
    throw ConfigError("elements_per_prototype range is empty");
  if (group_count_min < 0 || group_count_min > group_count_max)
    throw ConfigError("group_count range is empty");
  if (group_size_min < 2) throw ConfigError("group_size must be >= 2");
  if (group_size_min > group_size_max) throw ConfigError("group_size range is empty");
  if (group_size_min > elements_max)
    throw ConfigError("group_size exceeds elements_per_prototype");
  for (double f : {tiny_fraction, overlap_fraction})
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fractions must be in [0,1]");
  if (!(target_merge_ratio > 0.0)) throw ConfigError("target_merge_ratio must be positive");
}

namespace {

enum class Archetype { kIcon, kDecoration, kBackground };

struct GroupPlan {
  int size = 0;
  Archetype archetype = Archetype::kIcon;
};

struct ProtoPlan {
  int n_elements = 0;
  std::vector<GroupPlan> groups;
  int merged() const {
    int m = 0;
    for (const auto& g : groups) m += g.size;
    return m;
  }
};

// Greedy controller: per prototype, pick the group count (within the config
// range) that keeps the running merged:non-merged ratio closest to target.
std::vector<ProtoPlan> make_plans(const GenConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, 0xA11CE));
  std::vector<ProtoPlan> plans(static_cast<std::size_t>(cfg.n_prototypes));
  double merged_tot = 0, non_tot = 0;
  const double avg_size = (cfg.group_size_min + cfg.group_size_max) / 2.0;

  for (auto& plan : plans) {
    plan.n_elements = static_cast<int>(rng.uniform_int(cfg.elements_min, cfg.elements_max));
    const int budget = plan.n_elements - 2;  // keep a couple of plain elements

    int best_g = cfg.group_count_min;
    double best_score = 1e300;
    for (int g = cfg.group_count_min; g <= cfg.group_count_max; ++g) {
      if (g * cfg.group_size_min > budget && g > 0) break;
      const double m = std::min<double>(g * avg_size, budget);
      const double ratio = (merged_tot + m) / std::max(1.0, non_tot + plan.n_elements - m);
      const double score = std::abs(ratio - cfg.target_merge_ratio);
      if (score < best_score) {
        best_score = score;
        best_g = g;
      }
    }

    int used = 0;
    for (int k = 0; k < best_g; ++k) {
      int size = static_cast<int>(rng.uniform_int(cfg.group_size_min, cfg.group_size_max));
      if (used + size > budget) size = budget - used;
      if (size < cfg.group_size_min) break;
      used += size;
      GroupPlan gp;
      gp.size = size;
      gp.archetype = rng.bernoulli(0.5) ? Archetype::kIcon : Archetype::kDecoration;
      plan.groups.push_back(gp);
    }
    if (!plan.groups.empty() && rng.bernoulli(cfg.overlap_fraction))
      plan.groups.front().archetype = Archetype::kBackground;

    merged_tot += plan.merged();
    non_tot += plan.n_elements - plan.merged();
  }

  // Guarantee the overlap stratum exists whenever it was requested.
  if (cfg.overlap_fraction > 0.0) {
    const bool has_bg = std::any_of(plans.begin(), plans.end(), [](const ProtoPlan& p) {
      return !p.groups.empty() && p.groups.front().archetype == Archetype::kBackground;
    });
    if (!has_bg)
      for (auto& p : plans)
        if (!p.groups.empty()) {
          p.groups.front().archetype = Archetype::kBackground;
          break;
        }
  }
  return plans;
}

const char* kSectionNames[] = {"header", "content", "list", "card", "footer", "banner", "toolbar"};
const char* kShapeNames[] = {"path", "rectangle", "oval", "shape", "fill", "star", "line", "vector", "polygon"};
const char* kWidgetNames[] = {"status bar", "button", "search bar", "tab bar", "avatar", "banner image",
                              "divider", "input field", "photo", "list item", "badge", "toggle", "slider"};
const char* kTextNames[] = {"title", "price", "label", "caption", "subtitle", "nav title"};
const char* kClusterNames[] = {"icon", "decoration", "background", "combined shape", "group"};

template <std::size_t N>
std::string pick(Rng& rng, const char* const (&pool)[N]) {
  return pool[rng.uniform_int(0, static_cast<std::int64_t>(N) - 1)];
}

std::string maybe_numbered(Rng& rng, std::string base) {
  if (rng.bernoulli(0.6)) base += " " + std::to_string(rng.uniform_int(1, 9));
  return base;
}

Rgba random_color(Rng& rng) {
  return Rgba{static_cast<double>(rng.uniform_int(30, 225)),
              static_cast<double>(rng.uniform_int(30, 225)),
              static_cast<double>(rng.uniform_int(30, 225)),
              rng.bernoulli(0.1) ? static_cast<double>(rng.uniform_int(128, 255)) : 255.0};
}

Rgba jitter_color(Rng& rng, const Rgba& base) {
  auto j = [&](double v) {
    return std::clamp(v + static_cast<double>(rng.uniform_int(-30, 30)), 0.0, 255.0);
  };
  return Rgba{j(base.r), j(base.g), j(base.b), 255.0};
}

// Row-flow placement across vertical section bands.
struct Layout {
  struct Section {
    std::size_t node;  // index into root.children
    double x0, y0, w, h;
    double cx, cy, row_h;
  };
  std::vector<Section> sections;
  std::size_t current = 0;
  static constexpr double kPad = 6;

  Frame place(double w, double h) {
    Section* s = &sections[current];
    if (s->cx + w > s->x0 + s->w) {  // wrap to the next row
      s->cx = s->x0;
      s->cy += s->row_h + kPad;
      s->row_h = 0;
    }
    if (s->cy + h > s->y0 + s->h && current + 1 < sections.size()) {
      ++current;
      s = &sections[current];
    }
    Frame f{s->cx, s->cy, w, h};
    s->cx += w + kPad;
    s->row_h = std::max(s->row_h, h);
    return f;
  }

  Section& section_of_current() { return sections[current]; }
};

UINode make_widget(Rng& rng, const GenConfig& cfg, const std::string& uuid) {
  UINode node;
  node.uuid = uuid;
  node.label = Label::kNonMerge;

  const double u = rng.uniform();
  if (u < 0.30) {
    node.cls = NodeClass::kText;
    node.name = pick(rng, kTextNames);
  } else if (u < 0.60) {
    node.cls = NodeClass::kRectangle;
    node.name = pick(rng, kWidgetNames);
  } else if (u < 0.80) {
    node.cls = NodeClass::kBitmap;
    node.name = pick(rng, kWidgetNames);
  } else {
    node.cls = NodeClass::kOval;
    node.name = pick(rng, kWidgetNames);
  }
  // A slice of plain elements carries shape-like names, so the text modality
  // alone cannot solve the task.
  if (node.cls != NodeClass::kText && rng.bernoulli(0.15))
    node.name = maybe_numbered(rng, pick(rng, kShapeNames));

  if (rng.bernoulli(cfg.tiny_fraction)) {
    node.frame.w = static_cast<double>(rng.uniform_int(8, 31));
    node.frame.h = static_cast<double>(rng.uniform_int(8, 31));
  } else {
    node.frame.w = static_cast<double>(rng.uniform_int(36, 140));
    node.frame.h = static_cast<double>(rng.uniform_int(14, 64));
  }
  if (rng.bernoulli(0.8)) node.color = random_color(rng);
  return node;
}

std::vector<UINode> make_members(Rng& rng, const GroupPlan& plan, const Frame& box,
                                 const std::string& uuid_prefix) {
  std::vector<UINode> members;
  const Rgba base = random_color(rng);
  for (int k = 0; k < plan.size; ++k) {
    UINode m;
    m.uuid = uuid_prefix + "-m" + std::to_string(k);
    m.label = k == 0 ? Label::kStartMerge : Label::kMerge;
    const double v = rng.uniform();
    m.cls = v < 0.4 ? NodeClass::kPath : (v < 0.75 ? NodeClass::kOval : NodeClass::kRectangle);
    m.name = maybe_numbered(rng, pick(rng, kShapeNames));
    if (!rng.bernoulli(0.15)) m.color = jitter_color(rng, base);

    if (plan.archetype == Archetype::kBackground) {
      // Large stacked shapes jittered around the same big box.
      const double jw = box.w * rng.uniform(0.7, 1.0), jh = box.h * rng.uniform(0.7, 1.0);
      m.frame = Frame{std::round(box.x + rng.uniform(0, box.w - jw)),
                      std::round(box.y + rng.uniform(0, box.h - jh)), std::round(jw),
                      std::round(jh)};
    } else {
      const double side = std::min(box.w, box.h);
      const double mw = std::round(rng.uniform(side / 4.0, side * 0.67));
      const double mh = std::round(rng.uniform(side / 4.0, side * 0.67));
      m.frame = Frame{std::round(box.x + rng.uniform(0, box.w - mw)),
                      std::round(box.y + rng.uniform(0, box.h - mh)), mw, mh};
    }
    members.push_back(std::move(m));
  }
  return members;
}

DesignPrototype gen_prototype(const GenConfig& cfg, const ProtoPlan& plan, int idx) {
  Rng rng(Rng::mix(cfg.seed, 0xC0DE0000ULL + static_cast<std::uint64_t>(idx)));

  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "proto-%04d", idx);
  DesignPrototype proto;
  proto.id = idbuf;
  proto.canvas_width = static_cast<double>(rng.uniform_int(320, 420));
  proto.canvas_height = static_cast<double>(rng.uniform_int(568, 896));

  proto.root.uuid = proto.id + std::string("-root");
  proto.root.cls = NodeClass::kGroup;
  proto.root.name = "screen";
  proto.root.frame = Frame{0, 0, proto.canvas_width, proto.canvas_height};

  const int n_sections = static_cast<int>(rng.uniform_int(2, 4));
  Layout layout;
  double y = 0;
  for (int s = 0; s < n_sections; ++s) {
    const double h = std::round(proto.canvas_height / n_sections * rng.uniform(0.8, 1.2));
    UINode section;
    section.uuid = proto.id + std::string("-s") + std::to_string(s);
    section.cls = NodeClass::kGroup;
    section.name = kSectionNames[s % std::size(kSectionNames)];
    section.frame = Frame{8, y, proto.canvas_width - 16, h};
    proto.root.children.push_back(std::move(section));
    layout.sections.push_back({static_cast<std::size_t>(s), 8, y, proto.canvas_width - 16, h,
                               8, y, 0});
    y += h + 4;
  }

  // Interleave group clusters among plain widgets.
  const int n_widgets = plan.n_elements - plan.merged();
  std::vector<int> slots;  // -1 = widget, otherwise group index
  for (int i = 0; i < n_widgets; ++i) slots.push_back(-1);
  for (std::size_t g = 0; g < plan.groups.size(); ++g)
    slots.insert(slots.begin() + rng.uniform_int(0, static_cast<std::int64_t>(slots.size())),
                 static_cast<int>(g));

  int widget_no = 0;
  int pending_foreground = 0;
  Frame bg_box{};
  for (int slot : slots) {
    Layout::Section& sec = layout.section_of_current();
    UINode& host = proto.root.children[sec.node];

    if (slot < 0) {
      UINode w = make_widget(rng, cfg, proto.id + std::string("-w") + std::to_string(widget_no++));
      if (pending_foreground > 0) {
        // Foreground widget sits inside the background cluster's box.
        w.frame.x = std::round(bg_box.x + rng.uniform(0, std::max(1.0, bg_box.w - w.frame.w)));
        w.frame.y = std::round(bg_box.y + rng.uniform(0, std::max(1.0, bg_box.h - w.frame.h)));
        --pending_foreground;
      } else {
        const Frame f = layout.place(w.frame.w, w.frame.h);
        w.frame.x = f.x;
        w.frame.y = f.y;
      }
      proto.root.children[sec.node].children.push_back(std::move(w));
      continue;
    }

    const GroupPlan& gp = plan.groups[static_cast<std::size_t>(slot)];
    const std::string prefix = proto.id + std::string("-g") + std::to_string(slot);
    Frame box;
    if (gp.archetype == Archetype::kBackground) {
      box = Frame{sec.x0, sec.y0, std::round(sec.w * rng.uniform(0.6, 0.95)),
                  std::round(sec.h * rng.uniform(0.5, 0.9))};
      bg_box = box;
      pending_foreground = static_cast<int>(rng.uniform_int(1, 3));
    } else {
      const double side = gp.archetype == Archetype::kIcon ? rng.uniform_int(24, 48)
                                                           : rng.uniform_int(40, 90);
      box = layout.place(side, side);
    }
    std::vector<UINode> members = make_members(rng, gp, box, prefix);

    if (rng.bernoulli(0.5)) {
      // Wrapped: members live under their own container node.
      UINode wrap;
      wrap.uuid = prefix;
      wrap.cls = NodeClass::kGroup;
      wrap.name = maybe_numbered(rng, pick(rng, kClusterNames));
      wrap.frame = box;
      wrap.children = std::move(members);
      host.children.push_back(std::move(wrap));
    } else {
      for (auto& m : members) host.children.push_back(std::move(m));
    }
  }
  return proto;
}

void put_u32le(std::string& out, std::uint32_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
  out += static_cast<char>((v >> 16) & 0xff);
  out += static_cast<char>((v >> 24) & 0xff);
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json counts_to_json(const LabelCounts& c) {
  return json{{"start-merge", c[0]}, {"merge", c[1]}, {"non-merge", c[2]}};
}

LabelCounts counts_from_json(const json& j) {
  return LabelCounts{j.at("start-merge").get<std::int64_t>(),
                     j.at("merge").get<std::int64_t>(),
                     j.at("non-merge").get<std::int64_t>()};
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

LabelCounts count_labels(const DesignPrototype& proto) {
  LabelCounts counts{0, 0, 0};
  for (const ElementRecord& rec : extract_sequence(proto).records)
    ++counts[static_cast<std::size_t>(rec.label.value_or(Label::kNonMerge))];
  return counts;
}

void write_element_images(const DesignPrototype& proto, const fs::path& stem) {
  const ElementSequence seq = extract_sequence(proto);
  std::string blob;
  blob.reserve(seq.size() * Image64::kFloats * 4);
  json entries = json::object();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const ElementRecord& rec = seq.records[i];
    UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, rec.label, {}};
    const Image64 img = rasterize_element(leaf);
    for (float v : img.data) put_u32le(blob, std::bit_cast<std::uint32_t>(v));
    entries[rec.uuid] = i;
  }
  const fs::path bin = stem.string() + ".images.bin";
  const fs::path idx = stem.string() + ".images.json";
  write_file(bin, blob);
  json index{{"blob", bin.filename().string()}, {"count", seq.size()}, {"entries", entries}};
  write_file(idx, index.dump());
}

bool has_element_images(const fs::path& stem) {
  return fs::exists(stem.string() + ".images.json");
}

std::unordered_map<std::string, Image64> load_element_images(const fs::path& stem) {
  const fs::path idx_path = stem.string() + ".images.json";
  json index;
  try {
    index = json::parse(read_file(idx_path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad image index: ") + e.what(), e.byte);
  }
  const fs::path bin_path = stem.parent_path() / index.at("blob").get<std::string>();
  const std::string blob = read_file(bin_path);
  constexpr std::size_t kRecordBytes = Image64::kFloats * 4;

  std::unordered_map<std::string, Image64> images;
  for (const auto& [uuid, idx] : index.at("entries").items()) {
    const std::size_t i = idx.get<std::size_t>();
    if ((i + 1) * kRecordBytes > blob.size())
      throw IntegrityError("image blob truncated for '" + uuid + "'");
    Image64 img;
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(blob.data()) + i * kRecordBytes;
    for (int k = 0; k < Image64::kFloats; ++k)
      img.data[static_cast<std::size_t>(k)] = std::bit_cast<float>(get_u32le(p + 4 * k));
    images.emplace(uuid, std::move(img));
  }
  return images;
}

DatasetManifest generate_dataset(const GenConfig& config, const fs::path& out_dir, int threads) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "'");

  const std::vector<ProtoPlan> plans = make_plans(config);
  std::vector<std::string> files(plans.size());
  std::vector<LabelCounts> per_file(plans.size());

  parallel_for(static_cast<std::int64_t>(plans.size()), threads, [&](std::int64_t i) {
    const DesignPrototype proto =
        gen_prototype(config, plans[static_cast<std::size_t>(i)], static_cast<int>(i));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "proto_%04d", static_cast<int>(i));
    const fs::path stem = out_dir / buf;
    write_file(stem.string() + ".json", serialize_prototype(proto));
    write_element_images(proto, stem);
    files[static_cast<std::size_t>(i)] = std::string(buf) + ".json";
    per_file[static_cast<std::size_t>(i)] = count_labels(proto);
  });

  DatasetManifest manifest;
  manifest.seed = config.seed;
  manifest.splits["train"] = files;
  manifest.splits["val"] = {};
  manifest.splits["test"] = {};
  LabelCounts total{0, 0, 0};
  for (const auto& c : per_file)
    for (int k = 0; k < kNumLabels; ++k) total[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
  manifest.counts["train"] = total;
  manifest.counts["val"] = LabelCounts{0, 0, 0};
  manifest.counts["test"] = LabelCounts{0, 0, 0};
  return manifest;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, std::array<int, 3> ratios,
                              std::uint64_t seed, const fs::path& base_dir) {
  std::vector<std::string> files;
  for (const char* split : {"train", "val", "test"}) {
    auto it = manifest.splits.find(split);
    if (it != manifest.splits.end())
      files.insert(files.end(), it->second.begin(), it->second.end());
  }
  const std::size_t n = files.size();
  if (n < 3) throw SplitError("need at least 3 files to form train/val/test");
  int ratio_sum = 0;
  for (int r : ratios) {
    if (r < 0) throw SplitError("split ratios must be non-negative");
    ratio_sum += r;
  }
  if (ratio_sum <= 0) throw SplitError("split ratios sum to zero");

  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(files[i], files[j]);
  }

  // Proportional allocation, largest remainder first, every split non-empty.
  std::array<std::size_t, 3> alloc{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * ratios[static_cast<std::size_t>(k)] / ratio_sum;
    alloc[static_cast<std::size_t>(k)] = static_cast<std::size_t>(exact);
    frac[static_cast<std::size_t>(k)] = exact - std::floor(exact);
    assigned += alloc[static_cast<std::size_t>(k)];
  }
  while (assigned < n) {
    const std::size_t k = static_cast<std::size_t>(
        std::max_element(frac.begin(), frac.end()) - frac.begin());
    ++alloc[k];
    frac[k] = -1;
    ++assigned;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    while (alloc[k] == 0) {
      const std::size_t big = static_cast<std::size_t>(
          std::max_element(alloc.begin(), alloc.end()) - alloc.begin());
      --alloc[big];
      ++alloc[k];
    }
  }

  DatasetManifest out;
  out.seed = seed;
  const char* names[3] = {"train", "val", "test"};
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<std::string> part(files.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  files.begin() + static_cast<std::ptrdiff_t>(cursor + alloc[k]));
    cursor += alloc[k];
    LabelCounts counts{0, 0, 0};
    for (const std::string& rel : part) {
      const DesignPrototype proto = parse_prototype(read_file(base_dir / rel));
      const LabelCounts c = count_labels(proto);
      for (int j = 0; j < kNumLabels; ++j) counts[static_cast<std::size_t>(j)] += c[static_cast<std::size_t>(j)];
    }
    out.splits[names[k]] = std::move(part);
    out.counts[names[k]] = counts;
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json splits = json::object(), counts = json::object();
  for (const auto& [name, list] : manifest.splits) splits[name] = list;
  for (const auto& [name, c] : manifest.counts) counts[name] = counts_to_json(c);
  const json doc{{"seed", manifest.seed}, {"splits", splits}, {"counts", counts}};
  write_file(path, doc.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), e.byte);
  }
  DatasetManifest manifest;
  try {
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& [name, list] : doc.at("splits").items())
      manifest.splits[name] = list.get<std::vector<std::string>>();
    for (const auto& [name, c] : doc.at("counts").items())
      manifest.counts[name] = counts_from_json(c);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad manifest: ") + e.what(), "$");
  }
  // A file must not appear in two splits.
  std::vector<std::string> all;
  for (const auto& [name, list] : manifest.splits)
    all.insert(all.end(), list.begin(), list.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end())
    throw ValidationError("manifest splits are not disjoint");
  return manifest;
}

}  // namespace uigroup

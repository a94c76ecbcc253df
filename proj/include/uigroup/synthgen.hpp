#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "uigroup/prototype.hpp"
#include "uigroup/raster.hpp"

namespace uigroup {

struct GenConfig {
  int n_prototypes = 400;
  int elements_min = 10;  // leaves per prototype
  int elements_max = 18;
  int group_count_min = 0;
  int group_count_max = 3;
  int group_size_min = 2;
  int group_size_max = 5;
  double tiny_fraction = 0.3;
  double overlap_fraction = 0.25;
  double target_merge_ratio = 0.125;  // merged : non-merged elements
  std::uint64_t seed = 1;

  void validate() const;
};

// Label counts are always ordered start-merge, merge, non-merge.
using LabelCounts = std::array<std::int64_t, kNumLabels>;

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<std::string>> splits;  // name -> relative paths
  std::map<std::string, LabelCounts> counts;
};

// Writes prototype files (plus per-element image sidecars) into out_dir and
// returns a manifest with every file under the "train" split. Deterministic:
// the same config yields byte-identical files and manifest.
DatasetManifest generate_dataset(const GenConfig& config,
                                 const std::filesystem::path& out_dir,
                                 int threads = 1);

// File-wise shuffled re-split. base_dir resolves the manifest's relative
// paths so per-split label counts can be recomputed.
DatasetManifest split_dataset(const DatasetManifest& manifest,
                              std::array<int, 3> ratios, std::uint64_t seed,
                              const std::filesystem::path& base_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

LabelCounts count_labels(const DesignPrototype& proto);

// Sidecar image store: <stem>.images.bin holds little-endian float32 blobs of
// length 3*64*64 in sequence order, <stem>.images.json maps uuid -> record
// index.
void write_element_images(const DesignPrototype& proto, const std::filesystem::path& stem);
std::unordered_map<std::string, Image64> load_element_images(const std::filesystem::path& stem);
bool has_element_images(const std::filesystem::path& stem);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace uigroup

#pragma once

// Dataset loading, class weighting, the training loop, and classification
// evaluation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uigroup/checkpoint.hpp"
#include "uigroup/model.hpp"
#include "uigroup/synthgen.hpp"

namespace uigroup {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;  // prototypes per step
  double lr = 1e-4;
  int lr_drop_epoch = 40;  // epochs beyond this run at lr/10
  double l2_lambda = 1e-5;
  std::uint64_t seed = 1;
  EmbedConfig embed;
  EncoderConfig encoder;
  Modalities modalities;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (lr_drop_epoch < 1 || lr_drop_epoch > epochs)
      throw ConfigError("lr_drop_epoch must lie within [1, epochs]");
    if (!(l2_lambda >= 0)) throw ConfigError("l2_lambda must be non-negative");
    embed.validate();
    encoder.validate();
    if (embed.d != encoder.d) throw ConfigError("embedding dim and encoder dim must match");
  }
};

// One prototype, fully prepared for the model.
struct TrainExample {
  std::string path;  // manifest-relative
  DesignPrototype proto;
  ElementSequence seq;
  std::vector<int> targets;      // label ids, absent labels count as non-merge
  std::vector<TensorF> images;   // [3,64,64] constants; empty when images unused
  std::vector<StrataFlags> strata;
};

// Loads one split. Images come from the sidecar blobs when present and are
// rasterized on the fly otherwise; pass with_images=false to skip both.
std::vector<TrainExample> load_split(const DatasetManifest& manifest, const std::string& split,
                                     const std::filesystem::path& base_dir, bool with_images);

// w_c = n_total / (3 * n_c). All counts must be positive.
std::array<double, kNumLabels> compute_class_weights(const LabelCounts& counts);

struct ClassificationReport {
  struct PerClass {
    double precision = 0, recall = 0, f1 = 0;
    std::int64_t support = 0;
  };
  std::array<std::array<std::int64_t, kNumLabels>, kNumLabels> confusion{};  // [truth][pred]
  std::array<PerClass, kNumLabels> per_class{};
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double accuracy = 0;
};

ClassificationReport report_from_confusion(
    const std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>& confusion);

// Eval-mode argmax labels for one example.
std::vector<int> predict_labels(ModelF& model, const TrainExample& ex);

ClassificationReport evaluate_classification(ModelF& model,
                                             const std::vector<TrainExample>& examples,
                                             int threads = 1);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> val_macro_f1;
  double lr = 0;
};

struct TrainResult {
  Checkpoint checkpoint;  // best-validation parameters (last epoch if no val split)
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config,
                  const std::filesystem::path& base_dir);

// Model <-> checkpoint bridging.
Checkpoint checkpoint_from_model(ModelF& model, const TrainConfig& config,
                                 const std::string& meta_json);
ModelF model_from_checkpoint(const Checkpoint& ckpt);
TrainConfig train_config_from_checkpoint(const Checkpoint& ckpt);

}  // namespace uigroup

#include "uigroup/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uigroup/config_json.hpp"
#include "uigroup/parallel.hpp"

namespace uigroup {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<TrainExample> load_split(const DatasetManifest& manifest, const std::string& split,
                                     const fs::path& base_dir, bool with_images) {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) throw DataError("manifest has no split '" + split + "'");

  std::vector<TrainExample> examples;
  examples.reserve(it->second.size());
  for (const std::string& rel : it->second) {
    TrainExample ex;
    ex.path = rel;
    ex.proto = parse_prototype(read_file(base_dir / rel));
    ex.seq = extract_sequence(ex.proto);
    ex.strata = tag_strata(ex.proto);
    ex.targets.reserve(ex.seq.size());
    for (const ElementRecord& rec : ex.seq.records)
      ex.targets.push_back(static_cast<int>(rec.label.value_or(Label::kNonMerge)));

    if (with_images) {
      fs::path stem = base_dir / rel;
      stem.replace_extension();
      std::unordered_map<std::string, Image64> sidecar;
      if (has_element_images(stem)) sidecar = load_element_images(stem);
      ex.images.reserve(ex.seq.size());
      for (const ElementRecord& rec : ex.seq.records) {
        auto found = sidecar.find(rec.uuid);
        if (found != sidecar.end()) {
          ex.images.push_back(image_to_tensor<float>(found->second));
        } else {
          UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, rec.label, {}};
          ex.images.push_back(image_to_tensor<float>(rasterize_element(leaf)));
        }
      }
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::array<double, kNumLabels> compute_class_weights(const LabelCounts& counts) {
  std::int64_t total = 0;
  for (std::int64_t c : counts) {
    if (c <= 0) throw DataError("class weights need a positive count for every class");
    total += c;
  }
  std::array<double, kNumLabels> weights{};
  for (std::size_t k = 0; k < kNumLabels; ++k)
    weights[k] = static_cast<double>(total) / (3.0 * static_cast<double>(counts[k]));
  return weights;
}

ClassificationReport report_from_confusion(
    const std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>& confusion) {
  ClassificationReport rep;
  rep.confusion = confusion;
  std::int64_t total = 0, correct = 0;
  std::array<std::int64_t, kNumLabels> pred_totals{};
  for (std::size_t t = 0; t < kNumLabels; ++t)
    for (std::size_t p = 0; p < kNumLabels; ++p) {
      total += confusion[t][p];
      pred_totals[p] += confusion[t][p];
      if (t == p) correct += confusion[t][p];
    }

  double support_sum = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& pc = rep.per_class[c];
    const std::int64_t tp = confusion[c][c];
    pc.support = std::accumulate(confusion[c].begin(), confusion[c].end(), std::int64_t{0});
    pc.precision = pred_totals[c] > 0 ? static_cast<double>(tp) / static_cast<double>(pred_totals[c]) : 0.0;
    pc.recall = pc.support > 0 ? static_cast<double>(tp) / static_cast<double>(pc.support) : 0.0;
    pc.f1 = pc.precision + pc.recall > 0
                ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0.0;
    rep.macro_precision += pc.precision / kNumLabels;
    rep.macro_recall += pc.recall / kNumLabels;
    rep.macro_f1 += pc.f1 / kNumLabels;
    rep.weighted_precision += pc.precision * static_cast<double>(pc.support);
    rep.weighted_recall += pc.recall * static_cast<double>(pc.support);
    rep.weighted_f1 += pc.f1 * static_cast<double>(pc.support);
    support_sum += static_cast<double>(pc.support);
  }
  if (support_sum > 0) {
    rep.weighted_precision /= support_sum;
    rep.weighted_recall /= support_sum;
    rep.weighted_f1 /= support_sum;
  }
  rep.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return rep;
}

std::vector<int> predict_labels(ModelF& model, const TrainExample& ex) {
  NoGradGuard no_grad;
  FwdCtx<float> ctx;  // eval: no dropout
  const TensorF logits = model.forward_logits(ex.seq, ex.images, ex.proto.canvas_width,
                                              ex.proto.canvas_height, ctx);
  std::vector<int> labels(ex.seq.size());
  for (std::size_t i = 0; i < ex.seq.size(); ++i) {
    int best = 0;
    for (int k = 1; k < kNumLabels; ++k)
      if (logits.at(static_cast<std::int64_t>(i), k) > logits.at(static_cast<std::int64_t>(i), best))
        best = k;
    labels[i] = best;
  }
  return labels;
}

ClassificationReport evaluate_classification(ModelF& model,
                                             const std::vector<TrainExample>& examples,
                                             int threads) {
  if (examples.empty()) throw DataError("cannot evaluate an empty split");
  std::vector<std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>> partial(
      examples.size());
  parallel_for(static_cast<std::int64_t>(examples.size()), threads, [&](std::int64_t i) {
    auto& conf = partial[static_cast<std::size_t>(i)];
    for (auto& row : conf) row.fill(0);
    const TrainExample& ex = examples[static_cast<std::size_t>(i)];
    const std::vector<int> pred = predict_labels(model, ex);
    for (std::size_t e = 0; e < pred.size(); ++e)
      ++conf[static_cast<std::size_t>(ex.targets[e])][static_cast<std::size_t>(pred[e])];
  });

  std::array<std::array<std::int64_t, kNumLabels>, kNumLabels> confusion{};
  for (const auto& conf : partial)
    for (std::size_t t = 0; t < kNumLabels; ++t)
      for (std::size_t p = 0; p < kNumLabels; ++p) confusion[t][p] += conf[t][p];
  return report_from_confusion(confusion);
}

namespace {

LabelCounts count_targets(const std::vector<TrainExample>& examples) {
  LabelCounts counts{0, 0, 0};
  for (const TrainExample& ex : examples)
    for (int t : ex.targets) ++counts[static_cast<std::size_t>(t)];
  return counts;
}

std::vector<std::vector<float>> snapshot_values(ModelF& model) {
  std::vector<std::vector<float>> snap;
  for (auto& t : model.parameters()) snap.push_back(t.value());
  return snap;
}

void restore_values(ModelF& model, const std::vector<std::vector<float>>& snap) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].raw_value() = snap[i];
}

}  // namespace

Checkpoint checkpoint_from_model(ModelF& model, const TrainConfig& config,
                                 const std::string& meta_json) {
  Checkpoint ckpt;
  const json doc{{"meta", meta_json.empty() ? json::object() : json::parse(meta_json)},
                 {"train", config}};
  ckpt.config_json = doc.dump();
  for (auto& [name, tensor] : model.named_parameters())
    ckpt.params.emplace_back(name, TensorF::from(tensor.shape(), tensor.value()));
  return ckpt;
}

TrainConfig train_config_from_checkpoint(const Checkpoint& ckpt) {
  try {
    const json doc = json::parse(ckpt.config_json);
    return doc.at("train").get<TrainConfig>();
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("bad checkpoint config: ") + e.what());
  }
}

ModelF model_from_checkpoint(const Checkpoint& ckpt) {
  const TrainConfig config = train_config_from_checkpoint(ckpt);
  config.validate();
  Rng rng(Rng::mix(config.seed, 1));
  ModelF model = ModelF::init(config.embed, config.encoder, config.modalities, rng);

  auto named = model.named_parameters();
  std::unordered_map<std::string, TensorF*> by_name;
  std::vector<TensorF> holders;
  holders.reserve(named.size());
  for (auto& [name, tensor] : named) {
    holders.push_back(tensor);
    by_name[name] = &holders.back();
  }

  std::size_t matched = 0;
  for (const auto& [name, stored] : ckpt.params) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointFormatError("checkpoint parameter '" + name + "' not in model");
    if (it->second->shape() != stored.shape())
      throw CheckpointFormatError("checkpoint parameter '" + name + "' has shape " +
                                  shape_str(stored.shape()) + ", expected " +
                                  shape_str(it->second->shape()));
    it->second->raw_value() = stored.value();
    ++matched;
  }
  if (matched != named.size())
    throw CheckpointFormatError("checkpoint is missing model parameters");
  return model;
}

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config,
                  const fs::path& base_dir) {
  config.validate();
  std::vector<TrainExample> train_ex =
      load_split(manifest, "train", base_dir, config.modalities.image);
  if (train_ex.empty()) throw DataError("train split is empty");
  std::vector<TrainExample> val_ex;
  if (manifest.splits.count("val"))
    val_ex = load_split(manifest, "val", base_dir, config.modalities.image);

  const LabelCounts counts = count_targets(train_ex);
  const std::array<double, kNumLabels> weights_d = compute_class_weights(counts);
  const std::vector<float> weights(weights_d.begin(), weights_d.end());

  Rng root(config.seed);
  Rng model_rng = root.fork(1);
  Rng shuffle_rng = root.fork(2);
  Rng dropout_rng = root.fork(3);

  ModelF model = ModelF::init(config.embed, config.encoder, config.modalities, model_rng);
  std::vector<TensorF> params = model.parameters();
  AdamState<float> adam;
  adam.lr = static_cast<float>(config.lr);
  adam.l2_lambda = static_cast<float>(config.l2_lambda);
  adam.init(params);

  FwdCtx<float> train_ctx;
  train_ctx.training = true;
  train_ctx.dropout_p = static_cast<float>(config.encoder.dropout);
  train_ctx.rng = &dropout_rng;

  TrainResult result;
  std::vector<std::vector<float>> best_snapshot = snapshot_values(model);
  double best_val = -1.0;
  int best_epoch = 0;
  double final_loss = 0;

  std::vector<std::size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    adam.lr = static_cast<float>(epoch > config.lr_drop_epoch ? config.lr / 10.0 : config.lr);

    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        model.zero_grad();

        std::vector<TensorF> batch_logits;
        std::vector<int> batch_targets;
        for (std::size_t k = start; k < end; ++k) {
          const TrainExample& ex = train_ex[order[k]];
          if (ex.seq.empty()) continue;
          batch_logits.push_back(model.forward_logits(ex.seq, ex.images, ex.proto.canvas_width,
                                                      ex.proto.canvas_height, train_ctx));
          batch_targets.insert(batch_targets.end(), ex.targets.begin(), ex.targets.end());
        }
        if (batch_logits.empty()) continue;

        // One weighted mean across every element in the batch.
        const TensorF loss =
            weighted_cross_entropy(concat_rows(batch_logits), batch_targets, weights);
        if (!std::isfinite(loss.item()))
          throw DivergedError("training loss is not finite", epoch);
        backward(loss);
        adam_step(params, adam);
        loss_sum += static_cast<double>(loss.item());
        ++batches;
      }
    } catch (const NonFiniteError& e) {
      throw DivergedError(std::string("training diverged: ") + e.what(), epoch);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    log.lr = adam.lr;
    final_loss = log.train_loss;
    if (!val_ex.empty()) {
      const ClassificationReport rep = evaluate_classification(model, val_ex);
      log.val_macro_f1 = rep.macro_f1;
      if (rep.macro_f1 > best_val) {
        best_val = rep.macro_f1;
        best_epoch = epoch;
        best_snapshot = snapshot_values(model);
      }
    } else {
      best_epoch = epoch;
    }
    result.log.push_back(log);
  }

  if (val_ex.empty()) best_snapshot = snapshot_values(model);
  restore_values(model, best_snapshot);

  json meta{{"best_epoch", best_epoch},
            {"final_train_loss", final_loss},
            {"seed", config.seed}};
  if (best_val >= 0) meta["best_val_macro_f1"] = best_val;
  result.checkpoint = checkpoint_from_model(model, config, meta.dump());
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace uigroup

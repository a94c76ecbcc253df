// Command-line front end: synth / train / predict / regroup / evaluate /
// ablate subcommands over the library modules. Machine-readable JSON goes to
// stdout; progress lines go to stderr; --pretty switches stdout to tables.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "uigroup/config_json.hpp"
#include "uigroup/grouping.hpp"
#include "uigroup/reports.hpp"
#include "uigroup/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uigroup;

namespace {

struct ToolConfig {
  GenConfig gen;
  TrainConfig train;
  std::array<int, 3> split_ratios{8, 1, 1};
  int threads = 1;
};

void to_json(json& j, const ToolConfig& c) {
  j = json{{"gen", c.gen}, {"train", c.train}, {"split", c.split_ratios}, {"threads", c.threads}};
}

void from_json(const json& j, ToolConfig& c) {
  if (j.contains("gen")) j.at("gen").get_to(c.gen);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("split")) j.at("split").get_to(c.split_ratios);
  c.threads = j.value("threads", c.threads);
}

// Flag values collected by CLI11; applied over the config-file values.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch, lr_drop, d, layers, heads, ffn_dim, count, threads;
  std::optional<double> lr, dropout, l2;
  bool no_image = false, no_text = false, no_color = false, no_frame = false, no_class = false;

  void apply(ToolConfig& cfg) const {
    if (seed) {
      cfg.gen.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (count) cfg.gen.n_prototypes = *count;
    if (epochs) cfg.train.epochs = *epochs;
    if (batch) cfg.train.batch_size = *batch;
    if (lr) cfg.train.lr = *lr;
    if (lr_drop) cfg.train.lr_drop_epoch = *lr_drop;
    if (dropout) cfg.train.encoder.dropout = *dropout;
    if (l2) cfg.train.l2_lambda = *l2;
    if (d) {
      cfg.train.embed.d = *d;
      cfg.train.encoder.d = *d;
    }
    if (layers) cfg.train.encoder.layers = *layers;
    if (heads) cfg.train.encoder.heads = *heads;
    if (ffn_dim) cfg.train.encoder.ffn_dim = *ffn_dim;
    if (threads) cfg.threads = *threads;
    if (no_image) cfg.train.modalities.image = false;
    if (no_text) cfg.train.modalities.text = false;
    if (no_color) cfg.train.modalities.color = false;
    if (no_frame) cfg.train.modalities.frame = false;
    if (no_class) cfg.train.modalities.cls = false;
  }
};

ToolConfig resolve_config(const std::string& config_path, const Overrides& overrides) {
  ToolConfig cfg;
  if (!config_path.empty()) {
    json doc;
    try {
      doc = json::parse(read_file(config_path));
      doc.get_to(cfg);
    } catch (const Error& e) {
      throw ConfigError("cannot read config file: " + std::string(e.what()));
    } catch (const json::exception& e) {
      throw ConfigError("bad config file: " + std::string(e.what()));
    }
  }
  overrides.apply(cfg);
  return cfg;
}

void emit(const json& doc, const std::string& out_path) {
  if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
}

void add_train_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "random seed");
  cmd->add_option("--epochs", ov.epochs, "training epochs");
  cmd->add_option("--batch", ov.batch, "prototypes per step");
  cmd->add_option("--lr", ov.lr, "learning rate");
  cmd->add_option("--lr-drop-epoch", ov.lr_drop, "epoch after which lr is divided by 10");
  cmd->add_option("--dropout", ov.dropout, "dropout probability");
  cmd->add_option("--l2", ov.l2, "L2 regularization lambda");
  cmd->add_option("--d", ov.d, "model dimension");
  cmd->add_option("--layers", ov.layers, "encoder blocks");
  cmd->add_option("--heads", ov.heads, "attention heads");
  cmd->add_option("--ffn-dim", ov.ffn_dim, "feed-forward hidden dim");
  cmd->add_flag("--no-image", ov.no_image, "disable the image modality");
  cmd->add_flag("--no-text", ov.no_text, "disable the text modality");
  cmd->add_flag("--no-color", ov.no_color, "disable the color modality");
  cmd->add_flag("--no-frame", ov.no_frame, "disable the frame modality");
  cmd->add_flag("--no-class", ov.no_class, "disable the class modality");
  cmd->add_option("--threads", ov.threads, "worker threads (default 1, deterministic)");
}

// ---------------------------------------------------------------------------

void run_synth(const ToolConfig& cfg, const std::string& out_dir, bool pretty) {
  DatasetManifest manifest = generate_dataset(cfg.gen, out_dir, cfg.threads);
  manifest = split_dataset(manifest, cfg.split_ratios, cfg.gen.seed, out_dir);
  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  save_manifest(manifest, manifest_path);

  json counts = json::object();
  for (const auto& [split, c] : manifest.counts)
    counts[split] = {{"start-merge", c[0]}, {"merge", c[1]}, {"non-merge", c[2]}};
  const json doc{{"config", cfg}, {"manifest", manifest_path.string()}, {"counts", counts}};
  if (pretty) {
    std::printf("manifest: %s\n", manifest_path.string().c_str());
    for (const auto& [split, c] : manifest.counts)
      std::printf("%-6s  files=%-4zu start-merge=%-6lld merge=%-6lld non-merge=%-6lld\n",
                  split.c_str(), manifest.splits.at(split).size(),
                  static_cast<long long>(c[0]), static_cast<long long>(c[1]),
                  static_cast<long long>(c[2]));
  } else {
    emit(doc, "");
  }
}

void run_train(const ToolConfig& cfg, const std::string& manifest_path,
               const std::string& out_ckpt, std::string log_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path base_dir = fs::path(manifest_path).parent_path();

  const TrainResult result = train(manifest, cfg.train, base_dir);
  save_checkpoint(result.checkpoint, out_ckpt);

  if (log_path.empty()) log_path = out_ckpt + ".log.jsonl";
  std::string log_lines;
  for (const EpochLog& l : result.log) {
    json line{{"epoch", l.epoch}, {"train_loss", l.train_loss}, {"lr", l.lr}};
    line["val_macro_f1"] = l.val_macro_f1 ? json(*l.val_macro_f1) : json(nullptr);
    log_lines += line.dump() + "\n";
    std::fprintf(stderr, "epoch %3d  loss %.5f  val_macro_f1 %s\n", l.epoch, l.train_loss,
                 l.val_macro_f1 ? std::to_string(*l.val_macro_f1).c_str() : "n/a");
  }
  write_file(log_path, log_lines);

  const json doc{{"config", cfg},
                 {"checkpoint", out_ckpt},
                 {"log", log_path},
                 {"best_epoch", result.best_epoch},
                 {"final_train_loss", result.log.back().train_loss}};
  emit(doc, "");
}

struct Prediction {
  std::vector<int> labels;
  std::vector<MergedGroup> groups;
  TrainExample example;
};

Prediction predict_file(ModelF& model, const std::string& proto_path) {
  Prediction out;
  out.example.proto = parse_prototype(read_file(proto_path));
  out.example.seq = extract_sequence(out.example.proto);
  if (model.modalities.image) {
    fs::path stem = fs::path(proto_path);
    stem.replace_extension();
    std::unordered_map<std::string, Image64> sidecar;
    if (has_element_images(stem)) sidecar = load_element_images(stem);
    for (const ElementRecord& rec : out.example.seq.records) {
      auto found = sidecar.find(rec.uuid);
      if (found != sidecar.end()) {
        out.example.images.push_back(image_to_tensor<float>(found->second));
      } else {
        UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, rec.label, {}};
        out.example.images.push_back(image_to_tensor<float>(rasterize_element(leaf)));
      }
    }
  }
  out.labels = predict_labels(model, out.example);

  std::vector<Label> labels;
  std::vector<std::string> uuids;
  for (std::size_t i = 0; i < out.example.seq.size(); ++i) {
    labels.push_back(static_cast<Label>(out.labels[i]));
    uuids.push_back(out.example.seq.records[i].uuid);
  }
  out.groups = decode_groups(labels, uuids, MergedGroup::Source::kPredicted);
  return out;
}

json prediction_to_json(const Prediction& pred) {
  json labels = json::object();
  json groups = json::array();
  for (std::size_t i = 0; i < pred.example.seq.size(); ++i)
    labels[pred.example.seq.records[i].uuid] = to_string(static_cast<Label>(pred.labels[i]));
  for (const MergedGroup& g : pred.groups) groups.push_back(g.uuids);
  return json{{"labels", labels}, {"groups", groups}};
}

void run_predict(const std::string& ckpt_path, const std::string& proto_path, bool pretty) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  ModelF model = model_from_checkpoint(ckpt);
  const Prediction pred = predict_file(model, proto_path);
  if (pretty) {
    for (std::size_t i = 0; i < pred.example.seq.size(); ++i)
      std::printf("%-40s %s\n", pred.example.seq.records[i].uuid.c_str(),
                  to_string(static_cast<Label>(pred.labels[i])));
    std::printf("groups: %zu\n", pred.groups.size());
  } else {
    json doc = prediction_to_json(pred);
    doc["config"] = json{{"train", train_config_from_checkpoint(ckpt)}};
    emit(doc, "");
  }
}

void run_regroup(const std::string& ckpt_path, const std::string& proto_path,
                 const std::string& out_path) {
  ModelF model = model_from_checkpoint(load_checkpoint(ckpt_path));
  const Prediction pred = predict_file(model, proto_path);
  const DesignPrototype grouped = regroup_hierarchy(pred.example.proto, pred.groups);
  write_file(out_path, serialize_prototype(grouped));
  json doc = prediction_to_json(pred);
  doc["out"] = out_path;
  emit(doc, "");
}

void run_evaluate(const ToolConfig& cfg, const std::string& ckpt_path,
                  const std::string& manifest_path, const std::string& split,
                  const std::string& out_path, bool pretty) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  ModelF model = model_from_checkpoint(ckpt);
  const DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path base_dir = fs::path(manifest_path).parent_path();
  const std::vector<TrainExample> examples =
      load_split(manifest, split, base_dir, model.modalities.image);
  if (examples.empty()) throw DataError("split '" + split + "' is empty");

  const ClassificationReport cls = evaluate_classification(model, examples, cfg.threads);

  GroupingAccumulator overall;
  GroupingAccumulator tiny_acc, overlap_acc;
  for (const TrainExample& ex : examples) {
    std::vector<Label> gt_labels, pred_labels_v;
    std::vector<std::string> uuids;
    for (std::size_t i = 0; i < ex.seq.size(); ++i) {
      gt_labels.push_back(static_cast<Label>(ex.targets[i]));
      uuids.push_back(ex.seq.records[i].uuid);
    }
    for (int p : predict_labels(model, ex)) pred_labels_v.push_back(static_cast<Label>(p));

    const auto gt = decode_groups(gt_labels, uuids, MergedGroup::Source::kGroundTruth);
    const auto pred = decode_groups(pred_labels_v, uuids, MergedGroup::Source::kPredicted);
    overall.add(gt, pred);

    std::unordered_set<std::string> tiny, overlapping;
    for (std::size_t i = 0; i < ex.strata.size(); ++i) {
      if (ex.strata[i].tiny) tiny.insert(uuids[i]);
      if (ex.strata[i].overlapping) overlapping.insert(uuids[i]);
    }
    tiny_acc.add(filter_groups(gt, tiny), filter_groups(pred, tiny));
    overlap_acc.add(filter_groups(gt, overlapping), filter_groups(pred, overlapping));
  }

  json grouping = to_json(overall.report());
  grouping["strata"] = {{"tiny", to_json(tiny_acc.report())},
                        {"overlapping", to_json(overlap_acc.report())}};
  const json doc{{"config", cfg},
                 {"model", train_config_from_checkpoint(ckpt)},
                 {"split", split},
                 {"classification", to_json(cls)},
                 {"grouping", grouping}};

  if (pretty) {
    std::printf("classification (split=%s):\n", split.c_str());
    static const char* kNames[] = {"start-merge", "merge", "non-merge"};
    for (int c = 0; c < kNumLabels; ++c)
      std::printf("  %-12s P=%.3f R=%.3f F1=%.3f support=%lld\n", kNames[c],
                  cls.per_class[c].precision, cls.per_class[c].recall, cls.per_class[c].f1,
                  static_cast<long long>(cls.per_class[c].support));
    std::printf("  macro     P=%.3f R=%.3f F1=%.3f\n", cls.macro_precision, cls.macro_recall,
                cls.macro_f1);
    std::printf("  weighted  P=%.3f R=%.3f F1=%.3f\n", cls.weighted_precision,
                cls.weighted_recall, cls.weighted_f1);
    std::printf("grouping:\n");
    const GroupingReport rep = overall.report();
    for (std::size_t t = 0; t < rep.thresholds.size(); ++t)
      std::printf("  dist<=%zu  P=%.3f R=%.3f F1=%.3f\n", t, rep.thresholds[t].precision,
                  rep.thresholds[t].recall, rep.thresholds[t].f1);
    if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");
  } else {
    emit(doc, out_path);
  }
}

void run_ablate(const ToolConfig& cfg, const std::string& manifest_path,
                const std::string& out_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path base_dir = fs::path(manifest_path).parent_path();

  struct Variant {
    const char* name;
    void (*disable)(Modalities&);
  };
  const Variant variants[] = {
      {"full", [](Modalities&) {}},
      {"no_text", [](Modalities& m) { m.text = false; }},
      {"no_color", [](Modalities& m) { m.color = false; }},
      {"no_class", [](Modalities& m) { m.cls = false; }},
      {"no_frame", [](Modalities& m) { m.frame = false; }},
      {"no_image", [](Modalities& m) { m.image = false; }},
  };

  json rows = json::array();
  for (const Variant& variant : variants) {
    TrainConfig tc = cfg.train;
    variant.disable(tc.modalities);
    std::fprintf(stderr, "ablate: training %s\n", variant.name);
    TrainResult result = train(manifest, tc, base_dir);
    ModelF model = model_from_checkpoint(result.checkpoint);
    const std::vector<TrainExample> test =
        load_split(manifest, "test", base_dir, tc.modalities.image);
    const ClassificationReport rep = evaluate_classification(model, test, cfg.threads);
    rows.push_back(json{{"variant", variant.name},
                        {"macro",
                         {{"precision", rep.macro_precision},
                          {"recall", rep.macro_recall},
                          {"f1", rep.macro_f1}}},
                        {"weighted",
                         {{"precision", rep.weighted_precision},
                          {"recall", rep.weighted_recall},
                          {"f1", rep.weighted_f1}}}});
  }
  emit(json{{"config", cfg}, {"rows", rows}}, out_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fragmented-element grouping toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, ckpt_path, proto_path, out_path, log_path;
  std::string split = "test";
  bool pretty = false;
  Overrides ov;

  CLI::App* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  synth->add_option("--config", config_path, "JSON config file");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--count", ov.count, "number of prototypes");
  synth->add_option("--seed", ov.seed, "random seed");
  synth->add_option("--threads", ov.threads, "worker threads");
  synth->add_flag("--pretty", pretty, "human-readable output");

  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  train_cmd->add_option("--config", config_path, "JSON config file");
  train_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  train_cmd->add_option("--log", log_path, "epoch log path (JSON lines)");
  add_train_flags(train_cmd, ov);

  CLI::App* predict = app.add_subcommand("predict", "label a prototype and decode groups");
  predict->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  predict->add_option("--input", proto_path, "prototype JSON file")->required();
  predict->add_flag("--pretty", pretty, "human-readable output");

  CLI::App* regroup = app.add_subcommand("regroup", "rewrite a prototype with merged groups");
  regroup->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  regroup->add_option("--input", proto_path, "prototype JSON file")->required();
  regroup->add_option("--out", out_path, "rewritten prototype path")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "classification + grouping reports");
  evaluate->add_option("--config", config_path, "JSON config file");
  evaluate->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  evaluate->add_option("--manifest", manifest_path, "dataset manifest")->required();
  evaluate->add_option("--split", split, "split name (default test)");
  evaluate->add_option("--out", out_path, "also write the JSON report here");
  evaluate->add_option("--threads", ov.threads, "worker threads");
  evaluate->add_flag("--pretty", pretty, "human-readable output");

  CLI::App* ablate = app.add_subcommand("ablate", "train full + single-modality-removed variants");
  ablate->add_option("--config", config_path, "JSON config file");
  ablate->add_option("--manifest", manifest_path, "dataset manifest")->required();
  ablate->add_option("--out", out_path, "also write the JSON report here");
  add_train_flags(ablate, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    const ToolConfig cfg = resolve_config(config_path, ov);
    if (synth->parsed()) {
      cfg.gen.validate();
      run_synth(cfg, out_dir, pretty);
    } else if (train_cmd->parsed()) {
      cfg.train.validate();
      run_train(cfg, manifest_path, out_path, log_path);
    } else if (predict->parsed()) {
      run_predict(ckpt_path, proto_path, pretty);
    } else if (regroup->parsed()) {
      run_regroup(ckpt_path, proto_path, out_path);
    } else if (evaluate->parsed()) {
      run_evaluate(cfg, ckpt_path, manifest_path, split, out_path, pretty);
    } else if (ablate->parsed()) {
      cfg.train.validate();
      run_ablate(cfg, manifest_path, out_path);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DivergedError& e) {
    std::fprintf(stderr, "training diverged at epoch %d: %s\n", e.epoch, e.what());
    return 4;
  } catch (const CheckpointFormatError& e) {
    std::fprintf(stderr, "checkpoint format error: %s\n", e.what());
    return 5;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "checkpoint integrity error: %s\n", e.what());
    return 5;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}

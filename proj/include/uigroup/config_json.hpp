#pragma once

// JSON adapters for the config structs (checkpoint snapshots + CLI config
// files). Unknown keys are ignored; missing keys keep defaults.

#include "json.hpp"
#include "uigroup/encoder.hpp"
#include "uigroup/synthgen.hpp"
#include "uigroup/trainer.hpp"

namespace uigroup {

inline void to_json(nlohmann::json& j, const Modalities& m) {
  j = nlohmann::json{{"image", m.image}, {"text", m.text}, {"color", m.color},
                     {"frame", m.frame}, {"class", m.cls}};
}

inline void from_json(const nlohmann::json& j, Modalities& m) {
  m.image = j.value("image", m.image);
  m.text = j.value("text", m.text);
  m.color = j.value("color", m.color);
  m.frame = j.value("frame", m.frame);
  m.cls = j.value("class", m.cls);
}

inline void to_json(nlohmann::json& j, const EmbedConfig& c) {
  j = nlohmann::json{{"d", c.d}, {"text_len", c.text_len}, {"text_vocab", c.text_vocab}};
}

inline void from_json(const nlohmann::json& j, EmbedConfig& c) {
  c.d = j.value("d", c.d);
  c.text_len = j.value("text_len", c.text_len);
  c.text_vocab = j.value("text_vocab", c.text_vocab);
}

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"layers", c.layers}, {"heads", c.heads}, {"d", c.d},
                     {"ffn_dim", c.ffn_dim}, {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d = j.value("d", c.d);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.dropout = j.value("dropout", c.dropout);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"lr_drop_epoch", c.lr_drop_epoch},
                     {"l2_lambda", c.l2_lambda},
                     {"seed", c.seed},
                     {"embed", c.embed},
                     {"encoder", c.encoder},
                     {"modalities", c.modalities}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_drop_epoch = j.value("lr_drop_epoch", c.lr_drop_epoch);
  c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
  c.seed = j.value("seed", c.seed);
  if (j.contains("embed")) j.at("embed").get_to(c.embed);
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("modalities")) j.at("modalities").get_to(c.modalities);
}

inline void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"n_prototypes", c.n_prototypes},
                     {"elements_min", c.elements_min},
                     {"elements_max", c.elements_max},
                     {"group_count_min", c.group_count_min},
                     {"group_count_max", c.group_count_max},
                     {"group_size_min", c.group_size_min},
                     {"group_size_max", c.group_size_max},
                     {"tiny_fraction", c.tiny_fraction},
                     {"overlap_fraction", c.overlap_fraction},
                     {"target_merge_ratio", c.target_merge_ratio},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GenConfig& c) {
  c.n_prototypes = j.value("n_prototypes", c.n_prototypes);
  c.elements_min = j.value("elements_min", c.elements_min);
  c.elements_max = j.value("elements_max", c.elements_max);
  c.group_count_min = j.value("group_count_min", c.group_count_min);
  c.group_count_max = j.value("group_count_max", c.group_count_max);
  c.group_size_min = j.value("group_size_min", c.group_size_min);
  c.group_size_max = j.value("group_size_max", c.group_size_max);
  c.tiny_fraction = j.value("tiny_fraction", c.tiny_fraction);
  c.overlap_fraction = j.value("overlap_fraction", c.overlap_fraction);
  c.target_merge_ratio = j.value("target_merge_ratio", c.target_merge_ratio);
  c.seed = j.value("seed", c.seed);
}

}  // namespace uigroup

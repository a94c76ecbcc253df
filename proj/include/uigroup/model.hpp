#pragma once

// Aggregate model: embedders + encoder stack + head, with stable dotted
// parameter names for checkpointing.

#include <string>
#include <utility>
#include <vector>

#include "uigroup/encoder.hpp"

namespace uigroup {

template <typename S>
struct Model {
  EmbedConfig embed_cfg;
  EncoderConfig enc_cfg;
  Modalities modalities;

  EmbedderParams<S> embed;
  std::vector<BlockParams<S>> blocks;
  HeadParams<S> head;

  static Model init(const EmbedConfig& embed_cfg, const EncoderConfig& enc_cfg,
                    const Modalities& mods, Rng& rng) {
    embed_cfg.validate();
    enc_cfg.validate();
    if (embed_cfg.d != enc_cfg.d)
      throw ConfigError("embedding dim and encoder dim must match");
    Model m;
    m.embed_cfg = embed_cfg;
    m.enc_cfg = enc_cfg;
    m.modalities = mods;
    m.embed = EmbedderParams<S>::init(embed_cfg, rng);
    for (int i = 0; i < enc_cfg.layers; ++i) m.blocks.push_back(BlockParams<S>::init(enc_cfg, rng));
    m.head = HeadParams<S>::init(enc_cfg.d, rng);
    return m;
  }

  // Fixed enumeration order; checkpoints and the optimizer both rely on it.
  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    auto put = [&out](std::string name, const Tensor<S>& t) { out.emplace_back(std::move(name), t); };
    put("embed.image.conv1.weight", embed.image.conv1.weight);
    put("embed.image.conv1.bias", embed.image.conv1.bias);
    put("embed.image.conv2.weight", embed.image.conv2.weight);
    put("embed.image.conv2.bias", embed.image.conv2.bias);
    put("embed.image.conv3.weight", embed.image.conv3.weight);
    put("embed.image.conv3.bias", embed.image.conv3.bias);
    put("embed.image.proj.weight", embed.image.proj.weight);
    put("embed.image.proj.bias", embed.image.proj.bias);
    put("embed.text.table", embed.text_table);
    put("embed.color.weight", embed.color.weight);
    put("embed.color.bias", embed.color.bias);
    put("embed.frame.weight", embed.frame.weight);
    put("embed.frame.bias", embed.frame.bias);
    put("embed.class.table", embed.class_table);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string base = "encoder." + std::to_string(i) + ".";
      BlockParams<S>& b = blocks[i];
      put(base + "attn.q.weight", b.q.weight);
      put(base + "attn.q.bias", b.q.bias);
      put(base + "attn.k.weight", b.k.weight);
      put(base + "attn.k.bias", b.k.bias);
      put(base + "attn.v.weight", b.v.weight);
      put(base + "attn.v.bias", b.v.bias);
      put(base + "attn.o.weight", b.o.weight);
      put(base + "attn.o.bias", b.o.bias);
      put(base + "norm1.gain", b.norm1_gain);
      put(base + "norm1.bias", b.norm1_bias);
      put(base + "ffn.fc1.weight", b.fc1.weight);
      put(base + "ffn.fc1.bias", b.fc1.bias);
      put(base + "ffn.fc2.weight", b.fc2.weight);
      put(base + "ffn.fc2.bias", b.fc2.bias);
      put(base + "norm2.gain", b.norm2_gain);
      put(base + "norm2.bias", b.norm2_bias);
    }
    put("head.fc1.weight", head.fc1.weight);
    put("head.fc1.bias", head.fc1.bias);
    put("head.fc2.weight", head.fc2.weight);
    put("head.fc2.bias", head.fc2.bias);
    return out;
  }

  std::vector<Tensor<S>> parameters() {
    std::vector<Tensor<S>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
  }

  Tensor<S> forward_logits(const ElementSequence& seq, const std::vector<Tensor<S>>& images,
                           double canvas_w, double canvas_h, const FwdCtx<S>& ctx) {
    Tensor<S> f = embed_sequence(seq, images, canvas_w, canvas_h, embed, embed_cfg,
                                 modalities, ctx);
    Tensor<S> h = encode(f, blocks, enc_cfg, ctx);
    return classify(h, head).first;
  }
};

using ModelF = Model<float>;

}  // namespace uigroup

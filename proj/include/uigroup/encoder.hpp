#pragma once

// Transformer encoder stack (post-norm, as in the two-sublayer residual
// form H1 = LN(H + MHAtt(H)), H' = LN(H1 + FFN(H1))) plus the two-layer
// classification head.

#include <cstdint>
#include <utility>
#include <vector>

#include "uigroup/embedding.hpp"
#include "uigroup/tensor.hpp"

namespace uigroup {

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int d = 32;
  int ffn_dim = 64;
  double dropout = 0.2;

  void validate() const {
    if (layers < 1) throw ConfigError("encoder layers must be >= 1");
    if (heads < 1 || d % heads != 0) throw ConfigError("model dim must divide evenly by heads");
    if (ffn_dim < 1) throw ConfigError("ffn_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  }
};

template <typename S>
struct BlockParams {
  LinearParams<S> q, k, v, o;      // attention projections, all [d,d]
  Tensor<S> norm1_gain, norm1_bias;
  LinearParams<S> fc1, fc2;        // [d,ffn], [ffn,d]
  Tensor<S> norm2_gain, norm2_bias;

  static BlockParams init(const EncoderConfig& cfg, Rng& rng) {
    BlockParams p;
    p.q = LinearParams<S>::init(cfg.d, cfg.d, rng);
    p.k = LinearParams<S>::init(cfg.d, cfg.d, rng);
    p.v = LinearParams<S>::init(cfg.d, cfg.d, rng);
    p.o = LinearParams<S>::init(cfg.d, cfg.d, rng);
    p.norm1_gain = Tensor<S>::filled({1, cfg.d}, S(1), true);
    p.norm1_bias = Tensor<S>::zeros({1, cfg.d}, true);
    p.fc1 = LinearParams<S>::init(cfg.d, cfg.ffn_dim, rng);
    p.fc2 = LinearParams<S>::init(cfg.ffn_dim, cfg.d, rng);
    p.norm2_gain = Tensor<S>::filled({1, cfg.d}, S(1), true);
    p.norm2_bias = Tensor<S>::zeros({1, cfg.d}, true);
    return p;
  }
};

template <typename S>
struct HeadParams {
  LinearParams<S> fc1;  // [d,d]
  LinearParams<S> fc2;  // [d,3]

  static HeadParams init(int d, Rng& rng) {
    return HeadParams{LinearParams<S>::init(d, d, rng), LinearParams<S>::init(d, kNumLabels, rng)};
  }
};

// Scaled dot-product self-attention over all positions (no masking), heads
// concatenated and projected. Dropout is applied to the attention weights.
template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& h, const BlockParams<S>& p, int heads,
                               const FwdCtx<S>& ctx) {
  const std::int64_t d = h.dim(1);
  if (d % heads != 0) throw ConfigError("model dim must divide evenly by heads");
  const std::int64_t dk = d / heads;
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));

  Tensor<S> q = linear(h, p.q), k = linear(h, p.k), v = linear(h, p.v);
  std::vector<Tensor<S>> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Tensor<S> qh = slice_cols(q, hd * dk, dk);
    Tensor<S> kh = slice_cols(k, hd * dk, dk);
    Tensor<S> vh = slice_cols(v, hd * dk, dk);
    Tensor<S> att = softmax_rows(scale(matmul(qh, transpose2d(kh)), att_scale));
    att = ctx.maybe_dropout(att);
    head_outs.push_back(matmul(att, vh));
  }
  return linear(concat_cols(head_outs), p.o);
}

template <typename S>
Tensor<S> encoder_block(const Tensor<S>& h, const BlockParams<S>& p, int heads,
                        const FwdCtx<S>& ctx) {
  Tensor<S> h1 = layer_norm(add(h, multi_head_attention(h, p, heads, ctx)),
                            p.norm1_gain, p.norm1_bias);
  Tensor<S> ff = linear(ctx.maybe_dropout(relu(linear(h1, p.fc1))), p.fc2);
  return layer_norm(add(h1, ff), p.norm2_gain, p.norm2_bias);
}

template <typename S>
Tensor<S> encode(const Tensor<S>& f, const std::vector<BlockParams<S>>& blocks,
                 const EncoderConfig& cfg, const FwdCtx<S>& ctx) {
  Tensor<S> h = f;
  for (const auto& block : blocks) h = encoder_block(h, block, cfg.heads, ctx);
  return h;
}

// Two-layer ReLU head. Returns (logits, row-softmax probabilities).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> classify(const Tensor<S>& h, const HeadParams<S>& p) {
  if (h.dim(0) == 0) {
    Tensor<S> empty = Tensor<S>::zeros({0, kNumLabels});
    return {empty, empty};
  }
  Tensor<S> logits = linear(relu(linear(h, p.fc1)), p.fc2);
  return {logits, softmax_rows(logits)};
}

}  // namespace uigroup

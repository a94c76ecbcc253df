#pragma once

// Modality embedders: image CNN, hashed-token text, color, frame, and class
// embeddings, fused by element-wise sum with sinusoidal positional encoding.

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uigroup/prototype.hpp"
#include "uigroup/raster.hpp"
#include "uigroup/tensor.hpp"

namespace uigroup {

struct Modalities {
  bool image = true;
  bool text = true;
  bool color = true;
  bool frame = true;
  bool cls = true;
};

struct EmbedConfig {
  int d = 32;
  int text_len = 32;
  int text_vocab = 1024;  // hash buckets incl. the reserved pad row 0

  void validate() const {
    if (d < 2 || d % 2 != 0) throw ConfigError("embedding dim must be even and >= 2");
    if (text_len < 1) throw ConfigError("text_len must be >= 1");
    if (text_vocab < 2) throw ConfigError("text_vocab must be >= 2");
  }
};

// Class vocabulary: the seven declared classes plus UNK; index 0 of the
// embedding table stays the reserved zero row, so ids are shifted by one.
constexpr int kClassVocab = 8;

inline int class_embedding_id(NodeClass cls) { return static_cast<int>(cls) + 1; }

// Lowercase, split on non-alphanumeric runs, hash each token into [1, vocab),
// center between zero pads (extra pad on the right), truncate to the leading
// text_len tokens.
inline std::vector<int> tokenize_text(const std::string& name, int text_len, int text_vocab) {
  std::vector<int> tokens;
  std::uint64_t hash = 14695981039346656037ULL;  // FNV-1a
  bool in_token = false;
  auto flush = [&] {
    if (in_token && static_cast<int>(tokens.size()) < text_len)
      tokens.push_back(1 + static_cast<int>(hash % static_cast<std::uint64_t>(text_vocab - 1)));
    hash = 14695981039346656037ULL;
    in_token = false;
  };
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      hash = (hash ^ static_cast<std::uint64_t>(std::tolower(c))) * 1099511628211ULL;
      in_token = true;
    } else {
      flush();
    }
  }
  flush();

  std::vector<int> out(static_cast<std::size_t>(text_len), 0);
  const int pad_left = (text_len - static_cast<int>(tokens.size())) / 2;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out[static_cast<std::size_t>(pad_left) + i] = tokens[i];
  return out;
}

// Per-run forward options. Dropout only fires when training with p > 0.
template <typename S>
struct FwdCtx {
  bool training = false;
  S dropout_p = S(0);
  Rng* rng = nullptr;

  Tensor<S> maybe_dropout(const Tensor<S>& x) const {
    if (!training || dropout_p <= S(0)) return x;
    return dropout(x, dropout_p, *rng);
  }
};

template <typename S>
struct LinearParams {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [1, out]

  static LinearParams init(std::int64_t in, std::int64_t out, Rng& rng) {
    return LinearParams{Tensor<S>::xavier({in, out}, in, out, rng),
                        Tensor<S>::zeros({1, out}, true)};
  }
};

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& p) {
  return add_rowvec(matmul(x, p.weight), p.bias);
}

template <typename S>
struct ConvParams {
  Tensor<S> weight;  // [oc, ic, kh, kw]
  Tensor<S> bias;    // [oc]

  static ConvParams init(std::int64_t oc, std::int64_t ic, std::int64_t k, Rng& rng) {
    return ConvParams{
        Tensor<S>::xavier({oc, ic, k, k}, ic * k * k, oc * k * k, rng),
        Tensor<S>::zeros({oc}, true)};
  }
};

// Desk-scale image encoder: three stride-2 conv+relu stages (8/16/32
// channels), global average pool, linear projection to d.
template <typename S>
struct ImageEncoderParams {
  ConvParams<S> conv1, conv2, conv3;
  LinearParams<S> proj;

  static ImageEncoderParams init(std::int64_t d, Rng& rng) {
    return ImageEncoderParams{ConvParams<S>::init(8, 3, 3, rng),
                              ConvParams<S>::init(16, 8, 3, rng),
                              ConvParams<S>::init(32, 16, 3, rng),
                              LinearParams<S>::init(32, d, rng)};
  }
};

template <typename S>
struct EmbedderParams {
  ImageEncoderParams<S> image;
  Tensor<S> text_table;   // [vocab, d], row 0 reserved pad
  LinearParams<S> color;  // 4 -> d
  LinearParams<S> frame;  // 4 -> d
  Tensor<S> class_table;  // [1 + kClassVocab, d], row 0 reserved

  static EmbedderParams init(const EmbedConfig& cfg, Rng& rng) {
    EmbedderParams p;
    p.image = ImageEncoderParams<S>::init(cfg.d, rng);
    p.text_table = Tensor<S>::xavier({cfg.text_vocab, cfg.d}, cfg.text_vocab, cfg.d, rng);
    zero_row0(p.text_table);
    p.color = LinearParams<S>::init(4, cfg.d, rng);
    p.frame = LinearParams<S>::init(4, cfg.d, rng);
    p.class_table = Tensor<S>::xavier({kClassVocab + 1, cfg.d}, kClassVocab + 1, cfg.d, rng);
    zero_row0(p.class_table);
    return p;
  }

  static void zero_row0(Tensor<S>& table) {
    auto& v = table.raw_value();
    for (std::int64_t j = 0; j < table.dim(1); ++j) v[static_cast<std::size_t>(j)] = S(0);
  }
};

template <typename S>
Tensor<S> encode_image(const Tensor<S>& image, const ImageEncoderParams<S>& p) {
  if (image.shape() != Shape{Image64::kChannels, Image64::kSide, Image64::kSide})
    throw ShapeError("encode_image expects exactly 3x64x64, got " + shape_str(image.shape()));
  Tensor<S> h = relu(conv2d(image, p.conv1.weight, p.conv1.bias, 2));
  h = relu(conv2d(h, p.conv2.weight, p.conv2.bias, 2));
  h = relu(conv2d(h, p.conv3.weight, p.conv3.bias, 2));
  return linear(global_avg_pool(h), p.proj);
}

template <typename S>
Tensor<S> image_to_tensor(const Image64& img) {
  std::vector<S> vals(img.data.begin(), img.data.end());
  return Tensor<S>::from({Image64::kChannels, Image64::kSide, Image64::kSide}, std::move(vals));
}

// Sum of the token rows; pad rows contribute nothing, so the result is
// token-order invariant.
template <typename S>
Tensor<S> encode_text(const std::vector<int>& indices, const Tensor<S>& table) {
  return sum_rows(embedding_rows(table, indices));
}

template <typename S>
Tensor<S> encode_color(const std::optional<Rgba>& color, const LinearParams<S>& p) {
  std::vector<S> in(4, S(0));
  if (color) {
    for (double ch : {color->r, color->g, color->b, color->a})
      if (!(ch >= 0.0 && ch <= 255.0)) throw ValidationError("color channel out of [0,255]");
    in = {static_cast<S>(color->r / 255.0), static_cast<S>(color->g / 255.0),
          static_cast<S>(color->b / 255.0), static_cast<S>(color->a / 255.0)};
  }
  return linear(Tensor<S>::from({1, 4}, std::move(in)), p);
}

// Corners (x, y, x+w, y+h) scaled by the canvas into [0,1].
template <typename S>
Tensor<S> encode_frame(const Frame& frame, double canvas_w, double canvas_h,
                       const LinearParams<S>& p) {
  if (!(canvas_w > 0) || !(canvas_h > 0))
    throw ValidationError("canvas dimensions must be positive");
  auto norm = [](double v, double extent) {
    return static_cast<S>(std::clamp(v / extent, 0.0, 1.0));
  };
  std::vector<S> in{norm(frame.x, canvas_w), norm(frame.y, canvas_h),
                    norm(frame.x + frame.w, canvas_w), norm(frame.y + frame.h, canvas_h)};
  return linear(Tensor<S>::from({1, 4}, std::move(in)), p);
}

template <typename S>
Tensor<S> encode_class(NodeClass cls, const Tensor<S>& table) {
  return embedding_rows(table, {class_embedding_id(cls)});
}

// PE[2j] = sin(pos / 10000^(2j/d)), PE[2j+1] = cos(pos / 10000^(2j/d)).
template <typename S>
Tensor<S> positional_encoding(std::int64_t pos, std::int64_t d) {
  if (pos < 0) throw ConfigError("positional_encoding: position must be >= 0");
  if (d < 2 || d % 2 != 0) throw ConfigError("positional_encoding: dim must be even");
  std::vector<S> pe(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; j += 2) {
    const double denom = std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
    pe[static_cast<std::size_t>(j)] = static_cast<S>(std::sin(static_cast<double>(pos) / denom));
    pe[static_cast<std::size_t>(j + 1)] =
        static_cast<S>(std::cos(static_cast<double>(pos) / denom));
  }
  return Tensor<S>::from({1, d}, std::move(pe));
}

// Fused per-element embedding matrix F[n,d]: the sum of every enabled
// modality vector plus the positional encoding, with dropout applied to the
// summed rows when training. Disabled modalities contribute exact zeros.
template <typename S>
Tensor<S> embed_sequence(const ElementSequence& seq, const std::vector<Tensor<S>>& images,
                         double canvas_w, double canvas_h, const EmbedderParams<S>& params,
                         const EmbedConfig& cfg, const Modalities& mods, const FwdCtx<S>& ctx) {
  const std::int64_t n = static_cast<std::int64_t>(seq.size());
  if (mods.image && static_cast<std::int64_t>(images.size()) != n)
    throw ShapeError("embed_sequence: image count does not match sequence length");
  if (n == 0) return Tensor<S>::zeros({0, cfg.d});

  std::vector<Tensor<S>> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const ElementRecord& rec = seq.records[static_cast<std::size_t>(i)];
    Tensor<S> e;
    auto fuse = [&e](Tensor<S> part) { e = e.defined() ? add(e, part) : std::move(part); };
    if (mods.image) fuse(encode_image(images[static_cast<std::size_t>(i)], params.image));
    if (mods.frame) fuse(encode_frame(rec.frame, canvas_w, canvas_h, params.frame));
    if (mods.cls) fuse(encode_class(rec.cls, params.class_table));
    if (mods.text)
      fuse(encode_text(tokenize_text(rec.name, cfg.text_len, cfg.text_vocab), params.text_table));
    if (mods.color) fuse(encode_color(rec.color, params.color));
    if (!e.defined()) e = Tensor<S>::zeros({1, cfg.d});
    rows.push_back(add(e, positional_encoding<S>(i, cfg.d)));
  }
  return ctx.maybe_dropout(concat_rows(rows));
}

}  // namespace uigroup

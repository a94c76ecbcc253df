#include "uigroup/encoder.hpp"

#include "doctest.h"
#include "grad_check.hpp"
#include "uigroup/model.hpp"

using namespace uigroup;

namespace {

EncoderConfig desk_cfg() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.d = 16;
  cfg.ffn_dim = 32;
  cfg.dropout = 0.0;
  return cfg;
}

TensorF permute_rows(const TensorF& x, const std::vector<std::size_t>& perm) {
  const std::int64_t d = x.dim(1);
  std::vector<float> out(x.value().size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
          x.at(static_cast<std::int64_t>(perm[i]), j);
  return TensorF::from(x.shape(), std::move(out));
}

}  // namespace

TEST_CASE("attention: output shape for a range of sequence lengths") {
  Rng rng(31);
  const EncoderConfig cfg = desk_cfg();
  auto block = BlockParams<float>::init(cfg, rng);
  FwdCtx<float> ctx;
  for (std::int64_t n : {1, 2, 3, 7, 16}) {
    TensorF h = TensorF::uniform({n, cfg.d}, -1, 1, rng);
    CHECK(multi_head_attention(h, block, cfg.heads, ctx).shape() == Shape{n, cfg.d});
  }
}

TEST_CASE("attention: singleton sequence attends only to itself") {
  Rng rng(32);
  const EncoderConfig cfg = desk_cfg();
  auto block = BlockParams<float>::init(cfg, rng);
  FwdCtx<float> ctx;
  TensorF h = TensorF::uniform({1, cfg.d}, -1, 1, rng);
  // With a single position the attention weight is exactly one, so the output
  // reduces to o(v(h)).
  const TensorF expected = linear(linear(h, block.v), block.o);
  const TensorF got = multi_head_attention(h, block, cfg.heads, ctx);
  for (int j = 0; j < cfg.d; ++j)
    CHECK(got.value()[static_cast<std::size_t>(j)] ==
          doctest::Approx(expected.value()[static_cast<std::size_t>(j)]).epsilon(1e-6));
}

TEST_CASE("attention and blocks are permutation-equivariant") {
  Rng rng(33);
  const EncoderConfig cfg = desk_cfg();
  auto block = BlockParams<float>::init(cfg, rng);
  FwdCtx<float> ctx;
  TensorF h = TensorF::uniform({6, cfg.d}, -1, 1, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};

  const TensorF att_then_perm = permute_rows(multi_head_attention(h, block, cfg.heads, ctx), perm);
  const TensorF perm_then_att =
      multi_head_attention(permute_rows(h, perm), block, cfg.heads, ctx);
  for (std::size_t i = 0; i < att_then_perm.value().size(); ++i)
    CHECK(att_then_perm.value()[i] == doctest::Approx(perm_then_att.value()[i]).epsilon(1e-5));

  const TensorF blk_then_perm = permute_rows(encoder_block(h, block, cfg.heads, ctx), perm);
  const TensorF perm_then_blk = encoder_block(permute_rows(h, perm), block, cfg.heads, ctx);
  for (std::size_t i = 0; i < blk_then_perm.value().size(); ++i)
    CHECK(blk_then_perm.value()[i] == doctest::Approx(perm_then_blk.value()[i]).epsilon(1e-5));
}

TEST_CASE("block: output rows are normalized at initialization") {
  Rng rng(34);
  const EncoderConfig cfg = desk_cfg();
  auto block = BlockParams<float>::init(cfg, rng);
  FwdCtx<float> ctx;
  TensorF h = TensorF::uniform({5, cfg.d}, -2, 2, rng);
  const TensorF out = encoder_block(h, block, cfg.heads, ctx);
  CHECK(out.shape() == h.shape());
  for (std::int64_t i = 0; i < 5; ++i) {
    double mean = 0;
    for (int j = 0; j < cfg.d; ++j) mean += out.at(i, j);
    mean /= cfg.d;
    CHECK(std::abs(mean) < 1e-5);
  }
}

TEST_CASE("encode: composition over blocks") {
  Rng rng(35);
  EncoderConfig cfg = desk_cfg();
  FwdCtx<float> ctx;
  TensorF f = TensorF::uniform({4, cfg.d}, -1, 1, rng);

  cfg.layers = 1;
  auto b1 = BlockParams<float>::init(cfg, rng);
  const TensorF one = encode(f, {b1}, cfg, ctx);
  const TensorF direct = encoder_block(f, b1, cfg.heads, ctx);
  CHECK(one.value() == direct.value());

  cfg.layers = 2;
  auto b2 = BlockParams<float>::init(cfg, rng);
  const TensorF two = encode(f, {b1, b2}, cfg, ctx);
  const TensorF composed = encoder_block(encoder_block(f, b1, cfg.heads, ctx), b2, cfg.heads, ctx);
  CHECK(two.value() == composed.value());
}

TEST_CASE("encode: eval-mode calls are bit-identical") {
  Rng rng(36);
  const EncoderConfig cfg = desk_cfg();
  std::vector<BlockParams<float>> blocks{BlockParams<float>::init(cfg, rng),
                                         BlockParams<float>::init(cfg, rng)};
  FwdCtx<float> ctx;
  TensorF f = TensorF::uniform({5, cfg.d}, -1, 1, rng);
  CHECK(encode(f, blocks, cfg, ctx).value() == encode(f, blocks, cfg, ctx).value());
}

TEST_CASE("classify: probability rows sum to one; bias dominates zero input") {
  Rng rng(37);
  auto head = HeadParams<float>::init(8, rng);
  TensorF h = TensorF::uniform({6, 8}, -2, 2, rng);
  const auto [logits, probs] = classify(h, head);
  CHECK(logits.shape() == Shape{6, kNumLabels});
  for (std::int64_t i = 0; i < 6; ++i) {
    float sum = 0;
    for (int j = 0; j < kNumLabels; ++j) sum += probs.at(i, j);
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
  }

  HeadParams<float> biased{{TensorF::zeros({8, 8}), TensorF::zeros({1, 8})},
                           {TensorF::zeros({8, 3}), TensorF::from({1, 3}, {0, 0, 10})}};
  const auto [blog, bprob] = classify(TensorF::zeros({4, 8}), biased);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(bprob.at(i, 2) > 0.99f);

  const auto [elog, eprob] = classify(TensorF::zeros({0, 8}), head);
  CHECK(elog.dim(0) == 0);
}

TEST_CASE("encoder + head: permutation equivariance isolates positional encoding") {
  Rng rng(38);
  const EncoderConfig cfg = desk_cfg();
  std::vector<BlockParams<float>> blocks{BlockParams<float>::init(cfg, rng),
                                         BlockParams<float>::init(cfg, rng)};
  auto head = HeadParams<float>::init(cfg.d, rng);
  FwdCtx<float> ctx;
  TensorF f = TensorF::uniform({7, cfg.d}, -1, 1, rng);
  const std::vector<std::size_t> perm{6, 2, 0, 4, 1, 5, 3};

  const TensorF direct = permute_rows(classify(encode(f, blocks, cfg, ctx), head).first, perm);
  const TensorF permuted = classify(encode(permute_rows(f, perm), blocks, cfg, ctx), head).first;
  for (std::size_t i = 0; i < direct.value().size(); ++i)
    CHECK(direct.value()[i] == doctest::Approx(permuted.value()[i]).epsilon(1e-5));
}

TEST_CASE("gradient flow: every parameter sees a nonzero gradient") {
  Rng rng(39);
  EmbedConfig embed_cfg;
  embed_cfg.d = 16;
  embed_cfg.text_vocab = 64;
  EncoderConfig enc_cfg = desk_cfg();
  Model<float> model = Model<float>::init(embed_cfg, enc_cfg, Modalities{}, rng);

  ElementSequence seq;
  std::vector<TensorF> images;
  for (int i = 0; i < 6; ++i) {
    ElementRecord rec;
    rec.uuid = "e" + std::to_string(i);
    rec.cls = static_cast<NodeClass>(i % 5);
    rec.name = "element " + std::to_string(i);
    rec.frame = {static_cast<double>(8 * i), 12, 24, 24};
    if (i % 2 == 0) rec.color = Rgba{40.0 * i, 100, 200, 255};
    seq.records.push_back(rec);
    UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, {}, {}};
    images.push_back(image_to_tensor<float>(rasterize_element(leaf)));
  }

  FwdCtx<float> ctx;
  TensorF logits = model.forward_logits(seq, images, 320, 640, ctx);
  const TensorF loss =
      weighted_cross_entropy(logits, {0, 1, 2, 0, 1, 2}, std::vector<float>{1, 1, 1});
  backward(loss);

  for (auto& [name, param] : model.named_parameters()) {
    REQUIRE_MESSAGE(param.has_grad(), name);
    bool nonzero = false;
    for (float g : param.grad()) nonzero = nonzero || g != 0.0f;
    CHECK_MESSAGE(nonzero, "dead parameter: ", name);
  }
}

#include "uigroup/embedding.hpp"

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

using namespace uigroup;
namespace tu = uigroup::testutil;

namespace {

EmbedConfig desk_cfg() {
  EmbedConfig cfg;
  cfg.d = 16;
  cfg.text_vocab = 64;
  return cfg;
}

ElementSequence tiny_sequence() {
  ElementSequence seq;
  seq.records.push_back({"a", NodeClass::kOval, "path 1", {4, 4, 20, 20},
                         Rgba{255, 0, 0, 255}, Label::kStartMerge});
  seq.records.push_back({"b", NodeClass::kRectangle, "status bar", {0, 0, 320, 24},
                         std::nullopt, Label::kNonMerge});
  seq.records.push_back({"c", NodeClass::kText, "title", {10, 40, 80, 18},
                         Rgba{0, 0, 0, 255}, Label::kNonMerge});
  return seq;
}

std::vector<TensorF> tiny_images(const ElementSequence& seq) {
  std::vector<TensorF> images;
  for (const auto& rec : seq.records) {
    UINode leaf{rec.uuid, rec.cls, rec.name, rec.frame, rec.color, rec.label, {}};
    images.push_back(image_to_tensor<float>(rasterize_element(leaf)));
  }
  return images;
}

}  // namespace

TEST_CASE("tokenize: two tokens centered between pads") {
  const auto idx = tokenize_text("Status Bars", 32, 1024);
  REQUIRE(idx.size() == 32);
  for (int i = 0; i < 15; ++i) CHECK(idx[static_cast<std::size_t>(i)] == 0);
  CHECK(idx[15] != 0);
  CHECK(idx[16] != 0);
  for (int i = 17; i < 32; ++i) CHECK(idx[static_cast<std::size_t>(i)] == 0);
  // Case-normalized: hashes match the lowercase form.
  CHECK(idx == tokenize_text("status bars", 32, 1024));
}

TEST_CASE("tokenize: empty and overlong strings") {
  const auto empty = tokenize_text("", 32, 1024);
  CHECK(std::count(empty.begin(), empty.end(), 0) == 32);

  std::string longname;
  for (int i = 0; i < 40; ++i) longname += "tok" + std::to_string(i) + " ";
  const auto idx = tokenize_text(longname, 32, 1024);
  CHECK(std::count(idx.begin(), idx.end(), 0) == 0);  // exactly 32 kept tokens
}

TEST_CASE("tokenize: indices always in [1, vocab) for non-pads") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng.uniform_int(0, 20));
    for (int i = 0; i < len; ++i) s += static_cast<char>(rng.uniform_int(32, 126));
    for (int v : tokenize_text(s, 32, 256)) {
      CHECK(v >= 0);
      CHECK(v < 256);
    }
  }
}

TEST_CASE("positional encoding: frozen values and range") {
  const TensorF pe0 = positional_encoding<float>(0, 8);
  for (int j = 0; j < 8; j += 2) {
    CHECK(pe0.value()[static_cast<std::size_t>(j)] == 0.0f);
    CHECK(pe0.value()[static_cast<std::size_t>(j + 1)] == 1.0f);
  }

  const TensorF pe1 = positional_encoding<float>(1, 4);
  CHECK(pe1.value()[0] == doctest::Approx(0.8415f).epsilon(1e-3));
  CHECK(pe1.value()[1] == doctest::Approx(0.5403f).epsilon(1e-3));
  CHECK(pe1.value()[2] == doctest::Approx(0.0100f).epsilon(1e-3));
  CHECK(pe1.value()[3] == doctest::Approx(1.0000f).epsilon(1e-4));

  for (std::int64_t pos : {0, 3, 17, 400})
    for (float v : positional_encoding<float>(pos, 12).value()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }

  CHECK_THROWS_AS(positional_encoding<float>(0, 7), ConfigError);
}

TEST_CASE("positional encoding: pure function of (pos, d)") {
  const TensorF a = positional_encoding<float>(9, 16);
  const TensorF b = positional_encoding<float>(9, 16);
  CHECK(a.value() == b.value());
}

TEST_CASE("encode_image: shape contract and determinism") {
  Rng rng(11);
  auto params = ImageEncoderParams<float>::init(16, rng);
  UINode leaf{"x", NodeClass::kRectangle, "box", {0, 0, 40, 40}, Rgba{10, 60, 200, 255}, {}, {}};
  const TensorF img = image_to_tensor<float>(rasterize_element(leaf));

  const TensorF v1 = encode_image(img, params);
  CHECK(v1.shape() == Shape{1, 16});
  const TensorF v2 = encode_image(img, params);
  CHECK(v1.value() == v2.value());

  CHECK_THROWS_AS(encode_image(TensorF::zeros({3, 32, 32}), params), ShapeError);
}

TEST_CASE("encode_image: zero input reproduces the cached bias pathway") {
  Rng rng(12);
  auto params = ImageEncoderParams<float>::init(8, rng);
  const TensorF zero_img = TensorF::zeros({3, 64, 64});
  const std::vector<float> reference = encode_image(zero_img, params).value();
  for (int rep = 0; rep < 3; ++rep)
    CHECK(encode_image(zero_img, params).value() == reference);
}

TEST_CASE("encode_text: pad/zero semantics and order invariance") {
  Rng rng(13);
  TensorF table = TensorF::uniform({32, 6}, -1, 1, rng, true);
  EmbedderParams<float>::zero_row0(table);

  const std::vector<int> all_pad(32, 0);
  for (float v : encode_text(all_pad, table).value()) CHECK(v == 0.0f);

  std::vector<int> one(32, 0);
  one[7] = 9;
  const TensorF row = encode_text(one, table);
  for (int j = 0; j < 6; ++j)
    CHECK(row.value()[static_cast<std::size_t>(j)] == table.at(9, j));

  std::vector<int> ab(32, 0), ba(32, 0);
  ab[0] = 3;
  ab[1] = 11;
  ba[0] = 11;
  ba[1] = 3;
  CHECK(encode_text(ab, table).value() == encode_text(ba, table).value());
}

TEST_CASE("encode_color: normalization and absent colors") {
  Rng rng(14);
  auto params = LinearParams<float>::init(4, 8, rng);

  // Absent color with zero bias: exactly the zero vector.
  for (float v : encode_color<float>(std::nullopt, params).value()) CHECK(v == 0.0f);

  auto expect_input = [&params](std::vector<float> input) {
    return add_rowvec(matmul(TensorF::from({1, 4}, std::move(input)), params.weight),
                      params.bias)
        .value();
  };
  CHECK(encode_color<float>(Rgba{255, 255, 255, 255}, params).value() ==
        expect_input({1, 1, 1, 1}));
  CHECK(encode_color<float>(Rgba{127.5, 0, 0, 255}, params).value() ==
        expect_input({0.5f, 0, 0, 1}));

  CHECK_THROWS_AS(encode_color<float>(Rgba{300, 0, 0, 255}, params), ValidationError);
}

TEST_CASE("encode_frame: corner conversion and canvas validation") {
  Rng rng(15);
  auto params = LinearParams<float>::init(4, 8, rng);
  auto expect_input = [&params](std::vector<float> input) {
    return add_rowvec(matmul(TensorF::from({1, 4}, std::move(input)), params.weight),
                      params.bias)
        .value();
  };
  CHECK(encode_frame<float>({0, 0, 100, 200}, 100, 200, params).value() ==
        expect_input({0, 0, 1, 1}));
  CHECK(encode_frame<float>({10, 20, 30, 40}, 100, 200, params).value() ==
        expect_input({0.1f, 0.1f, 0.4f, 0.3f}));
  CHECK(encode_frame<float>({10, 20, 0, 0}, 100, 200, params).value() ==
        expect_input({0.1f, 0.1f, 0.1f, 0.1f}));
  CHECK_THROWS_AS(encode_frame<float>({0, 0, 1, 1}, 0, 100, params), ValidationError);
}

TEST_CASE("encode_class: stable rows, unknown falls back to unk row") {
  Rng rng(16);
  TensorF table = TensorF::uniform({kClassVocab + 1, 8}, -1, 1, rng, true);
  const TensorF t1 = encode_class(NodeClass::kText, table);
  const TensorF t2 = encode_class(NodeClass::kText, table);
  CHECK(t1.value() == t2.value());
  const TensorF unk = encode_class(NodeClass::kUnk, table);
  for (int j = 0; j < 8; ++j)
    CHECK(unk.value()[static_cast<std::size_t>(j)] == table.at(class_embedding_id(NodeClass::kUnk), j));
}

TEST_CASE("encode_class: rows diverge after a separating training step") {
  Rng rng(17);
  TensorF table = TensorF::uniform({kClassVocab + 1, 8}, -0.1f, 0.1f, rng, true);
  std::vector<TensorF> params{table};
  AdamState<float> adam;
  adam.lr = 0.05f;
  adam.init(params);

  const TensorF before_oval = encode_class(NodeClass::kOval, table).detach();
  TensorF diff = sub(encode_class(NodeClass::kOval, table),
                     encode_class(NodeClass::kRectangle, table));
  backward(sum_all(diff));
  adam_step(params, adam);

  const TensorF after_oval = encode_class(NodeClass::kOval, table);
  const TensorF after_rect = encode_class(NodeClass::kRectangle, table);
  CHECK(after_oval.value() != before_oval.value());
  CHECK(after_oval.value() != after_rect.value());
}

TEST_CASE("embed_sequence: disabled modalities leave pure positional rows") {
  const ElementSequence seq = tiny_sequence();
  Rng rng(18);
  const EmbedConfig cfg = desk_cfg();
  auto params = EmbedderParams<float>::init(cfg, rng);
  Modalities none{false, false, false, false, false};
  FwdCtx<float> ctx;

  const TensorF f = embed_sequence<float>(seq, {}, 320, 640, params, cfg, none, ctx);
  REQUIRE(f.shape() == Shape{3, 16});
  for (std::int64_t i = 0; i < 3; ++i) {
    const TensorF pe = positional_encoding<float>(i, 16);
    for (int j = 0; j < 16; ++j) CHECK(f.at(i, j) == pe.value()[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("embed_sequence: removing text equals subtracting the text vector") {
  const ElementSequence seq = tiny_sequence();
  Rng rng(19);
  const EmbedConfig cfg = desk_cfg();
  auto params = EmbedderParams<float>::init(cfg, rng);
  const auto images = tiny_images(seq);
  FwdCtx<float> ctx;

  Modalities all;
  Modalities no_text;
  no_text.text = false;
  const TensorF full = embed_sequence(seq, images, 320, 640, params, cfg, all, ctx);
  const TensorF without = embed_sequence(seq, images, 320, 640, params, cfg, no_text, ctx);

  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TensorF text = encode_text(
        tokenize_text(seq.records[i].name, cfg.text_len, cfg.text_vocab), params.text_table);
    for (int j = 0; j < cfg.d; ++j)
      CHECK(full.at(static_cast<std::int64_t>(i), j) -
                without.at(static_cast<std::int64_t>(i), j) ==
            doctest::Approx(text.value()[static_cast<std::size_t>(j)]).epsilon(1e-6));
  }
}

TEST_CASE("embed_sequence: subset additivity") {
  const ElementSequence seq = tiny_sequence();
  Rng rng(20);
  const EmbedConfig cfg = desk_cfg();
  auto params = EmbedderParams<float>::init(cfg, rng);
  const auto images = tiny_images(seq);
  FwdCtx<float> ctx;

  Rng pick(99);
  for (int trial = 0; trial < 8; ++trial) {
    Modalities sub{}, comp{};
    sub.image = pick.bernoulli(0.5);
    sub.text = pick.bernoulli(0.5);
    sub.color = pick.bernoulli(0.5);
    sub.frame = pick.bernoulli(0.5);
    sub.cls = pick.bernoulli(0.5);
    comp.image = !sub.image;
    comp.text = !sub.text;
    comp.color = !sub.color;
    comp.frame = !sub.frame;
    comp.cls = !sub.cls;

    Modalities all;
    const TensorF fs = embed_sequence(seq, images, 320, 640, params, cfg, sub, ctx);
    const TensorF fc = embed_sequence(seq, images, 320, 640, params, cfg, comp, ctx);
    const TensorF fa = embed_sequence(seq, images, 320, 640, params, cfg, all, ctx);
    for (std::int64_t i = 0; i < 3; ++i) {
      const TensorF pe = positional_encoding<float>(i, cfg.d);
      for (int j = 0; j < cfg.d; ++j)
        CHECK(fs.at(i, j) + fc.at(i, j) - pe.value()[static_cast<std::size_t>(j)] ==
              doctest::Approx(fa.at(i, j)).epsilon(2e-5));
    }
  }
}

TEST_CASE("embed_sequence: empty sequence and misaligned images") {
  Rng rng(21);
  const EmbedConfig cfg = desk_cfg();
  auto params = EmbedderParams<float>::init(cfg, rng);
  FwdCtx<float> ctx;
  Modalities all;

  const TensorF f = embed_sequence<float>(ElementSequence{}, {}, 320, 640, params, cfg, all, ctx);
  CHECK(f.shape() == Shape{0, 16});

  CHECK_THROWS_AS(embed_sequence<float>(tiny_sequence(), {}, 320, 640, params, cfg, all, ctx),
                  ShapeError);
}

#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace ciao;
using ciao::testing::TempDir;

namespace {

std::set<std::string> trainable(Encoder& e) {
  std::set<std::string> s;
  for (auto* p : e.params())
    if (p->trainable) s.insert(p->name);
  return s;
}

}  // namespace

TEST(Encoder, DefaultFeatureSize) {
  const EncoderConfig cfg;
  EXPECT_EQ(cfg.feature_size(), 32u * 4 * 4);
  Encoder e(cfg, 0);
  std::mt19937_64 rng(0);
  const auto r = encode(e, ciao::testing::random_tensor({3, 1, 32, 32}, rng, 0, 1));
  EXPECT_EQ(r.flat.shape(), (Shape{3, 512}));
  EXPECT_EQ(r.last_conv_input.shape(), (Shape{3, 16, 8, 8}));
  EXPECT_EQ(r.last_conv_output.shape(), (Shape{3, 32, 4, 4}));
}

TEST(Encoder, ConvParamCount) {
  Encoder e(EncoderConfig{}, 0);
  std::size_t n = 0;
  for (auto* p : e.params()) n += p->size();
  EXPECT_EQ(n, (8u * 9 + 8) + (16u * 8 * 9 + 16) + (32u * 16 * 9 + 32));
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig one;
  one.blocks = {8};
  EXPECT_THROW(one.validate(), ValidationError);
  EncoderConfig odd;
  odd.height = 20;  // 20 -> 10 -> 5, then a pool on odd dims
  EXPECT_THROW(odd.validate(), ValidationError);
  EXPECT_THROW(encoder_config_from_json({{"blocks", {4, 8}}, {"last_conv_index", 2}}), ValidationError);
}

TEST(Encoder, BatchIndependence) {
  Encoder e(EncoderConfig{}, 3);
  std::mt19937_64 rng(5);
  const Tensor imgs = ciao::testing::random_tensor({3, 1, 32, 32}, rng, 0, 1);
  const auto all = encode(e, imgs);
  const auto one = encode(e, imgs.slice_rows(1, 2));
  EXPECT_EQ(one.flat, all.flat.slice_rows(1, 2));
}

TEST(Encoder, RejectsWrongInputShape) {
  Encoder e(EncoderConfig{}, 0);
  EXPECT_THROW(encode(e, Tensor({1, 1, 16, 16})), ShapeError);
  EXPECT_THROW(encode(e, Tensor({1, 3, 32, 32})), ShapeError);
}

TEST(Encoder, FreezeScoping) {
  Encoder e(EncoderConfig{}, 0);
  e.freeze();
  EXPECT_TRUE(trainable(e).empty());
  e.unfreeze_last_conv();
  EXPECT_EQ(trainable(e), (std::set<std::string>{"encoder.conv2.w", "encoder.conv2.b"}));
  e.unfreeze_last_conv();
  EXPECT_EQ(trainable(e).size(), 2u) << "idempotent";
  e.unfreeze_all();
  EXPECT_EQ(trainable(e).size(), 6u);
  e.freeze();
  e.freeze();
  EXPECT_TRUE(trainable(e).empty());
}

TEST(Encoder, FrozenBackwardLeavesGradsZero) {
  Encoder e(EncoderConfig{}, 0);
  e.freeze();
  std::mt19937_64 rng(1);
  Graph g;
  auto v = e.forward(g, g.constant(ciao::testing::random_tensor({2, 1, 32, 32}, rng, 0, 1)));
  Param head("h", ciao::testing::random_tensor({512, 1}, rng));
  g.backward(sum(dense(v.flat, g.param(head), g.constant(Tensor({1})))));
  for (auto* p : e.params())
    for (float x : p->grad.data()) ASSERT_EQ(x, 0.0f) << p->name;
}

TEST(EncoderFile, RoundTripIsBitwise) {
  TempDir dir;
  Encoder e(EncoderConfig{}, 9);
  save_encoder(e, dir / "a");
  const Encoder back = load_encoder(dir / "a");
  save_encoder(back, dir / "b");
  for (const char* f : {"layer_0_w.tnsr", "layer_0_b.tnsr", "layer_1_w.tnsr", "layer_2_b.tnsr", "config.json"})
    EXPECT_EQ(read_file_bytes(dir / "a" / f), read_file_bytes(dir / "b" / f)) << f;
  const auto j = nlohmann::json::parse(read_file_bytes(dir / "a" / "config.json"));
  EXPECT_EQ(j.at("blocks"), nlohmann::json({8, 16, 32}));
  EXPECT_EQ(j.at("input_size"), nlohmann::json({1, 32, 32}));
  EXPECT_EQ(j.at("last_conv_index"), 2);
}

TEST(EncoderFile, TruncatedPayloadIsError) {
  TempDir dir;
  save_encoder(Encoder(EncoderConfig{}, 0), dir / "e");
  const auto path = dir / "e" / "layer_1_w.tnsr";
  std::string bytes = read_file_bytes(path);
  write_file_bytes(path, bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(load_encoder(dir / "e"), FormatError);
}

TEST(EncoderFile, MismatchedConfigIsError) {
  TempDir dir;
  save_encoder(Encoder(EncoderConfig{}, 0), dir / "e");
  write_file_bytes(dir / "e" / "config.json", R"({"blocks": [8, 16, 64], "input_size": [1, 32, 32]})");
  EXPECT_THROW(load_encoder(dir / "e"), FormatError);
}

TEST(Pretrain, FourIdentitiesReachHeldOutAccuracy) {
  SynthSpec s;
  s.n_identities = 4;
  const IdentityDataset proxy = identity_view(generate(s));
  const PretrainResult r = pretrain_proxy(Encoder(EncoderConfig{}, 0), proxy, PretrainOptions{});
  EXPECT_GT(r.heldout_accuracy, 0.8);
  EXPECT_EQ(r.epoch_losses.size(), 20u);
  EXPECT_TRUE(r.encoder.prefix_frozen() && r.encoder.last_conv_frozen());
}

TEST(Pretrain, ZeroEpochsKeepsWeights) {
  SynthSpec s;
  s.n_identities = 2;
  s.samples_per_cell = 2;
  const Encoder start(EncoderConfig{}, 4);
  PretrainOptions opt;
  opt.epochs = 0;
  PretrainResult r = pretrain_proxy(start, identity_view(generate(s)), opt);
  Encoder copy = start;
  for (std::size_t i = 0; i < copy.layers().size(); ++i) EXPECT_EQ(r.encoder.layers()[i].weight.value, copy.layers()[i].weight.value);
}

TEST(Pretrain, DeterministicAndNeedsTwoIdentities) {
  SynthSpec s;
  s.n_identities = 3;
  s.samples_per_cell = 2;
  PretrainOptions opt;
  opt.epochs = 2;
  const auto proxy = identity_view(generate(s));
  auto a = pretrain_proxy(Encoder(EncoderConfig{}, 1), proxy, opt);
  auto b = pretrain_proxy(Encoder(EncoderConfig{}, 1), proxy, opt);
  for (std::size_t i = 0; i < a.encoder.layers().size(); ++i)
    EXPECT_EQ(a.encoder.layers()[i].weight.value, b.encoder.layers()[i].weight.value);

  IdentityDataset single = proxy;
  single.num_identities = 1;
  EXPECT_THROW(pretrain_proxy(Encoder(EncoderConfig{}, 1), single, opt), ValidationError);
}

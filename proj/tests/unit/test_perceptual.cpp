#include <gtest/gtest.h>

#include <fstream>

#include "csud/error.hpp"
#include "csud/losses.hpp"
#include "csud/perceptual.hpp"
#include "support/fixtures.hpp"

namespace {

namespace F = torch::nn::functional;

// Writes a torchvision-style state_dict covering conv layers 0, 2 and 5.
void write_fake_vgg(const std::filesystem::path& path, std::map<std::string, torch::Tensor>& tensors) {
  tensors["0.weight"] = torch::randn({64, 3, 3, 3}) * 0.1;
  tensors["0.bias"] = torch::randn({64}) * 0.1;
  tensors["2.weight"] = torch::randn({64, 64, 3, 3}) * 0.05;
  tensors["2.bias"] = torch::randn({64}) * 0.1;
  tensors["5.weight"] = torch::randn({128, 64, 3, 3}) * 0.05;
  tensors["5.bias"] = torch::randn({128}) * 0.1;
  c10::Dict<std::string, torch::Tensor> dict;
  for (const auto& [k, v] : tensors) dict.insert(k, v);
  const auto bytes = torch::pickle_save(c10::IValue(dict));
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(Vgg19Features, TapIndicesFollowTorchvisionLayout) {
  EXPECT_EQ(csud::Vgg19Features::tap_index("relu1_1"), 1);
  EXPECT_EQ(csud::Vgg19Features::tap_index("relu2_1"), 6);
  EXPECT_EQ(csud::Vgg19Features::tap_index("relu3_1"), 11);
  EXPECT_EQ(csud::Vgg19Features::tap_index("relu4_1"), 20);
  EXPECT_THROW(csud::Vgg19Features::tap_index("relu9_9"), csud::ConfigError);
}

TEST(Vgg19Features, LoadsStateDictAndTapsLayers) {
  csud::testing::TempDir dir("vgg");
  std::map<std::string, torch::Tensor> w;
  write_fake_vgg(dir / "vgg.pt", w);
  csud::Vgg19Features vgg((dir / "vgg.pt").string(), {"relu1_1", "relu2_1"});
  auto x = torch::rand({2, 3, 16, 16});
  const auto feats = vgg.features(x);
  ASSERT_EQ(feats.size(), 2u);
  EXPECT_EQ(feats[0].sizes(), torch::IntArrayRef({2, 64, 16, 16}));
  EXPECT_EQ(feats[1].sizes(), torch::IntArrayRef({2, 128, 8, 8}));

  const auto mean = torch::tensor({0.485, 0.456, 0.406}).view({1, 3, 1, 1});
  const auto std = torch::tensor({0.229, 0.224, 0.225}).view({1, 3, 1, 1});
  const auto expected =
      torch::relu(F::conv2d((x - mean) / std, w["0.weight"], F::Conv2dFuncOptions().bias(w["0.bias"]).padding(1)));
  EXPECT_TRUE(torch::allclose(feats[0], expected, 1e-5, 1e-5));
}

TEST(Vgg19Features, MissingLayerWeightsAreReported) {
  csud::testing::TempDir dir("vgg");
  std::map<std::string, torch::Tensor> w;
  write_fake_vgg(dir / "vgg.pt", w);
  EXPECT_THROW(csud::Vgg19Features((dir / "vgg.pt").string(), {"relu3_1"}), csud::IoError);
}

TEST(FixedRandomFeatures, SeededFrozenAndMultiScale) {
  csud::FixedRandomFeatures a(4), b(4), c(5);
  auto x = torch::rand({1, 3, 32, 32});
  const auto fa = a.features(x);
  ASSERT_EQ(fa.size(), 3u);
  EXPECT_TRUE(torch::equal(fa[2], b.features(x)[2]));
  EXPECT_FALSE(torch::equal(fa[2], c.features(x)[2]));
  EXPECT_EQ(fa[0].size(1), 16);
  EXPECT_EQ(fa[2].size(1), 64);

  auto y = torch::rand({1, 3, 32, 32}).requires_grad_(true);
  csud::perceptual_loss(a, y, x).backward();
  EXPECT_GT(y.grad().abs().sum().item<double>(), 0.0);
}

TEST(MakeFeatureExtractor, FallbackPolicy) {
  csud::PerceptualConfig cfg;
  cfg.weights_path = "/nonexistent/vgg19.pt";
  EXPECT_EQ(csud::make_feature_extractor(cfg)->name(), "fixed-random");
  cfg.fallback = "none";
  EXPECT_THROW(csud::make_feature_extractor(cfg), csud::ConfigError);
  cfg.profile = "fixed-random";
  EXPECT_EQ(csud::make_feature_extractor(cfg)->name(), "fixed-random");
}

TEST(PerceptualLoss, ZeroForIdenticalInputs) {
  csud::FixedRandomFeatures f(1);
  auto x = torch::rand({1, 3, 16, 16});
  EXPECT_EQ(csud::perceptual_loss(f, x, x).item<double>(), 0.0);
}

}  // namespace

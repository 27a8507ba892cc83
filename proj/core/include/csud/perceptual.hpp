#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace csud {

/// Frozen feature network for the perceptual term. Parameters never receive
/// gradient; gradients do flow back to the input images.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<torch::Tensor> features(const torch::Tensor& images) = 0;
  virtual std::string name() const = 0;
};

struct PerceptualConfig {
  std::string profile = "pretrained";     // pretrained | fixed-random
  std::string weights_path;               // VGG-19 features state_dict (torch.save)
  std::string fallback = "fixed-random";  // fixed-random | none
  std::vector<std::string> layers{"relu1_1", "relu2_1", "relu3_1", "relu4_1"};
  uint64_t seed = 0;
};

/// VGG-19 `features` trunk up to the deepest requested tap, with ImageNet input
/// normalization. Weights come from a state_dict saved by torch.save with the
/// torchvision key layout ("0.weight", "0.bias", "2.weight", ...).
class Vgg19Features : public FeatureExtractor {
 public:
  Vgg19Features(const std::string& weights_path, const std::vector<std::string>& layers);
  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::string name() const override { return "pretrained"; }

  /// Layer index inside the torchvision `features` sequence for a tap name like "relu3_1".
  static int tap_index(const std::string& layer);

 private:
  torch::nn::Sequential trunk_{nullptr};
  std::vector<int> taps_;
};

/// Seed-frozen random conv stack (3 stages, 16/32/64 channels, average pooling).
class FixedRandomFeatures : public FeatureExtractor {
 public:
  explicit FixedRandomFeatures(uint64_t seed);
  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::string name() const override { return "fixed-random"; }

 private:
  std::vector<torch::nn::Conv2d> stages_;
};

/// Resolves the configured profile; a missing pretrained file falls back to the
/// fixed-random stack when allowed and raises ConfigError otherwise.
std::shared_ptr<FeatureExtractor> make_feature_extractor(const PerceptualConfig& config);

}  // namespace csud

#include "csud/perceptual.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "csud/error.hpp"

namespace csud {

namespace {

// torchvision vgg19().features layout: 'M' marks a max-pool.
constexpr int kVggPlan[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1,
                            512, 512, 512, 512, -1, 512, 512, 512, 512, -1};

const std::map<std::string, int>& vgg_taps() {
  static const std::map<std::string, int> taps{
      {"relu1_1", 1},  {"relu1_2", 3},  {"relu2_1", 6},  {"relu2_2", 8},  {"relu3_1", 11},
      {"relu3_2", 13}, {"relu3_3", 15}, {"relu3_4", 17}, {"relu4_1", 20}, {"relu4_2", 22},
      {"relu4_3", 24}, {"relu4_4", 26}, {"relu5_1", 29}, {"relu5_2", 31}, {"relu5_3", 33},
      {"relu5_4", 35}};
  return taps;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read perceptual weights: " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

int Vgg19Features::tap_index(const std::string& layer) {
  const auto it = vgg_taps().find(layer);
  if (it == vgg_taps().end()) throw ConfigError("perceptual: unknown VGG-19 layer '" + layer + "'");
  return it->second;
}

Vgg19Features::Vgg19Features(const std::string& weights_path, const std::vector<std::string>& layers) {
  if (layers.empty()) throw ConfigError("perceptual: empty layer list");
  for (const auto& l : layers) taps_.push_back(tap_index(l));
  std::sort(taps_.begin(), taps_.end());
  const int deepest = taps_.back();

  auto state = torch::pickle_load(read_bytes(weights_path));
  if (!state.isGenericDict()) throw IoError("perceptual weights are not a state_dict: " + weights_path);
  auto dict = state.toGenericDict();
  auto fetch = [&](const std::string& key) {
    for (const auto& entry : dict) {
      if (entry.key().toStringRef() == key) return entry.value().toTensor().to(torch::kFloat32);
    }
    throw IoError("perceptual weights missing '" + key + "' in " + weights_path);
  };

  trunk_ = torch::nn::Sequential();
  int index = 0;
  int in_channels = 3;
  for (int width : kVggPlan) {
    if (index > deepest) break;
    if (width < 0) {
      trunk_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
      ++index;
      continue;
    }
    torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in_channels, width, 3).padding(1));
    {
      torch::NoGradGuard no_grad;
      const auto w = fetch(std::to_string(index) + ".weight");
      const auto b = fetch(std::to_string(index) + ".bias");
      if (!w.sizes().equals(conv->weight.sizes()) || !b.sizes().equals(conv->bias.sizes())) {
        throw IoError("perceptual weights: shape mismatch at layer " + std::to_string(index));
      }
      conv->weight.copy_(w);
      conv->bias.copy_(b);
    }
    trunk_->push_back(conv);
    trunk_->push_back(torch::nn::ReLU());
    index += 2;
    in_channels = width;
  }
  for (auto& p : trunk_->parameters()) p.set_requires_grad(false);
  trunk_->eval();
}

std::vector<torch::Tensor> Vgg19Features::features(const torch::Tensor& images) {
  auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
  const auto opts = x.options();
  const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  const auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  x = (x - mean) / std;
  if (x.scalar_type() != torch::kFloat32) trunk_->to(x.scalar_type());

  std::vector<torch::Tensor> out;
  size_t next = 0;
  int index = 0;
  for (auto& layer : *trunk_) {
    if (next == taps_.size()) break;
    x = layer.forward(x);
    if (index == taps_[next]) {
      out.push_back(x);
      ++next;
    }
    ++index;
  }
  return out;
}

FixedRandomFeatures::FixedRandomFeatures(uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const int widths[] = {16, 32, 64};
  int in_channels = 3;
  torch::NoGradGuard no_grad;
  for (int width : widths) {
    torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in_channels, width, 3).padding(1));
    conv->weight.normal_(0.0, std::sqrt(2.0 / (in_channels * 9.0)), gen);
    conv->bias.zero_();
    conv->weight.set_requires_grad(false);
    conv->bias.set_requires_grad(false);
    stages_.push_back(conv);
    in_channels = width;
  }
}

std::vector<torch::Tensor> FixedRandomFeatures::features(const torch::Tensor& images) {
  auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
  std::vector<torch::Tensor> out;
  for (size_t i = 0; i < stages_.size(); ++i) {
    if (i > 0) x = torch::avg_pool2d(x, 2);
    if (x.scalar_type() != stages_[i]->weight.scalar_type()) stages_[i]->to(x.scalar_type());
    x = torch::relu(stages_[i]->forward(x));
    out.push_back(x);
  }
  return out;
}

std::shared_ptr<FeatureExtractor> make_feature_extractor(const PerceptualConfig& config) {
  if (config.profile == "fixed-random") return std::make_shared<FixedRandomFeatures>(config.seed);
  if (config.profile != "pretrained") {
    throw ConfigError("perceptual: unknown profile '" + config.profile + "'");
  }
  if (config.fallback != "fixed-random" && config.fallback != "none") {
    throw ConfigError("perceptual: unknown fallback '" + config.fallback + "'");
  }
  const bool available = !config.weights_path.empty() && std::filesystem::is_regular_file(config.weights_path);
  if (available) return std::make_shared<Vgg19Features>(config.weights_path, config.layers);
  if (config.fallback == "fixed-random") {
    std::cerr << "[csud] perceptual: pretrained VGG-19 weights "
              << (config.weights_path.empty() ? std::string("not configured") : "not found at " + config.weights_path)
              << "; using fixed-random features\n";
    return std::make_shared<FixedRandomFeatures>(config.seed);
  }
  throw ConfigError("perceptual: pretrained extractor unavailable ('" + config.weights_path +
                    "') and no fallback configured");
}

}  // namespace csud

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace csud {

struct GeneratorConfig {
  int base_channels = 64;        // CFEM and RIEM feature width
  int riem_down_channels = 128;  // RIEM bottleneck after the strided conv
  int num_residual_blocks = 6;
  int trunk_channels = 128;      // must equal 2 * base_channels (concatenated features)
  bool riem_skip = false;        // add the pre-downsample RIEM feature to the upsampled one

  void validate() const;
};

/// conv-ReLU-conv with an additive skip.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Rain-transfer generator G(content, guide).
///
/// CFEM: one 7x7 conv on the clean content. RIEM: two 7x7 convs, a 4x4 stride-2
/// downsampling conv and a bilinear upsample followed by a 3x3 conv, applied to
/// the guide. The two 64-channel feature maps are concatenated, passed through the
/// residual trunk and projected back to RGB. There is no output activation.
/// With `riem_skip` the full-resolution RIEM feature is added to the upsampled
/// one (no extra parameters).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config = {});

  // Accepts (3, H, W) or (N, 3, H, W); content and guide must share spatial size.
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& guide);

  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Conv2d cfem_{nullptr};
  torch::nn::Conv2d riem_conv1_{nullptr};
  torch::nn::Conv2d riem_conv2_{nullptr};
  torch::nn::Conv2d riem_down_{nullptr};
  torch::nn::Conv2d riem_up_{nullptr};
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d project_{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorConfig {
  std::vector<int> widths{64, 128, 256, 512};
  std::vector<int> strides{2, 2, 2, 1};
  int kernel = 4;

  void validate() const;
  /// Side length of the logit map for a square input of side `input`; <= 0 if empty.
  int64_t output_size(int64_t input) const;
  /// Smallest input side for which every instance-normalized layer sees more than
  /// one spatial element and the logit map is non-empty.
  int64_t min_input_size() const;
};

/// Patch discriminator: 4x4 conv + ReLU, three conv/InstanceNorm/ReLU layers and a
/// final stride-1 4x4 conv to a single-channel logit map.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config = {});
  torch::Tensor forward(const torch::Tensor& img);

  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Any image-to-image restoration network can be plugged in as the derainer.
class DerainerImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& rainy) = 0;
};

struct DerainerConfig {
  int width = 32;
  bool zero_init_last = true;  // identity map at initialization

  void validate() const;
};

/// Three-scale U-shaped residual CNN with a global input-to-output skip.
/// Inputs whose sides are not multiples of 4 are reflect-padded and cropped back.
class UNetDerainerImpl : public DerainerImpl {
 public:
  explicit UNetDerainerImpl(const DerainerConfig& config = {});
  torch::Tensor forward(const torch::Tensor& rainy) override;

  const DerainerConfig& config() const { return config_; }
  torch::nn::Conv2d& last_conv() { return out_; }

 private:
  DerainerConfig config_;
  torch::nn::Sequential enc1_{nullptr}, enc2_{nullptr}, mid_{nullptr};
  torch::nn::Conv2d down1_{nullptr}, down2_{nullptr};
  torch::nn::Conv2d up2_{nullptr}, up1_{nullptr};
  torch::nn::Sequential dec2_{nullptr}, dec1_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};

struct ModelConfigs {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  DerainerConfig derainer;
};

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

/// G, D and Der. Parameter names are prefixed "g.", "d." and "der.".
struct ModelBundle {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::shared_ptr<DerainerImpl> derainer;

  NamedTensors named_parameters() const;
  void train(bool on = true);
};

/// normal(0, 0.02) conv weights and zero biases drawn from a generator seeded
/// with `seed`; the default derainer's last conv is zeroed when configured.
ModelBundle init_models(const ModelConfigs& configs, uint64_t seed);

int64_t parameter_count(const torch::nn::Module& module);

/// Turns off requires_grad on every parameter of a module for its lifetime and
/// restores the previous flags afterwards. Gradients still flow through inputs.
class FrozenParameters {
 public:
  explicit FrozenParameters(const torch::nn::Module& module);
  ~FrozenParameters();
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  std::vector<std::pair<torch::Tensor, bool>> saved_;
};

}  // namespace csud

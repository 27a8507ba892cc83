#include "csud/models.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "csud/error.hpp"

namespace csud {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

// Lifts a single (3, H, W) image to a batch of one; returns whether it did.
bool ensure_batched(torch::Tensor& t, const char* what) {
  if (t.dim() == 3) {
    t = t.unsqueeze(0);
    return true;
  }
  if (t.dim() != 4) throw InvalidInput(std::string(what) + ": expected (3,H,W) or (N,3,H,W)");
  return false;
}

void require_rgb(const torch::Tensor& t, const char* what) {
  if (t.size(1) != 3) throw InvalidInput(std::string(what) + ": expected 3 channels");
}

torch::Tensor upsample_to(const torch::Tensor& x, int64_t h, int64_t w) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (base_channels < 1 || riem_down_channels < 1) throw ConfigError("generator: channel widths must be positive");
  if (num_residual_blocks < 1) throw ConfigError("generator: num_residual_blocks must be >= 1");
  if (trunk_channels != 2 * base_channels) {
    throw ConfigError("generator: trunk_channels must equal 2 * base_channels");
  }
}

ResidualBlockImpl::ResidualBlockImpl(int channels)
    : conv1_(register_module("conv1", conv(channels, channels, 3, 1, 1))),
      conv2_(register_module("conv2", conv(channels, channels, 3, 1, 1))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_(torch::relu(conv1_(x)));
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  const int c = config_.base_channels;
  cfem_ = register_module("cfem", conv(3, c, 7, 1, 3));
  riem_conv1_ = register_module("riem_conv1", conv(3, c, 7, 1, 3));
  riem_conv2_ = register_module("riem_conv2", conv(c, c, 7, 1, 3));
  riem_down_ = register_module("riem_down", conv(c, config_.riem_down_channels, 4, 2, 1));
  riem_up_ = register_module("riem_up", conv(config_.riem_down_channels, c, 3, 1, 1));
  trunk_ = torch::nn::Sequential();
  for (int i = 0; i < config_.num_residual_blocks; ++i) trunk_->push_back(ResidualBlock(config_.trunk_channels));
  trunk_ = register_module("trunk", trunk_);
  project_ = register_module("project", conv(config_.trunk_channels, 3, 3, 1, 1));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& content_in, const torch::Tensor& guide_in) {
  auto content = content_in;
  auto guide = guide_in;
  const bool single = ensure_batched(content, "generator content");
  ensure_batched(guide, "generator guide");
  require_rgb(content, "generator content");
  require_rgb(guide, "generator guide");
  if (content.size(2) != guide.size(2) || content.size(3) != guide.size(3)) {
    throw InvalidInput("generator: content and guide spatial sizes differ");
  }
  if (content.size(0) != guide.size(0)) throw InvalidInput("generator: batch sizes differ");
  const auto h = content.size(2);
  const auto w = content.size(3);
  if (h < 2 || w < 2) throw InvalidInput("generator: spatial size must be at least 2x2");

  auto clean_features = torch::relu(cfem_(content));
  auto rain = torch::relu(riem_conv1_(guide));
  const auto full_res = torch::relu(riem_conv2_(rain));
  rain = torch::relu(riem_down_(full_res));
  rain = torch::relu(riem_up_(upsample_to(rain, h, w)));
  if (config_.riem_skip) rain = rain + full_res;

  auto out = project_(trunk_->forward(torch::cat({clean_features, rain}, 1)));
  return single ? out.squeeze(0) : out;
}

void DiscriminatorConfig::validate() const {
  if (widths.size() != 4 || strides.size() != 4) {
    throw ConfigError("discriminator: expected 4 widths and 4 strides (head + 3 intermediate)");
  }
  for (int w : widths) {
    if (w < 1) throw ConfigError("discriminator: widths must be positive");
  }
  for (int s : strides) {
    if (s < 1) throw ConfigError("discriminator: strides must be positive");
  }
  if (kernel < 2) throw ConfigError("discriminator: kernel must be >= 2");
}

int64_t DiscriminatorConfig::output_size(int64_t input) const {
  auto step = [&](int64_t in, int stride) -> int64_t {
    const int64_t span = in + 2 - kernel;
    return span < 0 ? 0 : span / stride + 1;
  };
  int64_t size = input;
  for (int s : strides) size = step(size, s);
  return step(size, 1);
}

int64_t DiscriminatorConfig::min_input_size() const {
  for (int64_t input = 1; input < 4096; ++input) {
    int64_t size = input;
    bool ok = true;
    for (size_t i = 0; i < strides.size(); ++i) {
      const int64_t span = size + 2 - kernel;
      size = span < 0 ? 0 : span / strides[i] + 1;
      if (size < 1 || (i > 0 && size * size < 2)) ok = false;
    }
    if (ok && output_size(input) >= 1) return input;
  }
  throw ConfigError("discriminator: no valid input size below 4096");
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  const int k = config_.kernel;
  body_ = torch::nn::Sequential();
  body_->push_back(conv(3, config_.widths[0], k, config_.strides[0], 1));
  body_->push_back(torch::nn::ReLU());
  for (size_t i = 1; i < 4; ++i) {
    body_->push_back(conv(config_.widths[i - 1], config_.widths[i], k, config_.strides[i], 1));
    body_->push_back(torch::nn::InstanceNorm2d(config_.widths[i]));
    body_->push_back(torch::nn::ReLU());
  }
  body_->push_back(conv(config_.widths[3], 1, k, 1, 1));
  body_ = register_module("body", body_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& img_in) {
  auto img = img_in;
  const bool single = ensure_batched(img, "discriminator");
  require_rgb(img, "discriminator");
  const auto min_side = config_.min_input_size();
  if (img.size(2) < min_side || img.size(3) < min_side) {
    throw InvalidInput("discriminator: input " + std::to_string(img.size(2)) + "x" +
                       std::to_string(img.size(3)) + " below minimum side " + std::to_string(min_side));
  }
  auto out = body_->forward(img);
  return single ? out.squeeze(0) : out;
}

void DerainerConfig::validate() const {
  if (width < 1) throw ConfigError("derainer: width must be positive");
}

UNetDerainerImpl::UNetDerainerImpl(const DerainerConfig& config) : config_(config) {
  config_.validate();
  const int w = config_.width;
  auto block = [](int in, int out) {
    return torch::nn::Sequential(conv(in, out, 3, 1, 1), torch::nn::ReLU(), conv(out, out, 3, 1, 1),
                                 torch::nn::ReLU());
  };
  enc1_ = register_module("enc1", block(3, w));
  down1_ = register_module("down1", conv(w, 2 * w, 4, 2, 1));
  enc2_ = register_module("enc2", block(2 * w, 2 * w));
  down2_ = register_module("down2", conv(2 * w, 4 * w, 4, 2, 1));
  mid_ = register_module("mid", block(4 * w, 4 * w));
  up2_ = register_module("up2", conv(4 * w, 2 * w, 3, 1, 1));
  dec2_ = register_module("dec2", block(4 * w, 2 * w));
  up1_ = register_module("up1", conv(2 * w, w, 3, 1, 1));
  dec1_ = register_module("dec1", block(2 * w, w));
  out_ = register_module("out", conv(w, 3, 3, 1, 1));
}

torch::Tensor UNetDerainerImpl::forward(const torch::Tensor& rainy_in) {
  auto rainy = rainy_in;
  const bool single = ensure_batched(rainy, "derainer");
  require_rgb(rainy, "derainer");
  const auto h = rainy.size(2);
  const auto w = rainy.size(3);
  const int64_t pad_h = (4 - h % 4) % 4;
  const int64_t pad_w = (4 - w % 4) % 4;

  auto x = rainy;
  if (pad_h != 0 || pad_w != 0) {
    const bool reflectable = pad_h < h && pad_w < w;
    auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
    if (reflectable) {
      options.mode(torch::kReflect);
    } else {
      options.mode(torch::kReplicate);
    }
    x = F::pad(x, options);
  }

  auto e1 = enc1_->forward(x);
  auto e2 = enc2_->forward(torch::relu(down1_(e1)));
  auto m = mid_->forward(torch::relu(down2_(e2)));
  auto d2 = torch::relu(up2_(upsample_to(m, e2.size(2), e2.size(3))));
  d2 = dec2_->forward(torch::cat({d2, e2}, 1));
  auto d1 = torch::relu(up1_(upsample_to(d2, e1.size(2), e1.size(3))));
  d1 = dec1_->forward(torch::cat({d1, e1}, 1));
  auto out = x + out_(d1);

  if (pad_h != 0 || pad_w != 0) out = out.narrow(2, 0, h).narrow(3, 0, w);
  return single ? out.squeeze(0) : out;
}

NamedTensors ModelBundle::named_parameters() const {
  NamedTensors out;
  auto append = [&out](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters(true)) out.emplace_back(prefix + item.key(), item.value());
  };
  append("g.", *generator);
  append("d.", *discriminator);
  append("der.", *derainer);
  return out;
}

void ModelBundle::train(bool on) {
  generator->train(on);
  discriminator->train(on);
  derainer->train(on);
}

ModelBundle init_models(const ModelConfigs& configs, uint64_t seed) {
  ModelBundle bundle;
  bundle.generator = Generator(configs.generator);
  bundle.discriminator = Discriminator(configs.discriminator);
  auto derainer = std::make_shared<UNetDerainerImpl>(configs.derainer);
  bundle.derainer = derainer;

  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& [name, p] : bundle.named_parameters()) {
    if (p.dim() > 1) {
      p.normal_(0.0, 0.02, gen);
    } else {
      p.zero_();
    }
  }
  if (configs.derainer.zero_init_last) {
    derainer->last_conv()->weight.zero_();
    derainer->last_conv()->bias.zero_();
  }
  return bundle;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters(true)) n += p.numel();
  return n;
}

FrozenParameters::FrozenParameters(const torch::nn::Module& module) {
  for (auto p : module.parameters(true)) {
    saved_.emplace_back(p, p.requires_grad());
    p.set_requires_grad(false);
  }
}

FrozenParameters::~FrozenParameters() {
  for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

}  // namespace csud

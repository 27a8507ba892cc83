#include "csud/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"
#include "csud/image.hpp"

namespace csud {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

TrainingMode parse_mode(const std::string& s) {
  if (s == "joint") return TrainingMode::kJoint;
  if (s == "separate") return TrainingMode::kSeparate;
  throw ConfigError("training_mode must be 'joint' or 'separate', got '" + s + "'");
}

GanObjective parse_objective(const std::string& s) {
  if (s == "lsgan") return GanObjective::kLeastSquares;
  if (s == "vanilla") return GanObjective::kVanilla;
  throw ConfigError("gan_objective must be 'lsgan' or 'vanilla', got '" + s + "'");
}

GanReduction parse_reduction(const std::string& s) {
  if (s == "mean") return GanReduction::kMean;
  if (s == "sum") return GanReduction::kSum;
  throw ConfigError("gan_reduction must be 'mean' or 'sum', got '" + s + "'");
}

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void apply_keys(TrainConfig& c, const json& j) {
  static const std::set<std::string> known{
      "epochs_phase1", "lr_phase1", "epochs_phase2", "lr_phase2", "batch_size", "crop",
      "adam_beta1", "adam_beta2", "num_gan_constraints", "training_mode", "lambda1", "lambda2",
      "lambda3", "alpha1", "alpha2", "cc_enabled", "sr_enabled", "gan_objective", "gan_reduction", "der_loss_to_g", "seed",
      "checkpoint_every", "desk_scale", "max_steps", "hflip", "train_dir", "test_dir", "output_dir",
      "g_base_channels", "g_down_channels", "g_residual_blocks", "g_riem_skip", "d_widths", "d_strides", "der_width",
      "perceptual_profile", "perceptual_weights", "perceptual_fallback", "perceptual_layers",
      "perceptual_seed", "threads"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  try {
    read(j, "epochs_phase1", c.epochs_phase1);
    read(j, "lr_phase1", c.lr_phase1);
    read(j, "epochs_phase2", c.epochs_phase2);
    read(j, "lr_phase2", c.lr_phase2);
    read(j, "batch_size", c.batch_size);
    read(j, "crop", c.crop);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "num_gan_constraints", c.num_gan_constraints);
    if (j.contains("training_mode")) c.training_mode = parse_mode(j.at("training_mode").get<std::string>());
    read(j, "lambda1", c.weights.lambda1);
    read(j, "lambda2", c.weights.lambda2);
    read(j, "lambda3", c.weights.lambda3);
    read(j, "alpha1", c.weights.alpha1);
    read(j, "alpha2", c.weights.alpha2);
    read(j, "cc_enabled", c.cc_enabled);
    read(j, "sr_enabled", c.sr_enabled);
    if (j.contains("gan_objective")) c.gan_objective = parse_objective(j.at("gan_objective").get<std::string>());
    if (j.contains("gan_reduction")) c.gan_reduction = parse_reduction(j.at("gan_reduction").get<std::string>());
    read(j, "der_loss_to_g", c.der_loss_to_g);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "desk_scale", c.desk_scale);
    read(j, "max_steps", c.max_steps);
    read(j, "hflip", c.hflip);
    read(j, "train_dir", c.train_dir);
    read(j, "test_dir", c.test_dir);
    read(j, "output_dir", c.output_dir);
    read(j, "g_base_channels", c.models.generator.base_channels);
    read(j, "g_down_channels", c.models.generator.riem_down_channels);
    read(j, "g_residual_blocks", c.models.generator.num_residual_blocks);
    read(j, "g_riem_skip", c.models.generator.riem_skip);
    c.models.generator.trunk_channels = 2 * c.models.generator.base_channels;
    read(j, "d_widths", c.models.discriminator.widths);
    read(j, "d_strides", c.models.discriminator.strides);
    read(j, "der_width", c.models.derainer.width);
    read(j, "perceptual_profile", c.perceptual.profile);
    read(j, "perceptual_weights", c.perceptual.weights_path);
    read(j, "perceptual_fallback", c.perceptual.fallback);
    read(j, "perceptual_layers", c.perceptual.layers);
    read(j, "perceptual_seed", c.perceptual.seed);
    read(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

json parse_object(const std::string& text, const char* what) {
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs_phase1 < 1 || epochs_phase2 < 0) throw ConfigError("epoch counts must be positive");
  if (!(lr_phase1 > 0.0) || !(lr_phase2 > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (crop < 1) throw ConfigError("crop must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (num_gan_constraints != 1 && num_gan_constraints != 2 && num_gan_constraints != 4) {
    throw ConfigError("num_gan_constraints must be 1, 2 or 4");
  }
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  weights.validate();
  models.generator.validate();
  models.discriminator.validate();
  models.derainer.validate();
  if (crop < models.discriminator.min_input_size()) {
    throw ConfigError("crop " + std::to_string(crop) + " is below the discriminator minimum " +
                      std::to_string(models.discriminator.min_input_size()));
  }
  if (crop < kSsimWindow) throw ConfigError("crop must be at least the SSIM window (11)");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (!cc_enabled) w.alpha1 = 0.0;
  if (!sr_enabled) {
    w.alpha2 = 0.0;
    w.lambda3 = 0.0;
  }
  return w;
}

void apply_desk_scale_profile(TrainConfig& c) {
  c.desk_scale = true;
  c.crop = 64;
  c.batch_size = 2;
  c.epochs_phase1 = 150;
  c.epochs_phase2 = 50;
  c.lr_phase1 = 2e-4;
  c.lr_phase2 = 2e-5;
  c.max_steps = 2000;
  c.checkpoint_every = 500;
  c.models.generator.base_channels = 16;
  c.models.generator.riem_down_channels = 32;
  c.models.generator.num_residual_blocks = 2;
  c.models.generator.trunk_channels = 32;
  c.models.generator.riem_skip = true;
  c.models.discriminator.widths = {16, 32, 64, 128};
  c.models.derainer.width = 16;
  c.perceptual.profile = "fixed-random";
}

std::string to_string(TrainingMode mode) { return mode == TrainingMode::kJoint ? "joint" : "separate"; }
std::string to_string(GanReduction reduction) { return reduction == GanReduction::kMean ? "mean" : "sum"; }
std::string to_string(GanObjective objective) {
  return objective == GanObjective::kLeastSquares ? "lsgan" : "vanilla";
}

std::string to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs_phase1"] = c.epochs_phase1;
  j["lr_phase1"] = c.lr_phase1;
  j["epochs_phase2"] = c.epochs_phase2;
  j["lr_phase2"] = c.lr_phase2;
  j["batch_size"] = c.batch_size;
  j["crop"] = c.crop;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["num_gan_constraints"] = c.num_gan_constraints;
  j["training_mode"] = to_string(c.training_mode);
  j["lambda1"] = c.weights.lambda1;
  j["lambda2"] = c.weights.lambda2;
  j["lambda3"] = c.weights.lambda3;
  j["alpha1"] = c.weights.alpha1;
  j["alpha2"] = c.weights.alpha2;
  j["cc_enabled"] = c.cc_enabled;
  j["sr_enabled"] = c.sr_enabled;
  j["gan_objective"] = to_string(c.gan_objective);
  j["gan_reduction"] = to_string(c.gan_reduction);
  j["der_loss_to_g"] = c.der_loss_to_g;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["desk_scale"] = c.desk_scale;
  j["max_steps"] = c.max_steps;
  j["hflip"] = c.hflip;
  j["train_dir"] = c.train_dir;
  j["test_dir"] = c.test_dir;
  j["output_dir"] = c.output_dir;
  j["g_base_channels"] = c.models.generator.base_channels;
  j["g_down_channels"] = c.models.generator.riem_down_channels;
  j["g_residual_blocks"] = c.models.generator.num_residual_blocks;
  j["g_riem_skip"] = c.models.generator.riem_skip;
  j["d_widths"] = c.models.discriminator.widths;
  j["d_strides"] = c.models.discriminator.strides;
  j["der_width"] = c.models.derainer.width;
  j["perceptual_profile"] = c.perceptual.profile;
  j["perceptual_weights"] = c.perceptual.weights_path;
  j["perceptual_fallback"] = c.perceptual.fallback;
  j["perceptual_layers"] = c.perceptual.layers;
  j["perceptual_seed"] = c.perceptual.seed;
  j["threads"] = c.threads;
  return j.dump(2);
}

TrainConfig resolve_train_config(const std::string& file_json, const std::string& override_json) {
  const auto file = parse_object(file_json, "train config file");
  const auto overrides = parse_object(override_json, "train config overrides");
  bool desk = false;
  if (file.is_object() && file.contains("desk_scale")) desk = file["desk_scale"].get<bool>();
  if (overrides.is_object() && overrides.contains("desk_scale")) desk = overrides["desk_scale"].get<bool>();

  TrainConfig c;
  if (desk) apply_desk_scale_profile(c);
  apply_keys(c, file);
  apply_keys(c, overrides);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, const std::string& override_json) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read train config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_train_config(ss.str(), override_json);
}

}  // namespace csud

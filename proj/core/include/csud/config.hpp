#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "csud/losses.hpp"
#include "csud/models.hpp"
#include "csud/perceptual.hpp"

namespace csud {

enum class TrainingMode { kJoint, kSeparate };

/// How the generator-side adversarial terms adv1..advK combine into L_GAN.
enum class GanReduction { kMean, kSum };

/// Every knob of a training run. Serialized as a flat JSON object whose keys are
/// exactly the field names below (nested configs are flattened with g_/d_/der_/
/// perceptual_ prefixes).
struct TrainConfig {
  int epochs_phase1 = 200;
  double lr_phase1 = 1e-4;
  int epochs_phase2 = 100;
  double lr_phase2 = 1e-5;
  int batch_size = 2;
  int crop = 256;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int num_gan_constraints = 4;  // 1, 2 or 4
  TrainingMode training_mode = TrainingMode::kJoint;
  LossWeights weights;
  bool cc_enabled = true;
  bool sr_enabled = true;
  GanObjective gan_objective = GanObjective::kLeastSquares;
  GanReduction gan_reduction = GanReduction::kMean;
  bool der_loss_to_g = false;  // let L_Der and SR-Der reach G through x_s1
  uint64_t seed = 0;
  int64_t checkpoint_every = 1000;
  bool desk_scale = false;
  int64_t max_steps = 0;  // 0 runs the full epoch schedule
  bool hflip = true;
  std::string train_dir;
  std::string test_dir;
  std::string output_dir = "runs/csud";
  ModelConfigs models;
  PerceptualConfig perceptual;
  int threads = 1;

  void validate() const;

  /// Weights after the cc/sr toggles: cc off zeroes alpha1, sr off zeroes alpha2 and lambda3.
  LossWeights effective_weights() const;
  int total_epochs() const { return epochs_phase1 + epochs_phase2; }
  double lr_at_epoch(int64_t epoch) const { return epoch < epochs_phase1 ? lr_phase1 : lr_phase2; }
};

/// Desk-scale overrides: 64 px crops, narrow networks, fixed-random perceptual
/// features and a 2000-step budget (200 epochs over a 20+20 image corpus).
void apply_desk_scale_profile(TrainConfig& config);

std::string to_json(const TrainConfig& config);

/// defaults -> desk profile (if desk_scale is set in either layer) -> file keys -> override keys.
/// Both arguments are flat JSON objects; empty strings mean "no keys". Unknown keys throw.
TrainConfig resolve_train_config(const std::string& file_json, const std::string& override_json = "");

TrainConfig load_train_config(const std::filesystem::path& path, const std::string& override_json = "");

std::string to_string(TrainingMode mode);
std::string to_string(GanObjective objective);
std::string to_string(GanReduction reduction);

}  // namespace csud

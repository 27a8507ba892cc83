#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "csud/checkpoint.hpp"
#include "csud/config.hpp"
#include "csud/data.hpp"
#include "csud/losses.hpp"
#include "csud/models.hpp"
#include "csud/perceptual.hpp"

namespace csud {

/// Joint training runs a single phase; separate training runs kGenerator (G and D
/// only) to completion and then kDerainer (Der on frozen-G pseudo pairs).
enum class Phase { kJoint, kGenerator, kDerainer };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& name);

/// Every intermediate of one training iteration plus the two objectives.
struct StepGraph {
  NamedTensors tensors;               // x, y, x_s1, x_der, y_der, x_s2, y_s1, y_s2, ...
  std::vector<torch::Tensor> fakes;   // adversarial fakes in adv1..adv4 order
  torch::Tensor discriminator_objective;
  torch::Tensor generator_objective;  // total_g + total_der; undefined until adversarial terms attach
  torch::Tensor generator_partial;    // everything except the adversarial terms
  LossReport report;

  const torch::Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

class Trainer {
 public:
  Trainer(TrainConfig config, std::shared_ptr<const UnpairedSampler> sampler);
  /// Resumes from a checkpoint; the sampler must be built over the same corpus.
  Trainer(const Checkpoint& checkpoint, std::shared_ptr<const UnpairedSampler> sampler);

  /// Forward pass of the full graph, including the generator-side adversarial
  /// terms evaluated against the current discriminator. Does not update anything.
  StepGraph build_step_graph(const torch::Tensor& x, const torch::Tensor& y);

  /// One iteration on the sampler's batch for the current step.
  LossReport train_step();
  /// (1) discriminator update on detached fakes, (2) one combined G + Der update.
  LossReport train_step(const UnpairedBatch& batch);

  // The three stages of train_step, exposed so each update can be observed alone.
  StepGraph begin_step(const UnpairedBatch& batch);
  void update_discriminator(StepGraph& graph);
  /// Attaches the adversarial terms against the current D, updates G and/or Der
  /// and advances the step counters.
  LossReport update_generators(StepGraph& graph);

  /// Moves to the derainer phase of separate training.
  void begin_phase(Phase phase);

  Checkpoint checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;

  ModelBundle& models() { return models_; }
  const ModelBundle& models() const { return models_; }
  const TrainConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  int64_t step() const { return step_; }
  int64_t phase_step() const { return phase_step_; }
  int64_t epoch() const;
  double current_lr() const;
  int64_t steps_per_epoch() const { return steps_per_epoch_; }
  /// Number of updates the current phase runs for.
  int64_t phase_length() const;

 private:
  void init_optimizers();
  StepGraph forward_graph(const torch::Tensor& x, const torch::Tensor& y);
  void attach_adversarial(StepGraph& graph);
  void set_learning_rate(double lr);
  void check_parameters_finite() const;

  TrainConfig config_;
  LossWeights weights_;
  std::shared_ptr<const UnpairedSampler> sampler_;
  ModelBundle models_;
  std::shared_ptr<FeatureExtractor> extractor_;
  std::unique_ptr<torch::optim::Adam> g_opt_;
  std::unique_ptr<torch::optim::Adam> d_opt_;
  std::unique_ptr<torch::optim::Adam> der_opt_;
  Phase phase_ = Phase::kJoint;
  int64_t step_ = 0;
  int64_t phase_step_ = 0;
  int64_t steps_per_epoch_ = 1;
};

/// One JSON object per step: {"step", "epoch", "phase", "lr", "losses": {...}}.
std::string log_line(int64_t step, int64_t epoch, Phase phase, double lr, const LossReport& report);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> logs;  // one per phase
  int64_t steps = 0;
  LossReport last_report;
};

/// Runs the configured schedule, writing config.json, per-phase JSON-line logs,
/// periodic checkpoints (ckpt_<step>.csud, latest.csud) and final.csud into
/// config.output_dir. On divergence the last good checkpoint is kept and the
/// DivergenceError propagates.
TrainResult train(const TrainConfig& config, const UnpairedCorpus& corpus,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

/// Rebuilds the networks stored in a checkpoint.
ModelBundle load_models(const Checkpoint& checkpoint);
ModelBundle load_models(const std::filesystem::path& checkpoint_path);

}  // namespace csud

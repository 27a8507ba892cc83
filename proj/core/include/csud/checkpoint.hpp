#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "csud/models.hpp"

namespace csud {

inline constexpr char kCheckpointMagic[] = "CSUD1";

/// Resumable training state. See docs/checkpoint_format.md for the byte layout.
struct Checkpoint {
  std::string config_json;  // resolved TrainConfig echo
  int64_t step = 0;         // optimizer updates completed, across phases
  int64_t phase_step = 0;   // updates completed inside the current phase
  std::string phase = "joint";
  uint64_t rng_seed = 0;    // sampler seed; batches are a function of (rng_seed, step)
  NamedTensors tensors;     // model parameters and optimizer moments
  std::map<std::string, int64_t> optimizer_steps;

  const torch::Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

/// Writes to <path>.tmp and renames over <path>.
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace csud

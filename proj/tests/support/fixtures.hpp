#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "csud/config.hpp"
#include "csud/rain.hpp"

namespace csud::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("csud_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

/// Desk corpus under root: train/{clean,rainy} with `train` images in total and
/// test/{rainy,gt} with `test` pairs, built from procedural scenes.
inline DatasetManifest make_corpus(const std::filesystem::path& root, int train, int test, int64_t side,
                                   uint64_t seed) {
  const auto scenes = root / "scenes";
  write_clean_scenes(scenes, train + test, side, side, seed);
  RainParams params;
  params.seed = seed;
  return make_desk_dataset(scenes, root, params, DatasetSplit{train, test});
}

/// Very small networks at crop 32; exercises every code path in milliseconds.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.crop = 32;
  c.batch_size = 2;
  c.epochs_phase1 = 3;
  c.epochs_phase2 = 2;
  c.lr_phase1 = 2e-4;
  c.lr_phase2 = 2e-5;
  c.models.generator = {4, 8, 1, 8};
  c.models.discriminator.widths = {4, 8, 8, 8};
  c.models.derainer.width = 4;
  c.perceptual.profile = "fixed-random";
  c.checkpoint_every = 1000000;
  return c;
}

}  // namespace csud::testing

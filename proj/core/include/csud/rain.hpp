#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csud/image.hpp"

namespace csud {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Procedural streak geometry. Everything is drawn from a generator seeded
/// with `seed`, so a given (image, params) pair always renders the same rain.
struct RainParams {
  int num_streaks = 60;
  Range length_px{8.0, 24.0};
  Range angle_deg{-20.0, 20.0};  // from vertical; one base angle per image
  Range intensity{0.25, 0.35};   // additive amplitude, subset of (0, 1]
  double thickness_px = 1.2;     // FWHM of the Gaussian cross-section
  uint64_t seed = 0;

  void validate() const;
};

std::string to_json(const RainParams& params);
RainParams rain_params_from_json(const std::string& text);
RainParams load_rain_params(const std::filesystem::path& path);

/// splitmix64-style mixing of (base, index) into an independent sub-seed.
uint64_t derive_seed(uint64_t base, uint64_t index);

/// Single-channel (H, W) streak map in [0, max intensity]. Streaks are
/// composited with max(), so adding streaks never removes coverage.
torch::Tensor streak_layer(int64_t height, int64_t width, const RainParams& params, uint64_t seed);

/// clean + R on all three channels (linear superposition), then clamped to [0, 1]
/// unless `clamp` is false.
ImageTensor synth_rain_ccp(const ImageTensor& clean, const RainParams& params, bool clamp = true);

/// Negative control: an independent streak map per channel, drawn with sub-seeds.
ImageTensor synth_rain_violating(const ImageTensor& clean, const RainParams& params,
                                 bool clamp = true);

/// Procedural background: colour gradient, soft shapes and low-frequency texture,
/// with intensities kept in [0.02, 0.70] so that moderate rain rarely saturates.
ImageTensor synth_clean_scene(int64_t height, int64_t width, uint64_t seed);

struct DatasetSplit {
  int train = 40;
  int test = 8;
};

struct ManifestEntry {
  std::string name;
  std::string role;  // train_clean | train_rainy | test_rainy | test_gt
  uint64_t sub_seed = 0;
  std::string source;
};

struct DatasetManifest {
  uint64_t seed = 0;
  RainParams params;
  DatasetSplit split;
  std::vector<ManifestEntry> files;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

/// Builds the desk corpus:
///   out/train/clean, out/train/rainy   unpaired, disjoint clean sources
///   out/test/rainy,  out/test/gt       paired by filename
///   out/manifest.json
/// Consumes the first split.train + split.test images of clean_dir in sorted order.
DatasetManifest make_desk_dataset(const std::filesystem::path& clean_dir,
                                  const std::filesystem::path& out_dir, const RainParams& params,
                                  const DatasetSplit& split);

/// Writes `count` procedural scenes named scene_0000.png, ... into dir.
void write_clean_scenes(const std::filesystem::path& dir, int count, int64_t height, int64_t width,
                        uint64_t seed);

}  // namespace csud

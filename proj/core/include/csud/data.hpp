#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "csud/image.hpp"

namespace csud {

/// Two unrelated image collections. Nothing ties clean_paths[i] to rainy_paths[i].
struct UnpairedCorpus {
  std::vector<std::filesystem::path> clean_paths;
  std::vector<std::filesystem::path> rainy_paths;
  int64_t crop = 256;
  uint64_t seed = 0;
  bool hflip = true;

  /// <root>/clean/*.png|jpg and <root>/rainy/*.png|jpg, sorted by filename.
  static UnpairedCorpus from_root(const std::filesystem::path& root, int64_t crop, uint64_t seed);
};

/// Where one batch element came from.
struct SampleDraw {
  int64_t clean_index = 0;
  int64_t rainy_index = 0;
  int64_t clean_top = 0, clean_left = 0;
  int64_t rainy_top = 0, rainy_left = 0;
  bool clean_flip = false;
  bool rainy_flip = false;
};

struct UnpairedBatch {
  torch::Tensor clean;  // (N, 3, crop, crop)
  torch::Tensor rainy;  // (N, 3, crop, crop)
};

/// Holds the decoded corpus in memory and produces batches as a pure function of
/// (seed, step): clean and rainy indices are drawn independently with replacement,
/// each with its own random crop and optional horizontal flip. Images smaller than
/// the crop are reflect-padded up to it.
class UnpairedSampler {
 public:
  explicit UnpairedSampler(UnpairedCorpus corpus);

  std::vector<SampleDraw> draws(int64_t step, int64_t batch_size) const;
  UnpairedBatch sample(int64_t step, int64_t batch_size) const;

  /// ceil(max(#clean, #rainy) / batch_size)
  int64_t steps_per_epoch(int64_t batch_size) const;

  const UnpairedCorpus& corpus() const { return corpus_; }

 private:
  torch::Tensor crop(const torch::Tensor& img, int64_t top, int64_t left, bool flip) const;

  UnpairedCorpus corpus_;
  std::vector<torch::Tensor> clean_;  // padded to at least crop x crop
  std::vector<torch::Tensor> rainy_;
};

/// sample_unpaired_batch in free-function form.
UnpairedBatch sample_unpaired_batch(const UnpairedSampler& sampler, int64_t step, int64_t batch_size);

struct TestPair {
  std::string name;
  std::filesystem::path rainy;
  std::filesystem::path gt;
};

struct PairedTestSet {
  std::filesystem::path root;
  std::vector<TestPair> pairs;

  std::string name() const { return root.filename().string(); }
};

/// <dir>/rainy and <dir>/gt matched by identical filename. Any file without a
/// partner is reported in the error message.
PairedTestSet load_paired_testset(const std::filesystem::path& dir);

/// Sorted PNG/JPEG files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace csud

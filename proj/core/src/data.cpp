#include "csud/data.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "csud/error.hpp"
#include "csud/rain.hpp"

namespace csud {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace {

class StepRng {
 public:
  explicit StepRng(uint64_t seed) : gen_(seed) {}
  int64_t below(int64_t n) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::min<int64_t>(n - 1, static_cast<int64_t>(u * static_cast<double>(n)));
  }
  bool coin() { return (gen_() >> 63) != 0; }

 private:
  std::mt19937_64 gen_;
};

torch::Tensor pad_to(const torch::Tensor& img, int64_t crop) {
  const int64_t pad_h = std::max<int64_t>(0, crop - img.size(1));
  const int64_t pad_w = std::max<int64_t>(0, crop - img.size(2));
  if (pad_h == 0 && pad_w == 0) return img;
  // Reflection needs the pad to be smaller than the side; fall back to replication.
  const bool reflectable = pad_h < img.size(1) && pad_w < img.size(2);
  auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
  if (reflectable) {
    options.mode(torch::kReflect);
  } else {
    options.mode(torch::kReplicate);
  }
  return F::pad(img.unsqueeze(0), options).squeeze(0);
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

UnpairedCorpus UnpairedCorpus::from_root(const fs::path& root, int64_t crop, uint64_t seed) {
  UnpairedCorpus c;
  c.clean_paths = list_images(root / "clean");
  c.rainy_paths = list_images(root / "rainy");
  c.crop = crop;
  c.seed = seed;
  return c;
}

UnpairedSampler::UnpairedSampler(UnpairedCorpus corpus) : corpus_(std::move(corpus)) {
  if (corpus_.clean_paths.empty() || corpus_.rainy_paths.empty()) {
    throw ConfigError("unpaired corpus: both clean and rainy sides need at least one image");
  }
  if (corpus_.crop < 1) throw ConfigError("unpaired corpus: crop must be positive");
  for (const auto& p : corpus_.clean_paths) clean_.push_back(pad_to(load_image(p).tensor(), corpus_.crop));
  for (const auto& p : corpus_.rainy_paths) rainy_.push_back(pad_to(load_image(p).tensor(), corpus_.crop));
}

std::vector<SampleDraw> UnpairedSampler::draws(int64_t step, int64_t batch_size) const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  // Sub-seed depends only on (seed, step): batches can be regenerated out of order.
  StepRng rng(derive_seed(corpus_.seed, static_cast<uint64_t>(step)));
  const int64_t crop = corpus_.crop;
  std::vector<SampleDraw> out(static_cast<size_t>(batch_size));
  for (auto& d : out) {
    d.clean_index = rng.below(static_cast<int64_t>(clean_.size()));
    const auto& c = clean_[static_cast<size_t>(d.clean_index)];
    d.clean_top = rng.below(c.size(1) - crop + 1);
    d.clean_left = rng.below(c.size(2) - crop + 1);
    d.clean_flip = rng.coin() && corpus_.hflip;

    d.rainy_index = rng.below(static_cast<int64_t>(rainy_.size()));
    const auto& r = rainy_[static_cast<size_t>(d.rainy_index)];
    d.rainy_top = rng.below(r.size(1) - crop + 1);
    d.rainy_left = rng.below(r.size(2) - crop + 1);
    d.rainy_flip = rng.coin() && corpus_.hflip;
  }
  return out;
}

torch::Tensor UnpairedSampler::crop(const torch::Tensor& img, int64_t top, int64_t left, bool flip) const {
  auto patch = img.narrow(1, top, corpus_.crop).narrow(2, left, corpus_.crop);
  if (flip) patch = patch.flip({2});
  return patch;
}

UnpairedBatch UnpairedSampler::sample(int64_t step, int64_t batch_size) const {
  std::vector<torch::Tensor> clean, rainy;
  for (const auto& d : draws(step, batch_size)) {
    clean.push_back(crop(clean_[static_cast<size_t>(d.clean_index)], d.clean_top, d.clean_left, d.clean_flip));
    rainy.push_back(crop(rainy_[static_cast<size_t>(d.rainy_index)], d.rainy_top, d.rainy_left, d.rainy_flip));
  }
  return {torch::stack(clean).contiguous(), torch::stack(rainy).contiguous()};
}

int64_t UnpairedSampler::steps_per_epoch(int64_t batch_size) const {
  const auto n = static_cast<int64_t>(std::max(clean_.size(), rainy_.size()));
  return (n + batch_size - 1) / batch_size;
}

UnpairedBatch sample_unpaired_batch(const UnpairedSampler& sampler, int64_t step, int64_t batch_size) {
  return sampler.sample(step, batch_size);
}

PairedTestSet load_paired_testset(const fs::path& dir) {
  const auto rainy_dir = dir / "rainy";
  const auto gt_dir = dir / "gt";
  if (!fs::is_directory(rainy_dir) || !fs::is_directory(gt_dir)) {
    throw ConfigError("paired test set " + dir.string() + " needs rainy/ and gt/ subdirectories");
  }
  std::map<std::string, fs::path> rainy, gt;
  for (const auto& p : list_images(rainy_dir)) rainy[p.filename().string()] = p;
  for (const auto& p : list_images(gt_dir)) gt[p.filename().string()] = p;

  std::vector<std::string> orphans;
  for (const auto& [name, _] : rainy) {
    if (!gt.count(name)) orphans.push_back("rainy/" + name);
  }
  for (const auto& [name, _] : gt) {
    if (!rainy.count(name)) orphans.push_back("gt/" + name);
  }
  if (!orphans.empty()) {
    std::string msg = "paired test set " + dir.string() + " has unmatched files:";
    for (const auto& o : orphans) msg += " " + o;
    throw ConfigError(msg);
  }

  PairedTestSet set;
  set.root = dir;
  for (const auto& [name, path] : rainy) set.pairs.push_back({name, path, gt.at(name)});
  return set;
}

}  // namespace csud

#include "csud/rain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "csud/error.hpp"

namespace csud {

namespace {

// Portable uniform doubles from mt19937_64; std::uniform_real_distribution is
// implementation-defined and would make corpora differ across standard libraries.
class SeededUniform {
 public:
  explicit SeededUniform(uint64_t seed) : gen_(seed) {}

  double next() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double in(const Range& r) { return r.lo + (r.hi - r.lo) * next(); }
  int64_t index(int64_t n) { return std::min<int64_t>(n - 1, static_cast<int64_t>(next() * n)); }

 private:
  std::mt19937_64 gen_;
};

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

void validate_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw InvalidInput(std::string("RainParams: invalid range for ") + name);
  }
}

ImageTensor add_rain(const ImageTensor& clean, const torch::Tensor& layer, bool clamp) {
  auto out = clean.tensor() + layer.to(clean.tensor().dtype());
  if (clamp) out = out.clamp(0.0, 1.0);
  return ImageTensor(out);
}

}  // namespace

void RainParams::validate() const {
  if (num_streaks < 0) throw InvalidInput("RainParams: num_streaks must be >= 0");
  validate_range(length_px, "length_px");
  validate_range(angle_deg, "angle_deg");
  validate_range(intensity, "intensity");
  if (intensity.lo <= 0.0 || intensity.hi > 1.0) {
    throw InvalidInput("RainParams: intensity range must lie in (0, 1]");
  }
  if (length_px.lo < 0.0) throw InvalidInput("RainParams: negative streak length");
  if (!(thickness_px > 0.0)) throw InvalidInput("RainParams: thickness_px must be positive");
}

uint64_t derive_seed(uint64_t base, uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

torch::Tensor streak_layer(int64_t height, int64_t width, const RainParams& params, uint64_t seed) {
  params.validate();
  if (height < 1 || width < 1) throw InvalidInput("streak_layer: empty extent");

  std::vector<float> map(static_cast<size_t>(height * width), 0.0f);
  SeededUniform rng(seed);
  const double base_angle = rng.in(params.angle_deg) * std::numbers::pi / 180.0;
  const double sigma = params.thickness_px / kFwhmToSigma;
  const double cutoff = 3.0 * sigma;

  for (int s = 0; s < params.num_streaks; ++s) {
    // Fixed draw order per streak keeps the first k streaks identical for any num_streaks >= k.
    const double cx = rng.next() * static_cast<double>(width);
    const double cy = rng.next() * static_cast<double>(height);
    const double length = rng.in(params.length_px);
    const double amp = rng.in(params.intensity);
    const double jitter = (rng.next() - 0.5) * (4.0 * std::numbers::pi / 180.0);

    const double dx = std::sin(base_angle + jitter);
    const double dy = std::cos(base_angle + jitter);
    const double x0 = cx - 0.5 * length * dx, y0 = cy - 0.5 * length * dy;
    const double x1 = cx + 0.5 * length * dx, y1 = cy + 0.5 * length * dy;
    const double seg_len2 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);

    const auto xmin = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(x0, x1) - cutoff)));
    const auto xmax = std::min<int64_t>(width - 1, static_cast<int64_t>(std::ceil(std::max(x0, x1) + cutoff)));
    const auto ymin = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(y0, y1) - cutoff)));
    const auto ymax = std::min<int64_t>(height - 1, static_cast<int64_t>(std::ceil(std::max(y0, y1) + cutoff)));

    for (int64_t y = ymin; y <= ymax; ++y) {
      for (int64_t x = xmin; x <= xmax; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double py = static_cast<double>(y) + 0.5;
        double t = 0.0;
        if (seg_len2 > 0.0) {
          t = std::clamp(((px - x0) * (x1 - x0) + (py - y0) * (y1 - y0)) / seg_len2, 0.0, 1.0);
        }
        const double qx = x0 + t * (x1 - x0) - px;
        const double qy = y0 + t * (y1 - y0) - py;
        const double d2 = qx * qx + qy * qy;
        if (d2 > cutoff * cutoff) continue;
        const auto v = static_cast<float>(amp * std::exp(-d2 / (2.0 * sigma * sigma)));
        auto& cell = map[static_cast<size_t>(y * width + x)];
        cell = std::max(cell, v);
      }
    }
  }
  return torch::from_blob(map.data(), {height, width}, torch::kFloat32).clone();
}

ImageTensor synth_rain_ccp(const ImageTensor& clean, const RainParams& params, bool clamp) {
  auto layer = streak_layer(clean.height(), clean.width(), params, params.seed);
  return add_rain(clean, layer.unsqueeze(0).expand({3, -1, -1}), clamp);
}

ImageTensor synth_rain_violating(const ImageTensor& clean, const RainParams& params, bool clamp) {
  std::vector<torch::Tensor> layers;
  for (uint64_t c = 0; c < 3; ++c) {
    layers.push_back(streak_layer(clean.height(), clean.width(), params, derive_seed(params.seed, c)));
  }
  return add_rain(clean, torch::stack(layers), clamp);
}

ImageTensor synth_clean_scene(int64_t height, int64_t width, uint64_t seed) {
  if (height < 1 || width < 1) throw InvalidInput("synth_clean_scene: empty extent");
  SeededUniform rng(seed);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto ys = torch::arange(height, opts).view({height, 1}).expand({height, width});
  auto xs = torch::arange(width, opts).view({1, width}).expand({height, width});
  const double extent = static_cast<double>(std::max(height, width));

  // Linear colour gradient along a random direction.
  const double theta = rng.next() * 2.0 * std::numbers::pi;
  auto ramp = ((xs * std::cos(theta) + ys * std::sin(theta)) / extent + 1.0) * 0.5;
  std::vector<torch::Tensor> channels;
  std::array<double, 3> c0{}, c1{};
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.in({0.1, 0.6});
    c1[c] = rng.in({0.1, 0.6});
  }
  for (int c = 0; c < 3; ++c) channels.push_back(c0[c] + (c1[c] - c0[c]) * ramp);
  auto img = torch::stack(channels);

  // Soft-edged ellipses.
  const int shapes = 3 + static_cast<int>(rng.index(5));
  for (int s = 0; s < shapes; ++s) {
    const double cx = rng.next() * width, cy = rng.next() * height;
    const double rx = rng.in({extent / 10.0, extent / 3.0});
    const double ry = rng.in({extent / 10.0, extent / 3.0});
    const double rot = rng.next() * std::numbers::pi;
    auto u = (xs - cx) * std::cos(rot) + (ys - cy) * std::sin(rot);
    auto v = -(xs - cx) * std::sin(rot) + (ys - cy) * std::cos(rot);
    auto r = torch::sqrt((u / rx).square() + (v / ry).square());
    auto alpha = ((1.0 - r) * std::min(rx, ry) / 1.5).clamp(0.0, 1.0);
    for (int c = 0; c < 3; ++c) {
      const double colour = rng.in({0.02, 0.7});
      img[c] = img[c] * (1.0 - alpha) + colour * alpha;
    }
  }

  // Low-amplitude oriented texture, independent per channel.
  for (int c = 0; c < 3; ++c) {
    const double fx = rng.in({0.05, 0.6}), fy = rng.in({0.05, 0.6});
    const double phase = rng.next() * 2.0 * std::numbers::pi;
    img[c] += 0.03 * torch::sin(xs * fx + ys * fy + phase);
  }
  return ImageTensor(img.clamp(0.02, 0.70).contiguous());
}

}  // namespace csud

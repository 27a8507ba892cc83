#include <cmath>
#include <sstream>

#include "csud/error.hpp"
#include "csud/image.hpp"

namespace csud {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw InvalidInput(os.str());
  }
}

// Separable 1-D Gaussian, normalized to unit sum.
torch::Tensor gaussian_kernel_1d(const torch::TensorOptions& opts) {
  auto coords = torch::arange(kSsimWindow, opts) - static_cast<double>(kSsimWindow / 2);
  auto g = torch::exp(-(coords * coords) / (2.0 * kSsimSigma * kSsimSigma));
  return g / g.sum();
}

// Valid-mode depthwise Gaussian filter of a (B, 1, H, W) tensor.
torch::Tensor gaussian_filter(const torch::Tensor& x, const torch::Tensor& g1d) {
  namespace F = torch::nn::functional;
  auto horizontal = g1d.view({1, 1, 1, kSsimWindow});
  auto vertical = g1d.view({1, 1, kSsimWindow, 1});
  return F::conv2d(F::conv2d(x, horizontal), vertical);
}

}  // namespace

torch::Tensor ssim_index(const torch::Tensor& pred, const torch::Tensor& ref) {
  require_same_shape(pred, ref, "ssim");
  if (pred.dim() < 3 || pred.size(-3) != 3) throw InvalidInput("ssim: expected (..., 3, H, W)");
  const auto h = pred.size(-2);
  const auto w = pred.size(-1);
  if (h < kSsimWindow || w < kSsimWindow) {
    throw InvalidInput("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                       " smaller than the 11x11 window");
  }
  // Fold every channel into the batch axis; SSIM is computed per channel.
  auto x = pred.reshape({-1, 1, h, w});
  auto y = ref.reshape({-1, 1, h, w});
  const auto g1d = gaussian_kernel_1d(x.options());

  constexpr double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  constexpr double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);

  auto mu_x = gaussian_filter(x, g1d);
  auto mu_y = gaussian_filter(y, g1d);
  auto mu_xx = mu_x * mu_x;
  auto mu_yy = mu_y * mu_y;
  auto mu_xy = mu_x * mu_y;
  auto sigma_xx = gaussian_filter(x * x, g1d) - mu_xx;
  auto sigma_yy = gaussian_filter(y * y, g1d) - mu_yy;
  auto sigma_xy = gaussian_filter(x * y, g1d) - mu_xy;

  auto num = (2.0 * mu_xy + c1) * (2.0 * sigma_xy + c2);
  auto den = (mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2);
  return (num / den).mean();
}

double psnr(const ImageTensor& pred, const ImageTensor& ref) {
  require_same_shape(pred.tensor(), ref.tensor(), "psnr");
  const auto diff = pred.tensor().to(torch::kFloat64) - ref.tensor().to(torch::kFloat64);
  const double mse = (diff * diff).mean().item<double>();
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& pred, const ImageTensor& ref) {
  torch::NoGradGuard no_grad;
  return ssim_index(pred.tensor().to(torch::kFloat64), ref.tensor().to(torch::kFloat64))
      .item<double>();
}

QualityScore score(const ImageTensor& pred, const ImageTensor& ref) {
  return {psnr(pred, ref), ssim(pred, ref)};
}

}  // namespace csud

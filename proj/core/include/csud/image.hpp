#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include <torch/torch.h>

namespace csud {

/// A 3-channel RGB image stored as a (3, H, W) floating-point tensor.
///
/// Intensities are nominally in [0, 1]; the range is not enforced so that
/// unclamped intermediates (for example clean + rain before clamping) can be
/// represented. Channel count, finiteness and non-empty extent are enforced.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(torch::Tensor data);

  static ImageTensor filled(int64_t height, int64_t width, double r, double g, double b,
                            torch::Dtype dtype = torch::kFloat32);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  bool empty() const { return !data_.defined(); }

  ImageTensor clamped() const;

 private:
  torch::Tensor data_;
};

/// The three ordered channel differences R-G, G-B and B-R.
struct ChannelCycleResiduals {
  torch::Tensor rg;
  torch::Tensor gb;
  torch::Tensor br;
};

// Works on any tensor whose third-from-last dimension is the RGB axis, so
// batches (N, 3, H, W) are accepted as well as single images.
ChannelCycleResiduals cycle_subtract(const torch::Tensor& rgb);
ChannelCycleResiduals cycle_subtract(const ImageTensor& img);

struct CosineSimilarity {
  double value = 0.0;
  bool degenerate = false;  // one side had zero norm; value is 0 by convention
};

CosineSimilarity cosine_similarity(std::span<const double> a, std::span<const double> b);
CosineSimilarity cosine_similarity(const torch::Tensor& a, const torch::Tensor& b);

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

struct QualityScore {
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// 10 log10(1 / MSE) with unit peak; identical images report kPsnrCapDb.
double psnr(const ImageTensor& pred, const ImageTensor& ref);

/// Mean SSIM over all valid 11x11 Gaussian windows, averaged over channels.
double ssim(const ImageTensor& pred, const ImageTensor& ref);

QualityScore score(const ImageTensor& pred, const ImageTensor& ref);

/// Differentiable mean SSIM of (..., 3, H, W) tensors in the input dtype.
/// Used both by ssim() and by the SSIM training loss.
torch::Tensor ssim_index(const torch::Tensor& pred, const torch::Tensor& ref);

/// Decodes an 8-bit PNG/JPEG into [0, 1]. Grayscale files are replicated to 3 channels.
ImageTensor load_image(const std::filesystem::path& path);

/// Clamps to [0, 1], quantizes with round(v * 255) and writes an 8-bit PNG
/// (or JPEG, chosen by extension).
void save_image(const ImageTensor& img, const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

}  // namespace csud

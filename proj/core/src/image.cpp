#include "csud/image.hpp"

#include <cmath>
#include <sstream>

#include "csud/error.hpp"

namespace csud {

namespace {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

}  // namespace

ImageTensor::ImageTensor(torch::Tensor data) {
  if (!data.defined()) throw InvalidInput("ImageTensor: undefined tensor");
  if (data.dim() != 3 || data.size(0) != 3) {
    throw InvalidInput("ImageTensor: expected shape (3, H, W), got " + shape_string(data));
  }
  if (data.size(1) < 1 || data.size(2) < 1) {
    throw InvalidInput("ImageTensor: empty spatial extent " + shape_string(data));
  }
  if (!data.is_floating_point()) data = data.to(torch::kFloat32);
  if (!torch::isfinite(data).all().item<bool>()) {
    throw InvalidInput("ImageTensor: non-finite values");
  }
  data_ = std::move(data);
}

ImageTensor ImageTensor::filled(int64_t height, int64_t width, double r, double g, double b,
                                torch::Dtype dtype) {
  auto t = torch::empty({3, height, width}, torch::TensorOptions().dtype(dtype));
  t[0].fill_(r);
  t[1].fill_(g);
  t[2].fill_(b);
  return ImageTensor(t);
}

ImageTensor ImageTensor::clamped() const { return ImageTensor(data_.clamp(0.0, 1.0)); }

ChannelCycleResiduals cycle_subtract(const torch::Tensor& rgb) {
  if (!rgb.defined() || rgb.dim() < 3 || rgb.size(-3) != 3) {
    throw InvalidInput("cycle_subtract: expected 3 channels on dim -3, got " +
                       (rgb.defined() ? shape_string(rgb) : std::string("undefined")));
  }
  auto r = rgb.select(-3, 0);
  auto g = rgb.select(-3, 1);
  auto b = rgb.select(-3, 2);
  return {r - g, g - b, b - r};
}

ChannelCycleResiduals cycle_subtract(const ImageTensor& img) { return cycle_subtract(img.tensor()); }

CosineSimilarity cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  const double v = dot / (std::sqrt(na) * std::sqrt(nb));
  return {std::clamp(v, -1.0, 1.0), false};
}

CosineSimilarity cosine_similarity(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() != b.numel()) throw InvalidInput("cosine_similarity: length mismatch");
  auto da = a.detach().to(torch::kFloat64).contiguous().flatten();
  auto db = b.detach().to(torch::kFloat64).contiguous().flatten();
  return cosine_similarity(std::span<const double>(da.data_ptr<double>(), da.numel()),
                           std::span<const double>(db.data_ptr<double>(), db.numel()));
}

}  // namespace csud

#include <algorithm>
#include <cctype>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "csud/error.hpp"
#include "csud/image.hpp"

namespace csud {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageTensor load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("load_image: no such file: " + path.string());
  }
  if (!is_image_file(path)) {
    throw IoError("load_image: unsupported format (expected PNG or JPEG): " + path.string());
  }
  // IMREAD_COLOR replicates grayscale to three channels and reduces depth to 8 bits.
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("load_image: failed to decode " + path.string());

  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
  return ImageTensor(chw);
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  if (!is_image_file(path)) {
    throw IoError("save_image: unsupported output extension: " + path.string());
  }
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError("save_image: parent directory does not exist: " + path.string());
  }
  auto hwc = img.tensor()
                 .detach()
                 .to(torch::kFloat64)
                 .clamp(0.0, 1.0)
                 .mul(255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat rgb(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IoError("save_image: failed to write " + path.string());
}

}  // namespace csud

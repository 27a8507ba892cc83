#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "csud/error.hpp"
#include "csud/image.hpp"
#include "support/fixtures.hpp"

namespace {

using csud::ImageTensor;

// Plain-loop SSIM used as an independent oracle: valid-mode 11x11 Gaussian
// windows (sigma 1.5), per-channel means averaged.
double brute_force_ssim(const torch::Tensor& a, const torch::Tensor& b) {
  const int w = 11;
  const double sigma = 1.5;
  std::vector<double> g(w * w);
  double norm = 0.0;
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < w; ++j) {
      const double di = i - 5, dj = j - 5;
      g[i * w + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      norm += g[i * w + j];
    }
  }
  for (auto& v : g) v /= norm;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto pa = a.to(torch::kFloat64).contiguous();
  auto pb = b.to(torch::kFloat64).contiguous();
  const auto aa = pa.accessor<double, 3>();
  const auto bb = pb.accessor<double, 3>();
  const int64_t h = pa.size(1), wd = pa.size(2);
  double total = 0.0;
  int64_t count = 0;
  for (int c = 0; c < 3; ++c) {
    for (int64_t y = 0; y + w <= h; ++y) {
      for (int64_t x = 0; x + w <= wd; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < w; ++i) {
          for (int j = 0; j < w; ++j) {
            const double k = g[i * w + j];
            const double u = aa[c][y + i][x + j], v = bb[c][y + i][x + j];
            mx += k * u;
            my += k * v;
            sxx += k * u * u;
            syy += k * v * v;
            sxy += k * u * v;
          }
        }
        sxx -= mx * mx;
        syy -= my * my;
        sxy -= mx * my;
        total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

TEST(ImageTensor, RejectsWrongChannelCount) {
  EXPECT_THROW(ImageTensor(torch::zeros({4, 8, 8})), csud::InvalidInput);
  EXPECT_THROW(ImageTensor(torch::zeros({8, 8})), csud::InvalidInput);
}

TEST(ImageTensor, RejectsNonFiniteAndEmpty) {
  auto t = torch::zeros({3, 4, 4});
  t[1][2][2] = std::nan("");
  EXPECT_THROW(ImageTensor{t}, csud::InvalidInput);
  EXPECT_THROW(ImageTensor(torch::zeros({3, 0, 4})), csud::InvalidInput);
}

TEST(ImageTensor, FilledAndClamped) {
  const auto img = ImageTensor::filled(2, 3, -0.5, 0.5, 1.5);
  EXPECT_EQ(img.height(), 2);
  EXPECT_EQ(img.width(), 3);
  const auto c = img.clamped().tensor();
  EXPECT_DOUBLE_EQ(c[0][0][0].item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(c[1][1][2].item<double>(), 0.5);
  EXPECT_DOUBLE_EQ(c[2][1][1].item<double>(), 1.0);
}

TEST(CycleSubtract, MatchesPerPixelDifferences) {
  auto t = torch::rand({3, 5, 4}, torch::kFloat64);
  const auto r = csud::cycle_subtract(t);
  const auto a = t.accessor<double, 3>();
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 4; ++x) {
      EXPECT_DOUBLE_EQ(r.rg[y][x].item<double>(), a[0][y][x] - a[1][y][x]);
      EXPECT_DOUBLE_EQ(r.gb[y][x].item<double>(), a[1][y][x] - a[2][y][x]);
      EXPECT_DOUBLE_EQ(r.br[y][x].item<double>(), a[2][y][x] - a[0][y][x]);
    }
  }
}

TEST(CycleSubtract, ResidualsSumToZeroAndAcceptBatches) {
  auto t = torch::rand({2, 3, 6, 6});
  const auto r = csud::cycle_subtract(t);
  EXPECT_EQ(r.rg.sizes(), torch::IntArrayRef({2, 6, 6}));
  EXPECT_LT((r.rg + r.gb + r.br).abs().max().item<double>(), 1e-6);
}

TEST(CycleSubtract, ChannelUniformShiftCancels) {
  auto t = torch::rand({3, 8, 8}, torch::kFloat64);
  auto shift = torch::rand({1, 8, 8}, torch::kFloat64);
  const auto a = csud::cycle_subtract(t);
  const auto b = csud::cycle_subtract(t + shift);
  EXPECT_LT((a.rg - b.rg).abs().max().item<double>(), 1e-12);
  EXPECT_LT((a.br - b.br).abs().max().item<double>(), 1e-12);
}

TEST(CosineSimilarity, KnownAngles) {
  const std::vector<double> a{1.0, 0.0}, b{1.0, 1.0}, c{-2.0, 0.0};
  EXPECT_NEAR(csud::cosine_similarity(a, b).value, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(csud::cosine_similarity(a, a).value, 1.0, 1e-15);
  EXPECT_NEAR(csud::cosine_similarity(a, c).value, -1.0, 1e-15);
}

TEST(CosineSimilarity, ZeroNormIsFlaggedDegenerate) {
  const std::vector<double> a{0.0, 0.0}, b{1.0, 2.0};
  const auto r = csud::cosine_similarity(a, b);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.value, 0.0);
}

TEST(CosineSimilarity, TensorFormMatchesSpanForm) {
  auto a = torch::randn({50}, torch::kFloat64);
  auto b = torch::randn({50}, torch::kFloat64);
  const auto t = csud::cosine_similarity(a, b).value;
  const auto s = csud::cosine_similarity(std::span<const double>(a.data_ptr<double>(), 50),
                                         std::span<const double>(b.data_ptr<double>(), 50))
                     .value;
  EXPECT_DOUBLE_EQ(t, s);
  EXPECT_GE(t, -1.0);
  EXPECT_LE(t, 1.0);
}

TEST(Psnr, UniformOffsets) {
  const auto ref = ImageTensor::filled(8, 8, 0.5, 0.5, 0.5, torch::kFloat64);
  EXPECT_NEAR(csud::psnr(ImageTensor::filled(8, 8, 0.6, 0.6, 0.6, torch::kFloat64), ref), 20.0, 1e-6);
  EXPECT_NEAR(csud::psnr(ImageTensor::filled(8, 8, 0.51, 0.51, 0.51, torch::kFloat64), ref), 40.0, 1e-6);
}

TEST(Psnr, IdenticalImagesHitTheCap) {
  const auto img = ImageTensor(torch::rand({3, 8, 8}));
  EXPECT_EQ(csud::psnr(img, img), csud::kPsnrCapDb);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(csud::psnr(ImageTensor::filled(8, 8, 0, 0, 0), ImageTensor::filled(8, 9, 0, 0, 0)),
               csud::InvalidInput);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double c1 = 0.01 * 0.01;
  const auto black = ImageTensor::filled(16, 16, 0, 0, 0, torch::kFloat64);
  const auto white = ImageTensor::filled(16, 16, 1, 1, 1, torch::kFloat64);
  EXPECT_NEAR(csud::ssim(black, white), c1 / (1.0 + c1), 1e-8);
}

TEST(Ssim, SelfSimilarityIsOne) {
  const auto img = ImageTensor(torch::rand({3, 24, 20}));
  EXPECT_NEAR(csud::ssim(img, img), 1.0, 1e-7);
}

TEST(Ssim, MatchesBruteForceWindows) {
  torch::manual_seed(3);
  auto a = torch::rand({3, 17, 15}, torch::kFloat64);
  auto b = (a + 0.1 * torch::randn({3, 17, 15}, torch::kFloat64)).clamp(0, 1);
  EXPECT_NEAR(csud::ssim(ImageTensor(a), ImageTensor(b)), brute_force_ssim(a, b), 1e-9);
}

TEST(Ssim, TooSmallThrows) {
  const auto img = ImageTensor::filled(10, 10, 0, 0, 0);
  EXPECT_THROW(csud::ssim(img, img), csud::InvalidInput);
}

TEST(Ssim, IndexIsDifferentiable) {
  auto a = torch::rand({1, 3, 16, 16}, torch::kFloat64).requires_grad_(true);
  auto b = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  auto s = csud::ssim_index(a, b);
  s.backward();
  ASSERT_TRUE(a.grad().defined());
  EXPECT_GT(a.grad().abs().sum().item<double>(), 0.0);
}

TEST(ImageIo, RoundTripWithinQuantization) {
  csud::testing::TempDir dir("io");
  const auto img = ImageTensor(torch::rand({3, 9, 13}));
  csud::save_image(img, dir / "a.png");
  const auto back = csud::load_image(dir / "a.png");
  EXPECT_EQ(back.height(), 9);
  EXPECT_EQ(back.width(), 13);
  EXPECT_LE((back.tensor() - img.tensor()).abs().max().item<double>(), 0.5 / 255.0 + 1e-6);
}

TEST(ImageIo, ErrorsNameThePath) {
  csud::testing::TempDir dir("io");
  try {
    csud::load_image(dir / "missing.png");
    FAIL() << "expected IoError";
  } catch (const csud::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.png"), std::string::npos);
  }
  EXPECT_THROW(csud::save_image(ImageTensor::filled(2, 2, 0, 0, 0), dir / "nope" / "a.png"), csud::IoError);
  EXPECT_THROW(csud::save_image(ImageTensor::filled(2, 2, 0, 0, 0), dir / "a.bmp"), csud::IoError);
}

TEST(ImageIo, SaveClampsOutOfRange) {
  csud::testing::TempDir dir("io");
  csud::save_image(ImageTensor::filled(2, 2, -1.0, 2.0, 0.5), dir / "c.png");
  const auto back = csud::load_image(dir / "c.png").tensor();
  EXPECT_EQ(back[0][0][0].item<float>(), 0.0f);
  EXPECT_EQ(back[1][0][0].item<float>(), 1.0f);
  EXPECT_NEAR(back[2][0][0].item<float>(), 128.0f / 255.0f, 1e-6);
}

}  // namespace

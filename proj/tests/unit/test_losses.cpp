#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"
#include "csud/losses.hpp"

namespace {

using csud::LossWeights;

csud::DiscriminatorFn constant_d(double v) {
  return [v](const torch::Tensor& img) {
    // Depend on the input so gradients have somewhere to go.
    return torch::full({img.size(0), 1, 2, 2}, v, img.options()) + 0.0 * img.mean();
  };
}

TEST(LossWeights, PaperDefaults) {
  const LossWeights w;
  EXPECT_EQ(w.lambda1, 1.0);
  EXPECT_EQ(w.lambda2, 0.2);
  EXPECT_EQ(w.lambda3, 0.5);
  EXPECT_EQ(w.alpha1, 10.0);
  EXPECT_EQ(w.alpha2, 5.0);
  EXPECT_DOUBLE_EQ(w.lambda3, 0.1 * w.alpha2);
}

TEST(LossWeights, NegativeOrNonFiniteRejected) {
  LossWeights w;
  w.alpha1 = -1;
  EXPECT_THROW(w.validate(), csud::ConfigError);
  w.alpha1 = std::numeric_limits<double>::infinity();
  EXPECT_THROW(w.validate(), csud::ConfigError);
}

TEST(CcLoss, ZeroOnIdenticalAndChannelUniformShift) {
  auto x = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  EXPECT_EQ(csud::cc_loss(x, x).item<double>(), 0.0);
  auto rain = torch::rand({2, 1, 8, 8}, torch::kFloat64);
  EXPECT_LT(csud::cc_loss(x + rain, x).item<double>(), 1e-12);
}

TEST(CcLoss, RedOnlyPerturbationBruteForce) {
  auto x = torch::rand({3, 4, 4}, torch::kFloat64);
  auto y = x.clone();
  y[0] += 0.1;
  // Per pixel: |dRG| = 0.1, |dGB| = 0, |dBR| = 0.1.
  double oracle = 0.0;
  const auto a = x.accessor<double, 3>();
  const auto b = y.accessor<double, 3>();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      oracle += std::abs((b[0][i][j] - b[1][i][j]) - (a[0][i][j] - a[1][i][j])) / 16.0;
      oracle += std::abs((b[1][i][j] - b[2][i][j]) - (a[1][i][j] - a[2][i][j])) / 16.0;
      oracle += std::abs((b[2][i][j] - b[0][i][j]) - (a[2][i][j] - a[0][i][j])) / 16.0;
    }
  }
  EXPECT_NEAR(oracle, 0.2, 1e-12);
  EXPECT_NEAR(csud::cc_loss(y, x).item<double>(), 0.2, 1e-12);
}

TEST(CcLoss, ShapeMismatchThrows) {
  EXPECT_THROW(csud::cc_loss(torch::rand({3, 4, 4}), torch::rand({3, 4, 5})), csud::InvalidInput);
}

TEST(SrLossG, ConstantOffsetGenerator) {
  auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto y_der = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  const csud::GeneratorFn g = [](const torch::Tensor& a, const torch::Tensor&) { return a + 0.5; };
  EXPECT_NEAR(csud::sr_loss_g(g, x, y_der).item<double>(), 1.0, 1e-12);
}

TEST(SrLossG, GuideDependentGenerator) {
  auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto y_der = torch::full({1, 3, 8, 8}, 0.25, torch::kFloat64);
  const csud::GeneratorFn g = [](const torch::Tensor& a, const torch::Tensor& b) { return a + b.mean(); };
  const double expected = x.mean().item<double>() + 0.25;
  EXPECT_NEAR(csud::sr_loss_g(g, x, y_der).item<double>(), expected, 1e-12);
}

TEST(SrLossG, DerainedGuideIsDetached) {
  auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto y_der = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto w = torch::ones({1}, torch::kFloat64).requires_grad_(true);
  const csud::GeneratorFn g = [&w](const torch::Tensor& a, const torch::Tensor& b) { return a * b * w; };
  csud::sr_loss_g(g, x, y_der).backward();
  EXPECT_FALSE(y_der.grad().defined());
  EXPECT_TRUE(w.grad().defined());
}

TEST(SrLossDer, FrozenGeneratorReceivesNoGradient) {
  csud::Generator gen(csud::GeneratorConfig{4, 8, 1, 8});
  auto x = torch::rand({1, 3, 16, 16});
  auto x_der = torch::rand({1, 3, 16, 16}).requires_grad_(true);
  auto y_der = torch::rand({1, 3, 16, 16}).requires_grad_(true);
  csud::sr_loss_der(csud::frozen(gen), x, x_der, y_der).backward();
  for (const auto& p : gen->parameters()) EXPECT_FALSE(p.grad().defined());
  ASSERT_TRUE(x_der.grad().defined());
  EXPECT_GT(x_der.grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(y_der.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : gen->parameters()) EXPECT_TRUE(p.requires_grad());
}

TEST(GanLoss, LeastSquaresStubs) {
  auto real = torch::rand({2, 3, 8, 8});
  std::vector<torch::Tensor> fakes{torch::rand({2, 3, 8, 8}), torch::rand({2, 3, 8, 8})};
  // D == 1: real term 0, fake term 1 -> 0.5; generator term 0.
  EXPECT_NEAR(csud::gan_loss_d(constant_d(1.0), real, fakes).item<double>(), 0.5, 1e-7);
  EXPECT_NEAR(csud::gan_loss_g(constant_d(1.0), fakes).item<double>(), 0.0, 1e-7);
  // D == 0: real term 1 -> 0.5; generator term 1.
  EXPECT_NEAR(csud::gan_loss_d(constant_d(0.0), real, fakes).item<double>(), 0.5, 1e-7);
  EXPECT_NEAR(csud::gan_loss_g(constant_d(0.0), fakes).item<double>(), 1.0, 1e-7);
}

TEST(GanLoss, OptimaOfScalarStubs) {
  auto real = torch::rand({1, 3, 8, 8});
  std::vector<torch::Tensor> fakes{torch::rand({1, 3, 8, 8})};
  double best_c = -1.0, best = 1e9;
  for (int i = 0; i <= 40; ++i) {
    const double c = -0.5 + i * 0.05;
    const double v = csud::gan_loss_g(constant_d(c), fakes).item<double>();
    if (v < best) best = v, best_c = c;
  }
  EXPECT_NEAR(best_c, 1.0, 1e-9);
  // Ideal discriminator (real -> 1, fake -> 0) reaches zero d-loss.
  const csud::DiscriminatorFn ideal = [&](const torch::Tensor& img) {
    return torch::equal(img, real) ? torch::ones({1, 1, 2, 2}) : torch::zeros({1, 1, 2, 2});
  };
  EXPECT_NEAR(csud::gan_loss_d(ideal, real, fakes).item<double>(), 0.0, 1e-12);
}

TEST(GanLoss, VanillaObjective) {
  auto real = torch::rand({1, 3, 8, 8});
  std::vector<torch::Tensor> fakes{torch::rand({1, 3, 8, 8})};
  const auto obj = csud::GanObjective::kVanilla;
  EXPECT_NEAR(csud::gan_loss_d(constant_d(0.0), real, fakes, obj).item<double>(), std::log(2.0), 1e-6);
  EXPECT_NEAR(csud::gan_loss_g(constant_d(0.0), fakes, obj).item<double>(), std::log(2.0), 1e-6);
}

TEST(GanLoss, PerFakeTermsAndEmptyList) {
  std::vector<torch::Tensor> fakes{torch::zeros({1, 3, 4, 4}), torch::ones({1, 3, 4, 4})};
  const csud::DiscriminatorFn d = [](const torch::Tensor& img) { return img.mean({1}, true); };
  const auto terms = csud::gan_terms_g(d, fakes);
  ASSERT_EQ(terms.per_fake.size(), 2u);
  EXPECT_NEAR(terms.per_fake[0].item<double>(), 1.0, 1e-7);
  EXPECT_NEAR(terms.per_fake[1].item<double>(), 0.0, 1e-7);
  EXPECT_NEAR(terms.total.item<double>(), 0.5, 1e-7);
  EXPECT_THROW(csud::gan_loss_g(d, {}), csud::InvalidInput);
  EXPECT_THROW(csud::gan_loss_d(d, fakes[0], {}), csud::InvalidInput);
}

TEST(GanLoss, DiscriminatorObjectiveDetachesFakes) {
  auto fake = torch::rand({1, 3, 4, 4}).requires_grad_(true);
  auto w = torch::ones({1}).requires_grad_(true);
  const csud::DiscriminatorFn d = [&w](const torch::Tensor& img) { return img.mean({1}, true) * w; };
  csud::gan_loss_d(d, torch::rand({1, 3, 4, 4}), {fake}).backward();
  EXPECT_FALSE(fake.grad().defined());
  EXPECT_TRUE(w.grad().defined());
}

TEST(DerainerLoss, L1OnlyConstantCase) {
  auto x = torch::zeros({1, 3, 16, 16});
  auto x_der = torch::full({1, 3, 16, 16}, 0.25);
  LossWeights w;
  w.lambda1 = w.lambda2 = w.lambda3 = 0.0;
  const auto loss = csud::derainer_loss(x, x_der, w, nullptr, nullptr, x_der);
  EXPECT_NEAR(loss.total.item<double>(), 0.25, 1e-7);
  EXPECT_EQ(loss.ssim.item<double>(), 0.0);
  EXPECT_EQ(loss.perceptual.item<double>(), 0.0);
}

TEST(DerainerLoss, SsimTermClosedForm) {
  auto x = torch::zeros({1, 3, 16, 16}, torch::kFloat64);
  auto x_der = torch::full({1, 3, 16, 16}, 0.25, torch::kFloat64);
  LossWeights w;
  w.lambda2 = w.lambda3 = 0.0;
  const double c1 = 1e-4;
  const double ssim = c1 / (0.0625 + c1);
  const auto loss = csud::derainer_loss(x, x_der, w, nullptr, nullptr, x_der);
  EXPECT_NEAR(loss.ssim.item<double>(), 1.0 - ssim, 1e-9);
  EXPECT_NEAR(loss.total.item<double>(), 0.25 + 1.0 - ssim, 1e-9);
}

TEST(DerainerLoss, PerceptualRequiresExtractor) {
  auto x = torch::zeros({1, 3, 16, 16});
  LossWeights w;
  w.lambda3 = 0.0;
  EXPECT_THROW(csud::derainer_loss(x, x, w, nullptr, nullptr, x), csud::ConfigError);
}

TEST(SsimLoss, ZeroForIdenticalInputs) {
  auto x = torch::rand({2, 3, 16, 16}, torch::kFloat64);
  EXPECT_NEAR(csud::ssim_loss(x, x).item<double>(), 0.0, 1e-9);
}

TEST(TotalLoss, WeightedSum) {
  csud::LossParts parts;
  parts.gan = 1.5;
  parts.der = 0.5;
  parts.cc = 0.2;
  parts.sr_g = 0.2;
  parts.gan_d = 0.3;
  const auto r = csud::total_loss(parts, LossWeights{});
  EXPECT_NEAR(r.at("total"), 5.0, 1e-12);
  EXPECT_NEAR(r.at("total_g"), 4.5, 1e-12);
  EXPECT_NEAR(r.at("total_der"), 0.5, 1e-12);
  EXPECT_NEAR(r.at("total_d"), 0.3, 1e-12);
}

TEST(TotalLoss, NonFiniteRaisesDivergenceNamingTheTerm) {
  csud::LossParts parts;
  parts.cc = std::nan("");
  try {
    csud::total_loss(parts, LossWeights{});
    FAIL() << "expected DivergenceError";
  } catch (const csud::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("cc"), std::string::npos) << e.what();
  }
}

TEST(LossReport, FixedKeyOrderAndJson) {
  csud::LossReport r;
  const auto& keys = csud::LossReport::keys();
  ASSERT_EQ(keys.front(), "adv1");
  ASSERT_EQ(keys.back(), "total");
  r["cc"] = 0.125;
  r["total"] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(r.first_non_finite(), "total");
  const auto j = nlohmann::ordered_json::parse(r.to_json());
  EXPECT_EQ(j.begin().key(), "adv1");
  EXPECT_EQ(j["total"], "inf");
  const auto back = csud::LossReport::from_json(r.to_json());
  EXPECT_EQ(back.at("cc"), 0.125);
  EXPECT_THROW(r["bogus"], csud::InvalidInput);
}

}  // namespace

#include <gtest/gtest.h>

#include "csud/error.hpp"
#include "csud/models.hpp"

namespace {

using csud::DiscriminatorConfig;
using csud::GeneratorConfig;

int64_t conv_params(int64_t k, int64_t in, int64_t out) { return k * k * in * out + out; }

int64_t conv_out(int64_t n, int64_t k, int64_t s, int64_t p) { return (n + 2 * p - k) / s + 1; }

TEST(Generator, PreservesShapeSingleAndBatched) {
  csud::Generator g(GeneratorConfig{8, 16, 1, 16});
  for (int64_t side : {16, 64}) {
    auto x = torch::rand({3, side, side});
    EXPECT_EQ(g->forward(x, x).sizes(), x.sizes());
  }
  auto b = torch::rand({2, 3, 20, 28});
  EXPECT_EQ(g->forward(b, b).sizes(), b.sizes());
}

TEST(Generator, OddSizesRoundTrip) {
  csud::Generator g(GeneratorConfig{4, 8, 1, 8});
  auto x = torch::rand({1, 3, 17, 23});
  EXPECT_EQ(g->forward(x, x).sizes(), x.sizes());
}

TEST(Generator, MismatchedInputsThrow) {
  csud::Generator g(GeneratorConfig{4, 8, 1, 8});
  EXPECT_THROW(g->forward(torch::rand({3, 16, 16}), torch::rand({3, 16, 18})), csud::InvalidInput);
  EXPECT_THROW(g->forward(torch::rand({4, 16, 16}), torch::rand({4, 16, 16})), csud::InvalidInput);
}

TEST(Generator, TrunkWidthMustMatchConcatenation) {
  EXPECT_THROW((GeneratorConfig{8, 16, 1, 12}.validate()), csud::ConfigError);
}

TEST(Generator, ParameterCountMatchesLayerTable) {
  // CFEM 7x7 3->64; RIEM 7x7 3->64, 7x7 64->64, 4x4 64->128, 3x3 128->64;
  // six residual blocks of two 3x3 128->128; 3x3 128->3 projection.
  const int64_t expected = conv_params(7, 3, 64) + conv_params(7, 3, 64) + conv_params(7, 64, 64) +
                           conv_params(4, 64, 128) + conv_params(3, 128, 64) +
                           6 * 2 * conv_params(3, 128, 128) + conv_params(3, 128, 3);
  EXPECT_EQ(csud::parameter_count(*csud::Generator(GeneratorConfig{})), expected);
}

TEST(Generator, RiemSkipAddsNoParametersButChangesOutput) {
  GeneratorConfig plain{4, 8, 1, 8};
  GeneratorConfig skip = plain;
  skip.riem_skip = true;
  torch::manual_seed(3);
  csud::Generator a(plain);
  csud::Generator b(skip);
  EXPECT_EQ(csud::parameter_count(*a), csud::parameter_count(*b));
  {
    torch::NoGradGuard no_grad;
    auto pa = a->parameters();
    auto pb = b->parameters();
    for (size_t i = 0; i < pa.size(); ++i) {
      pa[i].normal_(0.0, 0.2);
      pb[i].copy_(pa[i]);
    }
  }
  auto x = torch::rand({1, 3, 16, 16});
  auto y = torch::rand({1, 3, 16, 16});
  EXPECT_FALSE(torch::allclose(a->forward(x, y), b->forward(x, y)));
}

TEST(Discriminator, PatchGridFollowsConvArithmetic) {
  csud::Discriminator d(DiscriminatorConfig{});
  for (int64_t side : {256, 64}) {
    int64_t n = side;
    for (int s : {2, 2, 2, 1}) n = conv_out(n, 4, s, 1);
    n = conv_out(n, 4, 1, 1);
    const auto out = d->forward(torch::rand({1, 3, side, side}));
    EXPECT_EQ(out.sizes(), torch::IntArrayRef({1, 1, n, n})) << side;
    EXPECT_EQ(DiscriminatorConfig{}.output_size(side), n);
  }
  EXPECT_EQ(DiscriminatorConfig{}.output_size(256), 30);
  EXPECT_EQ(DiscriminatorConfig{}.output_size(64), 6);
}

TEST(Discriminator, MinimumInputSize) {
  const DiscriminatorConfig cfg;
  EXPECT_EQ(cfg.min_input_size(), 24);
  EXPECT_LE(cfg.output_size(16), 0);
  csud::Discriminator d(cfg);
  EXPECT_EQ(d->forward(torch::rand({1, 3, 24, 24})).size(-1), 1);
  EXPECT_THROW(d->forward(torch::rand({1, 3, 16, 16})), csud::InvalidInput);
}

TEST(Discriminator, ParameterCountMatchesLayerTable) {
  const int64_t expected = conv_params(4, 3, 64) + conv_params(4, 64, 128) + conv_params(4, 128, 256) +
                           conv_params(4, 256, 512) + conv_params(4, 512, 1);
  EXPECT_EQ(csud::parameter_count(*csud::Discriminator(DiscriminatorConfig{})), expected);
}

TEST(Derainer, IdentityAtInitialization) {
  const auto bundle = csud::init_models({GeneratorConfig{4, 8, 1, 8}, {}, {8, true}}, 3);
  auto x = torch::rand({2, 3, 30, 26});
  EXPECT_TRUE(torch::allclose(bundle.derainer->forward(x), x));
}

TEST(Derainer, ArbitrarySizesAndSingleImages) {
  const auto bundle = csud::init_models({GeneratorConfig{4, 8, 1, 8}, {}, {8, false}}, 3);
  for (auto shape : {std::vector<int64_t>{3, 37, 53}, std::vector<int64_t>{1, 3, 5, 6}}) {
    auto x = torch::rand(shape);
    EXPECT_EQ(bundle.derainer->forward(x).sizes(), x.sizes());
  }
}

TEST(InitModels, SeededAndPrefixed) {
  const csud::ModelConfigs cfg{GeneratorConfig{4, 8, 1, 8}, DiscriminatorConfig{{4, 8, 8, 8}}, {4, true}};
  const auto a = csud::init_models(cfg, 5).named_parameters();
  const auto b = csud::init_models(cfg, 5).named_parameters();
  const auto c = csud::init_models(cfg, 6).named_parameters();
  ASSERT_EQ(a.size(), b.size());
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(torch::equal(a[i].second, b[i].second)) << a[i].first;
    any_diff = any_diff || !torch::equal(a[i].second, c[i].second);
    const auto& name = a[i].first;
    EXPECT_TRUE(name.rfind("g.", 0) == 0 || name.rfind("d.", 0) == 0 || name.rfind("der.", 0) == 0) << name;
  }
  EXPECT_TRUE(any_diff);
}

TEST(InitModels, WeightsSmallBiasesZero) {
  const csud::ModelConfigs cfg{GeneratorConfig{8, 16, 1, 16}, {}, {}};
  for (const auto& [name, p] : csud::init_models(cfg, 1).named_parameters()) {
    if (name.rfind("g.", 0) != 0) continue;
    if (p.dim() == 1) {
      EXPECT_EQ(p.abs().max().item<double>(), 0.0) << name;
    } else {
      EXPECT_NEAR(p.std().item<double>(), 0.02, 0.01) << name;
    }
  }
}

TEST(FrozenParameters, RestoresFlags) {
  csud::Generator g(GeneratorConfig{4, 8, 1, 8});
  g->parameters()[0].requires_grad_(false);
  {
    csud::FrozenParameters freeze(*g);
    for (const auto& p : g->parameters()) EXPECT_FALSE(p.requires_grad());
  }
  EXPECT_FALSE(g->parameters()[0].requires_grad());
  EXPECT_TRUE(g->parameters()[1].requires_grad());
}

}  // namespace

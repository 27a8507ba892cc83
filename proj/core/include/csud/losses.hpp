#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "csud/models.hpp"
#include "csud/perceptual.hpp"

namespace csud {

using GeneratorFn = std::function<torch::Tensor(const torch::Tensor& content, const torch::Tensor& guide)>;
using DiscriminatorFn = std::function<torch::Tensor(const torch::Tensor& img)>;

GeneratorFn as_function(Generator generator);
/// G with its parameters frozen for the duration of each call.
GeneratorFn frozen(Generator generator);
DiscriminatorFn as_function(Discriminator discriminator);

struct LossWeights {
  double lambda1 = 1.0;  // SSIM
  double lambda2 = 0.2;  // perceptual
  double lambda3 = 0.5;  // SR for the derainer, 0.1 * alpha2
  double alpha1 = 10.0;  // channel consistency
  double alpha2 = 5.0;   // SR for the generator

  void validate() const;
};

enum class GanObjective { kLeastSquares, kVanilla };

/// Mean absolute difference.
torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Sum over (R-G, G-B, B-R) of the mean absolute difference between the cycle
/// residuals of the pseudo-rainy image and those of its clean source.
torch::Tensor cc_loss(const torch::Tensor& pseudo_rainy, const torch::Tensor& clean);

/// |G(x, x) - x| + |G(x, y_der) - x|, with y_der detached.
torch::Tensor sr_loss_g(const GeneratorFn& generator, const torch::Tensor& x, const torch::Tensor& y_der);

/// |G(x, x_der) - x| + |G(x, y_der) - x|. Pass a frozen generator: gradient must
/// only reach the derainer through x_der and y_der.
torch::Tensor sr_loss_der(const GeneratorFn& frozen_generator, const torch::Tensor& x,
                          const torch::Tensor& x_der, const torch::Tensor& y_der);

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& ref);

torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& pred,
                              const torch::Tensor& ref);

/// Discriminator objective; fakes are detached.
/// LSGAN: 1/2 E[(D(real)-1)^2] + 1/2 mean_k E[D(fake_k)^2].
torch::Tensor gan_loss_d(const DiscriminatorFn& discriminator, const torch::Tensor& real,
                         const std::vector<torch::Tensor>& fakes,
                         GanObjective objective = GanObjective::kLeastSquares);

struct AdversarialTerms {
  torch::Tensor total;                // mean over fakes
  std::vector<torch::Tensor> per_fake;
};

/// Generator-side objective. LSGAN: mean_k E[(D(fake_k)-1)^2].
AdversarialTerms gan_terms_g(const DiscriminatorFn& discriminator, const std::vector<torch::Tensor>& fakes,
                             GanObjective objective = GanObjective::kLeastSquares);
torch::Tensor gan_loss_g(const DiscriminatorFn& discriminator, const std::vector<torch::Tensor>& fakes,
                         GanObjective objective = GanObjective::kLeastSquares);

struct DerainerLoss {
  torch::Tensor l1;
  torch::Tensor ssim;
  torch::Tensor perceptual;
  torch::Tensor sr_der;
  torch::Tensor total;
};

/// |x - x_der| + lambda1 (1 - SSIM) + lambda2 perceptual + lambda3 SR-Der.
/// Terms whose weight is zero are reported as 0 without being evaluated; the
/// SR term is also skipped when no generator is given.
DerainerLoss derainer_loss(const torch::Tensor& x, const torch::Tensor& x_der, const LossWeights& weights,
                           FeatureExtractor* extractor, const GeneratorFn* frozen_generator,
                           const torch::Tensor& y_der);

/// Named per-step scalars in a fixed key order.
class LossReport {
 public:
  LossReport();

  static const std::vector<std::string>& keys();

  double& operator[](const std::string& key);
  double at(const std::string& key) const;
  const std::vector<std::pair<std::string, double>>& values() const { return values_; }

  /// Empty when every value is finite.
  std::string first_non_finite() const;
  std::string to_json() const;
  static LossReport from_json(const std::string& text);

 private:
  std::vector<std::pair<std::string, double>> values_;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, LossReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

struct LossParts {
  double gan = 0.0;    // generator-side adversarial sum
  double der = 0.0;    // derainer objective
  double cc = 0.0;
  double sr_g = 0.0;
  double gan_d = 0.0;  // discriminator objective
};

/// total = L_GAN + L_Der + alpha1 L_CC + alpha2 L_SR-G, split into total_g
/// (everything but L_Der), total_der and the separately minimized total_d.
LossReport total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace csud

#include "csud/losses.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"
#include "csud/image.hpp"

namespace csud {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw InvalidInput(os.str());
  }
}

torch::Tensor real_target(const torch::Tensor& logits, GanObjective objective) {
  if (objective == GanObjective::kLeastSquares) return (logits - 1.0).square().mean();
  return F::binary_cross_entropy_with_logits(logits, torch::ones_like(logits));
}

torch::Tensor fake_target(const torch::Tensor& logits, GanObjective objective) {
  if (objective == GanObjective::kLeastSquares) return logits.square().mean();
  return F::binary_cross_entropy_with_logits(logits, torch::zeros_like(logits));
}

}  // namespace

GeneratorFn as_function(Generator generator) {
  return [generator](const torch::Tensor& content, const torch::Tensor& guide) mutable {
    return generator->forward(content, guide);
  };
}

GeneratorFn frozen(Generator generator) {
  return [generator](const torch::Tensor& content, const torch::Tensor& guide) mutable {
    FrozenParameters freeze(*generator);
    return generator->forward(content, guide);
  };
}

DiscriminatorFn as_function(Discriminator discriminator) {
  return [discriminator](const torch::Tensor& img) mutable { return discriminator->forward(img); };
}

void LossWeights::validate() const {
  for (double w : {lambda1, lambda2, lambda3, alpha1, alpha2}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  return (a - b).abs().mean();
}

torch::Tensor cc_loss(const torch::Tensor& pseudo_rainy, const torch::Tensor& clean) {
  require_same_shape(pseudo_rainy, clean, "cc_loss");
  const auto p = cycle_subtract(pseudo_rainy);
  const auto c = cycle_subtract(clean);
  return (p.rg - c.rg).abs().mean() + (p.gb - c.gb).abs().mean() + (p.br - c.br).abs().mean();
}

torch::Tensor sr_loss_g(const GeneratorFn& generator, const torch::Tensor& x, const torch::Tensor& y_der) {
  require_same_shape(x, y_der, "sr_loss_g");
  return csud::l1_loss(generator(x, x), x) + csud::l1_loss(generator(x, y_der.detach()), x);
}

torch::Tensor sr_loss_der(const GeneratorFn& frozen_generator, const torch::Tensor& x,
                          const torch::Tensor& x_der, const torch::Tensor& y_der) {
  require_same_shape(x, x_der, "sr_loss_der");
  require_same_shape(x, y_der, "sr_loss_der");
  return csud::l1_loss(frozen_generator(x, x_der), x) + csud::l1_loss(frozen_generator(x, y_der), x);
}

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& ref) {
  return 1.0 - ssim_index(pred, ref);
}

torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& pred, const torch::Tensor& ref) {
  require_same_shape(pred, ref, "perceptual_loss");
  const auto fp = extractor.features(pred);
  const auto fr = extractor.features(ref);
  if (fp.empty() || fp.size() != fr.size()) throw ConfigError("perceptual_loss: extractor produced no features");
  auto total = torch::zeros({}, pred.options());
  for (size_t i = 0; i < fp.size(); ++i) total = total + (fp[i] - fr[i]).abs().mean();
  return total;
}

torch::Tensor gan_loss_d(const DiscriminatorFn& discriminator, const torch::Tensor& real,
                         const std::vector<torch::Tensor>& fakes, GanObjective objective) {
  if (fakes.empty()) throw InvalidInput("gan_loss_d: empty fakes list");
  auto fake_term = torch::zeros({}, real.options());
  for (const auto& fake : fakes) fake_term = fake_term + fake_target(discriminator(fake.detach()), objective);
  fake_term = fake_term / static_cast<double>(fakes.size());
  return 0.5 * real_target(discriminator(real), objective) + 0.5 * fake_term;
}

AdversarialTerms gan_terms_g(const DiscriminatorFn& discriminator, const std::vector<torch::Tensor>& fakes,
                             GanObjective objective) {
  if (fakes.empty()) throw InvalidInput("gan_loss_g: empty fakes list");
  AdversarialTerms terms;
  for (const auto& fake : fakes) terms.per_fake.push_back(real_target(discriminator(fake), objective));
  terms.total = torch::stack(terms.per_fake).mean();
  return terms;
}

torch::Tensor gan_loss_g(const DiscriminatorFn& discriminator, const std::vector<torch::Tensor>& fakes,
                         GanObjective objective) {
  return gan_terms_g(discriminator, fakes, objective).total;
}

DerainerLoss derainer_loss(const torch::Tensor& x, const torch::Tensor& x_der, const LossWeights& weights,
                           FeatureExtractor* extractor, const GeneratorFn* frozen_generator,
                           const torch::Tensor& y_der) {
  require_same_shape(x, x_der, "derainer_loss");
  const auto zero = torch::zeros({}, x.options());
  DerainerLoss out;
  out.l1 = csud::l1_loss(x, x_der);
  out.ssim = weights.lambda1 > 0.0 ? ssim_loss(x_der, x) : zero;
  if (weights.lambda2 > 0.0) {
    if (extractor == nullptr) throw ConfigError("derainer_loss: perceptual weight set but no extractor");
    out.perceptual = perceptual_loss(*extractor, x_der, x);
  } else {
    out.perceptual = zero;
  }
  out.sr_der = (weights.lambda3 > 0.0 && frozen_generator != nullptr)
                   ? sr_loss_der(*frozen_generator, x, x_der, y_der)
                   : zero;
  out.total = out.l1 + weights.lambda1 * out.ssim + weights.lambda2 * out.perceptual +
              weights.lambda3 * out.sr_der;
  return out;
}

LossReport::LossReport() {
  for (const auto& k : keys()) values_.emplace_back(k, 0.0);
}

const std::vector<std::string>& LossReport::keys() {
  static const std::vector<std::string> k{"adv1",   "adv2", "adv3",       "adv4",    "cc",
                                          "sr_g",   "sr_der", "l1",       "ssim",    "perceptual",
                                          "total_g", "total_d", "total_der", "total"};
  return k;
}

double& LossReport::operator[](const std::string& key) {
  for (auto& [k, v] : values_) {
    if (k == key) return v;
  }
  throw InvalidInput("LossReport: unknown key '" + key + "'");
}

double LossReport::at(const std::string& key) const {
  for (const auto& [k, v] : values_) {
    if (k == key) return v;
  }
  throw InvalidInput("LossReport: unknown key '" + key + "'");
}

std::string LossReport::first_non_finite() const {
  for (const auto& [k, v] : values_) {
    if (!std::isfinite(v)) return k;
  }
  return {};
}

std::string LossReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) {
    if (std::isfinite(v)) {
      j[k] = v;
    } else {
      j[k] = std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    }
  }
  return j.dump();
}

LossReport LossReport::from_json(const std::string& text) {
  LossReport r;
  const auto j = nlohmann::json::parse(text);
  for (auto& [k, v] : r.values_) {
    if (j.contains(k) && j[k].is_number()) v = j[k].get<double>();
  }
  return r;
}

LossReport total_loss(const LossParts& parts, const LossWeights& weights) {
  LossReport report;
  report["cc"] = parts.cc;
  report["sr_g"] = parts.sr_g;
  report["total_g"] = parts.gan + weights.alpha1 * parts.cc + weights.alpha2 * parts.sr_g;
  report["total_der"] = parts.der;
  report["total_d"] = parts.gan_d;
  report["total"] = report["total_g"] + report["total_der"];
  if (const auto bad = report.first_non_finite(); !bad.empty()) {
    throw DivergenceError("non-finite loss component '" + bad + "'", report);
  }
  return report;
}

}  // namespace csud

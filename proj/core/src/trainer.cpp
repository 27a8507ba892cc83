#include "csud/trainer.hpp"

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"

namespace csud {

namespace fs = std::filesystem;

namespace {

using AdamState = torch::optim::AdamParamState;

std::unique_ptr<torch::optim::Adam> make_adam(const torch::nn::Module& module, const TrainConfig& c) {
  return std::make_unique<torch::optim::Adam>(
      module.parameters(true),
      torch::optim::AdamOptions(c.lr_phase1).betas({c.adam_beta1, c.adam_beta2}));
}

void save_adam_state(const torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
                     Checkpoint& ckpt) {
  for (const auto& item : module.named_parameters(true)) {
    const auto it = opt.state().find(item.value().unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& st = static_cast<const AdamState&>(*it->second);
    const auto name = "adam." + prefix + item.key();
    ckpt.tensors.emplace_back(name + ".exp_avg", st.exp_avg().clone());
    ckpt.tensors.emplace_back(name + ".exp_avg_sq", st.exp_avg_sq().clone());
    ckpt.optimizer_steps[name] = st.step();
  }
}

void load_adam_state(torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
                     const Checkpoint& ckpt) {
  for (const auto& item : module.named_parameters(true)) {
    const auto name = "adam." + prefix + item.key();
    const auto step = ckpt.optimizer_steps.find(name);
    if (step == ckpt.optimizer_steps.end()) continue;
    auto st = std::make_unique<AdamState>();
    st->step(step->second);
    st->exp_avg(ckpt.tensor(name + ".exp_avg").clone());
    st->exp_avg_sq(ckpt.tensor(name + ".exp_avg_sq").clone());
    opt.state()[item.value().unsafeGetTensorImpl()] = std::move(st);
  }
}

void load_parameters(ModelBundle& models, const Checkpoint& ckpt) {
  torch::NoGradGuard no_grad;
  for (auto& [name, p] : models.named_parameters()) {
    const auto& src = ckpt.tensor(name);
    if (!src.sizes().equals(p.sizes())) throw IoError("checkpoint: shape mismatch for " + name);
    p.copy_(src);
  }
}

void require_finite(const StepGraph& graph) {
  for (const auto& [name, t] : graph.tensors) {
    if (!torch::isfinite(t).all().item<bool>()) {
      throw DivergenceError("non-finite intermediate '" + name + "'", graph.report);
    }
  }
}

double value(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kJoint: return "joint";
    case Phase::kGenerator: return "generator";
    case Phase::kDerainer: return "derainer";
  }
  return "joint";
}

Phase phase_from_string(const std::string& name) {
  if (name == "joint") return Phase::kJoint;
  if (name == "generator") return Phase::kGenerator;
  if (name == "derainer") return Phase::kDerainer;
  throw ConfigError("unknown training phase '" + name + "'");
}

const torch::Tensor& StepGraph::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw InvalidInput("StepGraph: no tensor named '" + name + "'");
}

bool StepGraph::has(const std::string& name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

Trainer::Trainer(TrainConfig config, std::shared_ptr<const UnpairedSampler> sampler)
    : config_(std::move(config)), sampler_(std::move(sampler)) {
  config_.validate();
  if (!sampler_) throw ConfigError("trainer: no sampler");
  weights_ = config_.effective_weights();
  models_ = init_models(config_.models, config_.seed);
  extractor_ = make_feature_extractor(config_.perceptual);
  steps_per_epoch_ = sampler_->steps_per_epoch(config_.batch_size);
  phase_ = config_.training_mode == TrainingMode::kJoint ? Phase::kJoint : Phase::kGenerator;
  init_optimizers();
}

Trainer::Trainer(const Checkpoint& checkpoint, std::shared_ptr<const UnpairedSampler> sampler)
    : Trainer(resolve_train_config(checkpoint.config_json), std::move(sampler)) {
  load_parameters(models_, checkpoint);
  load_adam_state(*g_opt_, *models_.generator, "g.", checkpoint);
  load_adam_state(*d_opt_, *models_.discriminator, "d.", checkpoint);
  load_adam_state(*der_opt_, *models_.derainer, "der.", checkpoint);
  phase_ = phase_from_string(checkpoint.phase);
  step_ = checkpoint.step;
  phase_step_ = checkpoint.phase_step;
}

void Trainer::init_optimizers() {
  g_opt_ = make_adam(*models_.generator, config_);
  d_opt_ = make_adam(*models_.discriminator, config_);
  der_opt_ = make_adam(*models_.derainer, config_);
}

int64_t Trainer::epoch() const { return phase_step_ / steps_per_epoch_; }

double Trainer::current_lr() const { return config_.lr_at_epoch(epoch()); }

int64_t Trainer::phase_length() const {
  if (config_.max_steps > 0) return config_.max_steps;
  return static_cast<int64_t>(config_.total_epochs()) * steps_per_epoch_;
}

void Trainer::begin_phase(Phase phase) {
  phase_ = phase;
  phase_step_ = 0;
}

void Trainer::set_learning_rate(double lr) {
  for (auto* opt : {g_opt_.get(), d_opt_.get(), der_opt_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

StepGraph Trainer::forward_graph(const torch::Tensor& x, const torch::Tensor& y) {
  if (!x.sizes().equals(y.sizes())) throw InvalidInput("build_step_graph: clean and rainy crops differ in shape");
  StepGraph g;
  auto add = [&g](const std::string& name, const torch::Tensor& t) { g.tensors.emplace_back(name, t); };
  add("x", x);
  add("y", y);

  const auto G = as_function(models_.generator);
  const auto G_frozen = frozen(models_.generator);
  const auto D = as_function(models_.discriminator);
  auto& der = *models_.derainer;
  const auto zero = torch::zeros({}, x.options());

  LossParts parts;
  DerainerLoss dl{zero, zero, zero, zero, zero};
  torch::Tensor cc = zero, sr_g = zero;

  if (phase_ == Phase::kDerainer) {
    // Pseudo pairs from the frozen generator; no SR or extra adversarial terms apply.
    torch::Tensor x_s1;
    {
      torch::NoGradGuard no_grad;
      x_s1 = G(x, y);
    }
    add("x_s1", x_s1);
    auto x_der = der.forward(x_s1);
    add("x_der", x_der);
    auto w = weights_;
    w.lambda3 = 0.0;
    dl = derainer_loss(x, x_der, w, extractor_.get(), nullptr, x_der);
    g.generator_partial = dl.total;
  } else if (phase_ == Phase::kGenerator) {
    auto x_s1 = G(x, y);
    add("x_s1", x_s1);
    g.fakes = {x_s1};
    cc = cc_loss(x_s1, x);
    if (weights_.alpha2 > 0.0) {
      auto x_self = G(x, x);
      add("g_x_x", x_self);
      sr_g = csud::l1_loss(x_self, x);
    }
    g.generator_partial = weights_.alpha1 * cc + weights_.alpha2 * sr_g;
    g.discriminator_objective = gan_loss_d(D, y, g.fakes, config_.gan_objective);
  } else {
    // By default L_Der and SR-Der train Der only, so Der sees x_s1 as a constant input.
    auto x_s1 = G(x, y);
    auto x_der = der.forward(config_.der_loss_to_g ? x_s1 : x_s1.detach());
    auto y_der = der.forward(y);
    add("x_s1", x_s1);
    add("x_der", x_der);
    add("y_der", y_der);
    g.fakes = {x_s1};
    // The adversarial terms are minimized over G only; Der's outputs enter as constants.
    const auto x_der_c = x_der.detach();
    const auto y_der_c = y_der.detach();
    if (config_.num_gan_constraints == 4) {
      auto x_s2 = G(x_der_c, x_s1);
      auto y_s1 = G(y_der_c, y);
      auto y_s2 = G(y_der_c, x_s1);
      add("x_s2", x_s2);
      add("y_s1", y_s1);
      add("y_s2", y_s2);
      g.fakes = {x_s1, x_s2, y_s1, y_s2};
    } else if (config_.num_gan_constraints == 2) {
      auto y_s1 = G(y_der_c, y);
      add("y_s1", y_s1);
      g.fakes = {x_s1, y_s1};
    }
    cc = cc_loss(x_s1, x);
    if (weights_.alpha2 > 0.0) sr_g = sr_loss_g(G, x, y_der);
    dl = derainer_loss(x, x_der, weights_, extractor_.get(), &G_frozen, y_der);
    g.generator_partial = weights_.alpha1 * cc + weights_.alpha2 * sr_g + dl.total;
    g.discriminator_objective = gan_loss_d(D, y, g.fakes, config_.gan_objective);
  }

  parts.cc = value(cc);
  parts.sr_g = value(sr_g);
  parts.der = value(dl.total);
  parts.gan_d = value(g.discriminator_objective);
  g.report["cc"] = parts.cc;
  g.report["sr_g"] = parts.sr_g;
  g.report["sr_der"] = value(dl.sr_der);
  g.report["l1"] = value(dl.l1);
  g.report["ssim"] = value(dl.ssim);
  g.report["perceptual"] = value(dl.perceptual);
  g.report["total_der"] = parts.der;
  g.report["total_d"] = parts.gan_d;
  require_finite(g);
  return g;
}

void Trainer::attach_adversarial(StepGraph& g) {
  LossParts parts;
  parts.cc = g.report["cc"];
  parts.sr_g = g.report["sr_g"];
  parts.der = g.report["total_der"];
  parts.gan_d = g.report["total_d"];

  if (g.fakes.empty()) {
    g.generator_objective = g.generator_partial;
  } else {
    FrozenParameters freeze_d(*models_.discriminator);
    const auto terms = gan_terms_g(as_function(models_.discriminator), g.fakes, config_.gan_objective);
    for (size_t i = 0; i < terms.per_fake.size(); ++i) {
      g.report["adv" + std::to_string(i + 1)] = terms.per_fake[i].item<double>();
    }
    const auto gan = config_.gan_reduction == GanReduction::kSum ? torch::stack(terms.per_fake).sum() : terms.total;
    parts.gan = gan.item<double>();
    g.generator_objective = g.generator_partial + gan;
  }

  LossWeights w = weights_;
  if (phase_ == Phase::kDerainer) w.alpha1 = w.alpha2 = 0.0;
  auto totals = total_loss(parts, w);
  for (const auto* key : {"total_g", "total_der", "total_d", "total"}) g.report[key] = totals[key];
  if (const auto bad = g.report.first_non_finite(); !bad.empty()) {
    throw DivergenceError("non-finite loss '" + bad + "'", g.report);
  }
}

StepGraph Trainer::build_step_graph(const torch::Tensor& x, const torch::Tensor& y) {
  auto g = forward_graph(x, y);
  attach_adversarial(g);
  return g;
}

LossReport Trainer::train_step() { return train_step(sampler_->sample(step_, config_.batch_size)); }

LossReport Trainer::train_step(const UnpairedBatch& batch) {
  auto graph = begin_step(batch);
  update_discriminator(graph);
  return update_generators(graph);
}

StepGraph Trainer::begin_step(const UnpairedBatch& batch) {
  models_.train(true);
  set_learning_rate(current_lr());
  return forward_graph(batch.clean, batch.rainy);
}

void Trainer::update_discriminator(StepGraph& graph) {
  if (phase_ == Phase::kDerainer) return;
  d_opt_->zero_grad();
  graph.discriminator_objective.backward();
  d_opt_->step();
}

LossReport Trainer::update_generators(StepGraph& graph) {
  // Adversarial terms see the freshly updated discriminator.
  attach_adversarial(graph);
  g_opt_->zero_grad();
  der_opt_->zero_grad();
  graph.generator_objective.backward();
  if (phase_ != Phase::kDerainer) g_opt_->step();
  if (phase_ != Phase::kGenerator) der_opt_->step();

  check_parameters_finite();
  ++step_;
  ++phase_step_;
  return graph.report;
}

void Trainer::check_parameters_finite() const {
  torch::NoGradGuard no_grad;
  for (const auto& [name, p] : models_.named_parameters()) {
    if (!torch::isfinite(p).all().item<bool>()) {
      throw DivergenceError("non-finite parameter '" + name + "' after step " + std::to_string(step_ + 1),
                            LossReport{});
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config_json = to_json(config_);
  ckpt.step = step_;
  ckpt.phase_step = phase_step_;
  ckpt.phase = to_string(phase_);
  ckpt.rng_seed = config_.seed;
  for (const auto& [name, p] : models_.named_parameters()) ckpt.tensors.emplace_back(name, p.detach().clone());
  save_adam_state(*g_opt_, *models_.generator, "g.", ckpt);
  save_adam_state(*d_opt_, *models_.discriminator, "d.", ckpt);
  save_adam_state(*der_opt_, *models_.derainer, "der.", ckpt);
  return ckpt;
}

void Trainer::save_checkpoint(const fs::path& path) const { write_checkpoint(checkpoint(), path); }

std::string log_line(int64_t step, int64_t epoch, Phase phase, double lr, const LossReport& report) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["phase"] = to_string(phase);
  j["lr"] = lr;
  j["losses"] = nlohmann::ordered_json::parse(report.to_json());
  return j.dump();
}

TrainResult train(const TrainConfig& config_in, const UnpairedCorpus& corpus_in,
                  const std::optional<fs::path>& resume_from) {
  config_in.validate();
  torch::set_num_threads(config_in.threads);

  UnpairedCorpus corpus = corpus_in;
  corpus.crop = config_in.crop;
  corpus.seed = config_in.seed;
  corpus.hflip = config_in.hflip;
  auto sampler = std::make_shared<const UnpairedSampler>(corpus);

  std::unique_ptr<Trainer> trainer;
  if (resume_from) {
    trainer = std::make_unique<Trainer>(read_checkpoint(*resume_from), sampler);
  } else {
    trainer = std::make_unique<Trainer>(config_in, sampler);
  }
  const auto& config = trainer->config();
  const fs::path out_dir = config_in.output_dir;
  fs::create_directories(out_dir);
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << to_json(config) << '\n';
  }

  std::vector<Phase> phases;
  if (config.training_mode == TrainingMode::kJoint) {
    phases = {Phase::kJoint};
  } else {
    phases = {Phase::kGenerator, Phase::kDerainer};
  }

  TrainResult result;
  for (const Phase phase : phases) {
    if (phase == Phase::kGenerator && trainer->phase() == Phase::kDerainer) continue;  // resumed past it
    if (trainer->phase() != phase) trainer->begin_phase(phase);

    const auto log_path = out_dir / (phases.size() == 1 ? std::string("train_log.jsonl")
                                                        : "train_log_" + to_string(phase) + ".jsonl");
    result.logs.push_back(log_path);
    std::ofstream log(log_path, resume_from ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write training log: " + log_path.string());

    while (trainer->phase_step() < trainer->phase_length()) {
      const auto epoch = trainer->epoch();
      const auto lr = trainer->current_lr();
      result.last_report = trainer->train_step();
      log << log_line(trainer->step(), epoch, phase, lr, result.last_report) << '\n';
      if (trainer->step() % config.checkpoint_every == 0) {
        log.flush();
        trainer->save_checkpoint(out_dir / ("ckpt_" + std::to_string(trainer->step()) + ".csud"));
        trainer->save_checkpoint(out_dir / "latest.csud");
      }
    }
  }
  result.steps = trainer->step();
  result.final_checkpoint = out_dir / "final.csud";
  trainer->save_checkpoint(result.final_checkpoint);
  return result;
}

ModelBundle load_models(const Checkpoint& checkpoint) {
  const auto config = resolve_train_config(checkpoint.config_json);
  auto models = init_models(config.models, config.seed);
  load_parameters(models, checkpoint);
  models.train(false);
  return models;
}

ModelBundle load_models(const fs::path& checkpoint_path) { return load_models(read_checkpoint(checkpoint_path)); }

}  // namespace csud

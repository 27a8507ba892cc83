#include "csud/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/checkpoint.hpp"
#include "csud/config.hpp"
#include "csud/data.hpp"
#include "csud/error.hpp"
#include "csud/eval.hpp"
#include "csud/image.hpp"
#include "csud/losses.hpp"
#include "csud/rain.hpp"
#include "csud/trainer.hpp"

namespace csud::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void echo(std::ostream& out, const std::string& command, const ojson& resolved) {
  ojson j;
  j["command"] = command;
  j["resolved"] = resolved;
  out << "resolved config: " << j.dump() << '\n';
}

// "key=value" with value parsed as a JSON literal, or kept as a string.
void add_override(ojson& overrides, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw Usage("--set expects key=value, got '" + kv + "'");
  const auto key = kv.substr(0, eq);
  const auto text = kv.substr(eq + 1);
  auto parsed = ojson::parse(text, nullptr, false);
  overrides[key] = parsed.is_discarded() ? ojson(text) : parsed;
}

struct TrainArgs {
  std::string config;
  bool desk_scale = false;
  std::string resume;
  std::string output;
  std::string train_dir;
  std::string test_dir;
  int64_t max_steps = -1;
  int threads = 0;
  std::vector<std::string> sets;
};

struct DerainArgs {
  std::string ckpt;
  std::string input;
  std::string output;
};

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::vector<std::string> testsets;
  bool identity = false;
  std::string out;
};

struct CcpArgs {
  std::string clean;
  std::string rainy;
  std::string mode = "paired";
  std::string out;
  std::string chart;
};

struct SynthArgs {
  std::string clean;
  int scenes = 0;
  int size = 96;
  std::string out;
  std::string params;
  int train = 40;
  int test = 8;
};

struct AblateArgs {
  std::string config;
  std::string toggles;
  bool desk_scale = false;
  std::string out;
  std::vector<std::string> sets;
};

TrainConfig resolve(const std::string& config_path, bool desk_scale, const ojson& overrides) {
  ojson o = overrides;
  if (desk_scale) o["desk_scale"] = true;
  return load_train_config(config_path, o.dump());
}

int cmd_train(const TrainArgs& a, std::optional<uint64_t> seed, std::ostream& out) {
  ojson overrides = ojson::object();
  if (seed) overrides["seed"] = *seed;
  if (!a.output.empty()) overrides["output_dir"] = a.output;
  if (!a.train_dir.empty()) overrides["train_dir"] = a.train_dir;
  if (!a.test_dir.empty()) overrides["test_dir"] = a.test_dir;
  if (a.max_steps >= 0) overrides["max_steps"] = a.max_steps;
  if (a.threads > 0) overrides["threads"] = a.threads;
  for (const auto& kv : a.sets) add_override(overrides, kv);

  std::optional<fs::path> resume;
  TrainConfig config;
  if (!a.resume.empty()) {
    resume = a.resume;
    // The checkpoint's own config wins; only the output location may move.
    config = resolve_train_config(read_checkpoint(*resume).config_json,
                                  a.output.empty() ? "" : ojson{{"output_dir", a.output}}.dump());
  } else {
    config = resolve(a.config, a.desk_scale, overrides);
  }
  echo(out, "train", ojson::parse(to_json(config)));
  if (config.train_dir.empty()) throw ConfigError("train: train_dir is not set");

  const auto corpus = UnpairedCorpus::from_root(config.train_dir, config.crop, config.seed);
  const auto result = train(config, corpus, resume);
  out << "trained " << result.steps << " steps; final checkpoint " << result.final_checkpoint.string() << '\n';
  out << "last losses: " << result.last_report.to_json() << '\n';

  if (!config.test_dir.empty()) {
    const auto testset = load_paired_testset(config.test_dir);
    const auto report = evaluate_checkpoint(result.final_checkpoint, testset);
    const auto baseline = evaluate(identity_derainer(), testset, "identity");
    write_report(report, fs::path(config.output_dir) / "eval.json");
    write_report(baseline, fs::path(config.output_dir) / "eval_identity.json");
    out << "held-out PSNR " << report.mean_psnr_db << " dB (identity " << baseline.mean_psnr_db << " dB), SSIM "
        << report.mean_ssim << " (identity " << baseline.mean_ssim << ")\n";
  }
  return kExitOk;
}

int cmd_derain(const DerainArgs& a, std::ostream& out) {
  echo(out, "derain", {{"ckpt", a.ckpt}, {"input", a.input}, {"output", a.output}});
  auto models = load_models(fs::path(a.ckpt));
  models.derainer->eval();
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.input)) {
    inputs = list_images(a.input);
  } else {
    inputs = {a.input};
  }
  fs::create_directories(a.output);
  torch::NoGradGuard no_grad;
  for (const auto& p : inputs) {
    const auto img = load_image(p);
    const auto restored = models.derainer->forward(img.tensor()).clamp(0.0, 1.0);
    save_image(ImageTensor(restored), fs::path(a.output) / p.filename());
  }
  out << "derained " << inputs.size() << " image(s) into " << a.output << '\n';
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  echo(out, "eval", {{"ckpt", a.ckpts}, {"testset", a.testsets}, {"identity", a.identity}, {"out", a.out}});
  if (a.identity || a.ckpts.size() == 1) {
    if (a.testsets.size() != 1) throw Usage("eval: a single checkpoint takes exactly one --testset");
    const auto testset = load_paired_testset(a.testsets.front());
    const auto report = a.identity ? evaluate(identity_derainer(), testset, "identity")
                                   : evaluate_checkpoint(a.ckpts.front(), testset);
    write_report(report, a.out);
    out << "mean PSNR " << report.mean_psnr_db << " dB, mean SSIM " << report.mean_ssim << '\n';
    return kExitOk;
  }
  if (a.ckpts.empty()) throw Usage("eval: give --ckpt or --identity");
  std::vector<fs::path> ckpts(a.ckpts.begin(), a.ckpts.end());
  std::vector<fs::path> sets(a.testsets.begin(), a.testsets.end());
  const auto matrix = generalization_matrix(ckpts, sets);
  write_file(a.out, matrix.to_json() + "\n");
  auto csv = fs::path(a.out);
  csv.replace_extension(".csv");
  write_file(csv, matrix.to_csv());
  out << matrix.to_csv();
  return kExitOk;
}

int cmd_ccp(const CcpArgs& a, std::ostream& out) {
  echo(out, "ccp", {{"clean", a.clean}, {"rainy", a.rainy}, {"mode", a.mode}, {"out", a.out}, {"chart", a.chart}});
  const auto report = ccp_report(fs::path(a.clean), fs::path(a.rainy), ccp_mode_from_string(a.mode));
  write_file(a.out, report.to_json() + "\n");
  if (!a.chart.empty()) write_ccp_chart(report, a.chart);
  out << "mean cosine similarity rg=" << report.mean_rg << " gb=" << report.mean_gb << " br=" << report.mean_br
      << '\n';
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::optional<uint64_t> seed, std::ostream& out) {
  if (a.clean.empty() == (a.scenes == 0)) throw Usage("synth: give exactly one of --clean or --scenes");
  RainParams params = a.params.empty() ? RainParams{} : load_rain_params(a.params);
  if (seed) params.seed = *seed;
  DatasetSplit split{a.train, a.test};
  echo(out, "synth",
       {{"clean", a.clean},
        {"scenes", a.scenes},
        {"size", a.size},
        {"out", a.out},
        {"params", ojson::parse(to_json(params))},
        {"train", a.train},
        {"test", a.test}});
  fs::path clean_dir = a.clean;
  if (a.scenes > 0) {
    clean_dir = fs::path(a.out) / "scenes";
    write_clean_scenes(clean_dir, a.scenes, a.size, a.size, derive_seed(params.seed, 0x5ce7e5ULL));
  }
  const auto manifest = make_desk_dataset(clean_dir, a.out, params, split);
  out << "wrote " << manifest.files.size() << " files into " << a.out << '\n';
  return kExitOk;
}

int cmd_ablate(const AblateArgs& a, std::optional<uint64_t> seed, std::ostream& out) {
  ojson overrides = ojson::object();
  if (seed) overrides["seed"] = *seed;
  for (const auto& kv : a.sets) add_override(overrides, kv);
  const auto base = resolve(a.config, a.desk_scale, overrides);
  const auto toggles = parse_toggles(a.toggles);
  echo(out, "ablate", {{"base", ojson::parse(to_json(base))}, {"toggles", a.toggles}});
  const auto table = ablation_run(base, toggles);
  const fs::path report = a.out.empty() ? fs::path(base.output_dir) / "ablation.json" : fs::path(a.out);
  write_file(report, table.to_json() + "\n");
  auto csv = report;
  csv.replace_extension(".csv");
  write_file(csv, table.to_csv());
  out << table.to_csv();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised single-image deraining: synthesis, training, inference and evaluation", "csud"};
  app.require_subcommand(1);
  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "Seed for every stochastic step (overrides config files)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train generator, discriminator and derainer");
  train_cmd->add_option("--config", train_args.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_flag("--desk-scale", train_args.desk_scale, "Apply the CPU desk-scale profile");
  train_cmd->add_option("--resume", train_args.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--output", train_args.output, "Output directory");
  train_cmd->add_option("--train-dir", train_args.train_dir, "Unpaired corpus root (clean/ and rainy/)");
  train_cmd->add_option("--test-dir", train_args.test_dir, "Paired held-out set (rainy/ and gt/)");
  train_cmd->add_option("--max-steps", train_args.max_steps, "Stop each phase after this many updates");
  train_cmd->add_option("--threads", train_args.threads, "Intra-op threads");
  train_cmd->add_option("--set", train_args.sets, "Override any config key: key=value");

  DerainArgs derain_args;
  auto* derain_cmd = app.add_subcommand("derain", "Run a trained derainer on images");
  derain_cmd->add_option("--ckpt", derain_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  derain_cmd->add_option("--input", derain_args.input, "Image file or directory")->required()->check(CLI::ExistingPath);
  derain_cmd->add_option("--output", derain_args.output, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM on paired test sets");
  eval_cmd->add_option("--ckpt", eval_args.ckpts, "Checkpoint(s); several form a generalization matrix");
  eval_cmd->add_option("--testset", eval_args.testsets, "Test set dir(s) with rainy/ and gt/")->required();
  eval_cmd->add_flag("--identity", eval_args.identity, "Score the rainy input itself (baseline)");
  eval_cmd->add_option("--out", eval_args.out, "Report JSON (CSV written alongside)")->required();

  CcpArgs ccp_args;
  auto* ccp_cmd = app.add_subcommand("ccp", "Channel-consistency statistics of clean vs rainy residuals");
  ccp_cmd->add_option("--clean", ccp_args.clean, "Clean image dir")->required()->check(CLI::ExistingDirectory);
  ccp_cmd->add_option("--rainy", ccp_args.rainy, "Rainy image dir")->required()->check(CLI::ExistingDirectory);
  ccp_cmd->add_option("--mode", ccp_args.mode, "paired or corpus")->check(CLI::IsMember({"paired", "corpus"}));
  ccp_cmd->add_option("--out", ccp_args.out, "Report JSON")->required();
  ccp_cmd->add_option("--chart", ccp_args.chart, "Optional PNG bar chart");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Build the desk corpus from clean images");
  synth_cmd->add_option("--clean", synth_args.clean, "Clean source dir")->check(CLI::ExistingDirectory);
  synth_cmd->add_option("--scenes", synth_args.scenes, "Generate this many procedural clean scenes instead");
  synth_cmd->add_option("--size", synth_args.size, "Procedural scene side length");
  synth_cmd->add_option("--out", synth_args.out, "Output root")->required();
  synth_cmd->add_option("--params", synth_args.params, "Rain parameter JSON")->check(CLI::ExistingFile);
  synth_cmd->add_option("--train", synth_args.train, "Unpaired train images (even)");
  synth_cmd->add_option("--test", synth_args.test, "Held-out pairs");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare a grid of variants");
  ablate_cmd->add_option("--config", ablate_args.config, "Base config JSON")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--toggles", ablate_args.toggles, "e.g. cc=on|off,sr=on|off,gans=1|4");
  ablate_cmd->add_flag("--desk-scale", ablate_args.desk_scale, "Apply the CPU desk-scale profile");
  ablate_cmd->add_option("--out", ablate_args.out, "Table JSON (CSV alongside)");
  ablate_cmd->add_option("--set", ablate_args.sets, "Override any base config key: key=value");

  std::vector<std::string> argv_storage{"csud"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, seed, out);
    if (*derain_cmd) return cmd_derain(derain_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*ccp_cmd) return cmd_ccp(ccp_args, out);
    if (*synth_cmd) return cmd_synth(synth_args, seed, out);
    if (*ablate_cmd) return cmd_ablate(ablate_args, seed, out);
  } catch (const Usage& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\nlosses: " << e.report().to_json() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace csud::cli

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/cli.hpp"
#include "csud/data.hpp"
#include "csud/rain.hpp"
#include "support/fixtures.hpp"

namespace {

using csud::testing::TempDir;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = csud::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, NoSubcommandIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, csud::cli::kExitUsage);
  EXPECT_NE(r.err.find("train"), std::string::npos);
}

TEST(Cli, TrainWithoutConfigPrintsSynopsis) {
  const auto r = run({"train"});
  EXPECT_EQ(r.code, csud::cli::kExitUsage);
  EXPECT_NE(r.err.find("--config"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagRejected) {
  TempDir dir("cli");
  const auto r = run({"ccp", "--clean", dir.path().string(), "--rainy", dir.path().string(), "--out", "x.json",
                      "--bogus"});
  EXPECT_EQ(r.code, csud::cli::kExitUsage);
}

TEST(Cli, CcpOnIdenticalDirectories) {
  TempDir dir("cli");
  csud::write_clean_scenes(dir / "imgs", 3, 24, 24, 2);
  const auto r = run({"ccp", "--clean", (dir / "imgs").string(), "--rainy", (dir / "imgs").string(), "--out",
                      (dir / "ccp.json").string(), "--chart", (dir / "ccp.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resolved config"), std::string::npos);
  std::ifstream in(dir / "ccp.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_NEAR(j["mean"]["rg"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(j["mean"]["br"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(j["images"].size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(dir / "ccp.png"));
}

TEST(Cli, SynthTrainDerainEvalPipeline) {
  TempDir dir("cli");
  const auto data = dir / "data";
  auto r = run({"--seed", "4", "synth", "--scenes", "8", "--size", "40", "--out", data.string(), "--train", "6",
                "--test", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csud::list_images(data / "train/rainy").size(), 3u);

  const auto cfg = dir / "cfg.json";
  const auto tiny = csud::testing::tiny_config();
  std::ofstream(cfg) << csud::to_json(tiny);
  r = run({"train", "--config", cfg.string(), "--train-dir", (data / "train").string(), "--test-dir",
           (data / "test").string(), "--output", (dir / "run").string(), "--max-steps", "2", "--set",
           "num_gan_constraints=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"num_gan_constraints\":2"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/final.csud"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/eval.json"));

  r = run({"derain", "--ckpt", (dir / "run/final.csud").string(), "--input", (data / "test/rainy").string(),
           "--output", (dir / "derained").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto inputs = csud::list_images(data / "test/rainy");
  const auto outputs = csud::list_images(dir / "derained");
  ASSERT_EQ(inputs.size(), outputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(inputs[i].filename(), outputs[i].filename());

  r = run({"eval", "--ckpt", (dir / "run/final.csud").string(), "--testset", (data / "test").string(), "--out",
           (dir / "eval.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "eval.csv"));

  r = run({"train", "--resume", (dir / "run/final.csud").string(), "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, RuntimeErrorsExitTwo) {
  TempDir dir("cli");
  std::filesystem::create_directories(dir / "empty");
  const auto r = run({"eval", "--identity", "--testset", (dir / "empty").string(), "--out",
                      (dir / "r.json").string()});
  EXPECT_EQ(r.code, csud::cli::kExitRuntime);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, BadConfigKeyIsRuntimeError) {
  TempDir dir("cli");
  std::ofstream(dir / "cfg.json") << R"({"not_a_key": 1})";
  const auto r = run({"train", "--config", (dir / "cfg.json").string()});
  EXPECT_EQ(r.code, csud::cli::kExitRuntime);
  EXPECT_NE(r.err.find("not_a_key"), std::string::npos);
}

}  // namespace

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "gramtex/generator.hpp"
#include "gramtex/imaging.hpp"
#include "support/oracles.hpp"

using namespace gramtex;
using namespace gramtex::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return std::size_t(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch_dir("cli"));
    FeatureExtractor::random(vgg19_spec(8), 1).save(*dir_ / "vgg.twf1");
    write_image(*dir_ / "a.png", ImageBuffer::from_tensor(textured_image(64, 64, 2)));
    write_image(*dir_ / "b.png", ImageBuffer::from_tensor(textured_image(64, 64, 3)));
    write_image(*dir_ / "s.png", ImageBuffer::from_tensor(textured_image(32, 32, 4)));
  }
  static void TearDownTestSuite() { delete dir_; }

  fs::path dir() const { return *dir_; }
  std::string path(const std::string& name) const { return (*dir_ / name).string(); }
  std::string weights() const { return path("vgg.twf1"); }

  static fs::path* dir_;
};

fs::path* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({"transfer", "--help"}).code, cli::kExitOk);
  const auto none = run_cli({});
  EXPECT_EQ(none.code, cli::kExitUsage);
  const auto bad = run_cli({"metric", path("a.png"), path("a.png"), "--bogus"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_NE(bad.err.find("error"), std::string::npos);
  EXPECT_NE(bad.err.find("--layers"), std::string::npos);  // subcommand help follows
  EXPECT_EQ(run_cli({"transfer", "--style", path("s.png")}).code, cli::kExitUsage);
}

TEST_F(Cli, MetricOfIdenticalImagesIsZero) {
  const auto r = run_cli({"metric", path("a.png"), path("a.png"), "-w", weights()});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(std::stod(r.out), 0.0);
  const auto d = run_cli({"metric", path("a.png"), path("b.png"), "-w", weights(), "--json", path("m.json")});
  EXPECT_EQ(d.code, cli::kExitOk) << d.err;
  EXPECT_GT(std::stod(d.out), 0.0);
  EXPECT_TRUE(fs::exists(dir() / "m.json"));
  EXPECT_TRUE(fs::exists(cli::manifest_path_for(path("m.json"))));
}

TEST_F(Cli, MissingInputsAreDataErrors) {
  const auto r = run_cli({"eval-2afc", path("missing.jsonl")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("missing.jsonl"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"metric", path("a.png"), path("nope.png"), "-w", weights()}).code, cli::kExitData);
  EXPECT_EQ(run_cli({"metric", path("a.png"), path("a.png"), "-w", path("nope.twf1")}).code, cli::kExitData);
}

TEST_F(Cli, TransferWritesImageTraceAndRunManifest) {
  const auto r = run_cli({"transfer", "-w", weights(), "--style", path("s.png"), "--init-mode", "bicubic-up:4",
                          "--steps", "3", "-o", path("t.png")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const ImageBuffer img = read_image(dir() / "t.png");
  EXPECT_EQ(img.width, 32u);
  EXPECT_EQ(lines(dir() / "t.csv"), 4u);
  const auto m = nlohmann::json::parse(slurp(dir() / "t.png.run.json"));
  EXPECT_EQ(m["subcommand"], "transfer");
  EXPECT_EQ(m["config"]["steps"], "3");
  EXPECT_EQ(m["config"]["init-mode"], "bicubic-up:4");
}

TEST_F(Cli, TransferIsDeterministic) {
  for (const char* name : {"d1.png", "d2.png"}) {
    ASSERT_EQ(run_cli({"transfer", "-w", weights(), "--style", path("s.png"), "--init-mode", "white", "--steps", "2",
                       "-o", path(name)})
                  .code,
              cli::kExitOk);
  }
  EXPECT_EQ(slurp(dir() / "d1.png"), slurp(dir() / "d2.png"));
  EXPECT_EQ(slurp(dir() / "d1.csv"), slurp(dir() / "d2.csv"));
}

TEST_F(Cli, ConfigFileFillsUnsetOptions) {
  std::ofstream(dir() / "cfg.json") << R"({"steps": 2, "init-mode": "white", "no-clamp": true})";
  ASSERT_EQ(run_cli({"transfer", "-w", weights(), "--style", path("s.png"), "--config", path("cfg.json"), "-o",
                     path("c1.png")})
                .code,
            cli::kExitOk);
  EXPECT_EQ(lines(dir() / "c1.csv"), 3u);
  ASSERT_EQ(run_cli({"transfer", "-w", weights(), "--style", path("s.png"), "--config", path("cfg.json"), "--steps",
                     "4", "-o", path("c2.png")})
                .code,
            cli::kExitOk);
  EXPECT_EQ(lines(dir() / "c2.csv"), 5u);  // explicit flag wins
  const auto m = nlohmann::json::parse(slurp(dir() / "c2.png.run.json"));
  EXPECT_EQ(m["config"]["init-mode"], "white");

  std::ofstream(dir() / "broken.json") << "{steps";
  EXPECT_NE(run_cli({"transfer", "--style", path("s.png"), "--config", path("broken.json"), "-o", path("x.png")}).code,
            cli::kExitOk);
}

TEST_F(Cli, GramDump) {
  const auto r = run_cli({"gram-dump", path("a.png"), "-w", weights(), "--layer", "conv2_1", "-o", path("g.csv")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::size_t c = vgg19_spec(8).layers[vgg19_spec(8).index_of("conv2_1")].out_channels;
  EXPECT_EQ(lines(dir() / "g.csv"), c);
  EXPECT_EQ(run_cli({"gram-dump", path("a.png"), "-w", weights(), "--layer", "pool1", "-o", path("p.csv")}).code,
            cli::kExitData);
}

TEST_F(Cli, TrainThenInfer) {
  fs::create_directories(dir() / "train");
  for (int k = 0; k < 2; ++k)
    write_image(dir() / "train" / ("t" + std::to_string(k) + ".png"),
                ImageBuffer::from_tensor(textured_image(48, 48, 10 + k)));
  const auto t = run_cli({"sr-train", "--images", path("train"), "--blocks", "1", "--width", "8", "--mse-steps", "2",
                          "--texture-steps", "1", "--batch", "2", "--patch", "32", "-w", weights(), "-o",
                          path("g.twf1")});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_EQ(lines(dir() / "g.csv"), 4u);
  EXPECT_EQ(Generator::load(dir() / "g.twf1").config().width, 8u);

  const auto i = run_cli({"sr-infer", "--checkpoint", path("g.twf1"), "--input", path("s.png"), "-o", path("up.png")});
  ASSERT_EQ(i.code, cli::kExitOk) << i.err;
  EXPECT_EQ(read_image(dir() / "up.png").width, 128u);

  const auto no_weights = run_cli({"sr-train", "--images", path("train"), "--texture-steps", "1", "-o", path("h.twf1")});
  EXPECT_EQ(no_weights.code, cli::kExitData);
  EXPECT_NE(no_weights.err.find("--weights"), std::string::npos) << no_weights.err;
}

TEST(RunManifest, PathAndContents) {
  EXPECT_EQ(cli::manifest_path_for("out/x.png"), fs::path("out/x.png.run.json"));
  const auto dir = scratch_dir("cli_manifest");
  cli::RunManifest m;
  m.subcommand = "metric";
  m.config["layers"] = "conv2_2";
  m.seed = 7;
  m.inputs = {"a.png"};
  m.outputs = {"b.json"};
  m.version = "0.1.0";
  m.write(dir / "r.json");
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["config"]["layers"], "conv2_2");
  EXPECT_EQ(j["inputs"][0], "a.png");
}

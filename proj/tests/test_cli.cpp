#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uodkit/io/annotations.hpp"
#include "uodkit/toydet/train.hpp"

using namespace uodkit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / ("uodkit_cli_test_" + std::to_string(::getpid()));

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const fs::path out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + UODKIT_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  static void TearDownTestSuite() { fs::remove_all(kWork); }
  std::string p(const std::string& name) const { return "\"" + (kWork / name).string() + "\""; }
};

}  // namespace

TEST_F(Cli, HelpListsAllSubcommands) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"enhance", "gradcheck", "losscheck", "synth", "train", "eval", "ablate"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  auto r = run("losscheck --bogus");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth --n 3").code, 2);
  EXPECT_EQ(run("enhance " + p("missing.png") + " " + p("o.png")).code, 2);
}

TEST_F(Cli, LosscheckPasses) {
  const auto r = run("losscheck");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("losscheck: PASS"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, GradcheckPassesAndNamesCorruptedOp) {
  const auto ok = run("gradcheck --seed 0");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const auto bad = run("gradcheck --seed 0 --corrupt spatial_attention.conv.weight");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL spatial_attention.conv.weight"), std::string::npos) << bad.out;
  EXPECT_EQ(run("gradcheck --tol -1").code, 2);
}

TEST_F(Cli, EnhanceMatchesLibraryAndDumpsStages) {
  const auto items = toydet::make_dataset(1, 11, true);
  write_image(kWork / "in.png", items[0].image);
  const auto r = run("enhance " + p("in.png") + " " + p("out.png") + " --dump-stages " + p("stages"));
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageF32 expected = quantize8(enhance_pipeline(read_image(kWork / "in.png"), EnhanceConfig{}));
  EXPECT_EQ(read_image(kWork / "out.png").pixels, expected.pixels);
  for (const char* s : {"1_color.png", "2_clahe.png", "3_dehaze.png", "4_refine.png"})
    EXPECT_TRUE(fs::exists(kWork / "stages" / s)) << s;
  EXPECT_EQ(read_image(kWork / "stages" / "4_refine.png").pixels, expected.pixels);
  const json m = json::parse(slurp(kWork / "out.manifest.json"));
  EXPECT_EQ(m.at("command"), "enhance");
  EXPECT_DOUBLE_EQ(m.at("config").at("clahe_clip").get<double>(), 2.0);
}

TEST_F(Cli, EnhanceConfigOverride) {
  write_image(kWork / "in2.png", toydet::make_dataset(1, 12, true)[0].image);
  std::ofstream(kWork / "cfg.json") << R"({"clahe_clip": 4.0, "sharpen_beta": 0.0})";
  ASSERT_EQ(run("enhance " + p("in2.png") + " " + p("o2.png") + " --config " + p("cfg.json")).code, 0);
  EnhanceConfig cfg;
  cfg.clahe_clip = 4.0f;
  cfg.sharpen_beta = 0.0f;
  EXPECT_EQ(read_image(kWork / "o2.png").pixels, quantize8(enhance_pipeline(read_image(kWork / "in2.png"), cfg)).pixels);
  std::ofstream(kWork / "bad.json") << R"({"clahe_clipp": 4.0})";
  const auto r = run("enhance " + p("in2.png") + " " + p("o3.png") + " --config " + p("bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("clahe_clipp"), std::string::npos);
}

TEST_F(Cli, SynthWritesDatasetAndManifest) {
  ASSERT_EQ(run("synth --n 5 --seed 9 --degrade --out " + p("syn")).code, 0);
  const auto back = read_dataset(kWork / "syn");
  const auto expected = toydet::make_dataset(5, 9, true);
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back[i].stem, expected[i].stem);
    EXPECT_EQ(back[i].image.pixels, expected[i].image.pixels);
    ASSERT_EQ(back[i].objects.size(), expected[i].objects.size());
  }
  const json m = json::parse(slurp(kWork / "syn" / "manifest.json"));
  EXPECT_EQ(m.at("seeds").at("data").get<int>(), 9);
  EXPECT_FALSE(m.at("version").get<std::string>().empty());
  EXPECT_FALSE(m.at("started").get<std::string>().empty());
  EXPECT_FALSE(m.at("finished").get<std::string>().empty());
}

TEST_F(Cli, TrainEvalAgreeAndManifestReplaysBitExactly) {
  ASSERT_EQ(run("synth --n 40 --seed 4 --degrade --out " + p("tdata")).code, 0);
  const auto r = run("train --data " + p("tdata") + " --dpsa --fgiou --epochs 2 --seed 4 --out " + p("run1"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"params.bin", "log.jsonl", "preds.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(kWork / "run1" / f)) << f;
  const auto log = read_jsonl(kWork / "run1" / "log.jsonl");
  ASSERT_EQ(log.size(), 2u);

  const auto e = run("eval --pred " + p("run1/preds.jsonl") + " --gt " + p("run1/val"));
  ASSERT_EQ(e.code, 0) << e.err;
  const json ev = json::parse(e.out);
  EXPECT_NEAR(ev.at("map50").get<double>(), log.back().at("map50").get<double>(), 1e-9);
  EXPECT_NEAR(ev.at("map50_95").get<double>(), log.back().at("map50_95").get<double>(), 1e-9);
  for (const char* k : {"precision", "recall", "f1"}) EXPECT_TRUE(ev.contains(k)) << k;

  // Replay the recorded argv into a second run directory.
  const json m = json::parse(slurp(kWork / "run1" / "manifest.json"));
  EXPECT_EQ(m.at("seeds").at("train").get<int>(), 4);
  EXPECT_TRUE(m.at("config").at("use_dpsa").get<bool>());
  std::string args;
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  for (std::size_t i = 1; i < argv.size(); ++i) {
    std::string a = argv[i];
    if (i > 1 && argv[i - 1] == "--out") a = (kWork / "run2").string();
    args += " \"" + a + "\"";
  }
  ASSERT_EQ(run(args).code, 0);
  for (const char* f : {"params.bin", "log.jsonl", "preds.jsonl"})
    EXPECT_EQ(slurp(kWork / "run1" / f), slurp(kWork / "run2" / f)) << f;
}

TEST_F(Cli, TrainConfigFileAndFlagPrecedence) {
  ASSERT_EQ(run("synth --n 20 --seed 5 --out " + p("cdata")).code, 0);
  std::ofstream(kWork / "train.json") << R"({"epochs": 3, "optimizer": "sgd", "loss_weights": {"box": 5.0}})";
  ASSERT_EQ(run("train --data " + p("cdata") + " --config " + p("train.json") + " --epochs 1 --out " + p("crun")).code, 0);
  EXPECT_EQ(read_jsonl(kWork / "crun" / "log.jsonl").size(), 1u);
  const json m = json::parse(slurp(kWork / "crun" / "manifest.json"));
  EXPECT_EQ(m.at("config").at("optimizer"), "sgd");
  EXPECT_DOUBLE_EQ(m.at("config").at("loss_weights").at("box").get<double>(), 5.0);
  EXPECT_FALSE(m.at("config").at("use_dpsa").get<bool>());
  std::ofstream(kWork / "bad_train.json") << R"({"optimizer": "adam"})";
  EXPECT_EQ(run("train --data " + p("cdata") + " --config " + p("bad_train.json") + " --out " + p("crun2")).code, 2);
}

TEST_F(Cli, EvalRejectsUnknownImage) {
  ASSERT_EQ(run("synth --n 2 --seed 6 --out " + p("edata")).code, 0);
  std::ofstream(kWork / "p.jsonl") << R"({"image_id":"zzz","class_id":0,"score":0.5,"box":[0,0,4,4]})" << '\n';
  const auto r = run("eval --pred " + p("p.jsonl") + " --gt " + p("edata"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("zzz"), std::string::npos);
}

TEST_F(Cli, AblateWritesFourRowTable) {
  ASSERT_EQ(run("synth --n 20 --seed 7 --out " + p("adata")).code, 0);
  const auto r = run("ablate --data " + p("adata") + " --epochs 1 --seed 7 --out " + p("table.md"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string md = slurp(kWork / "table.md");
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 6);
  EXPECT_NE(md.find("| synthetic | toynet | Yes | Yes |"), std::string::npos);
  EXPECT_TRUE(fs::exists(kWork / "table.manifest.json"));
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "erfseg/cli/commands.hpp"
#include "erfseg/cli/images.hpp"
#include "erfseg/cli/manifest.hpp"
#include "erfseg/cli/run_config.hpp"
#include "erfseg/error.hpp"
#include "erfseg/tsr_io.hpp"

using namespace erfseg;
using namespace erfseg::cli;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "erfseg");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("erfseg_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

// Small and quick: 16 x 16 images, one blob, tiny unet.
constexpr const char* kSmallConfig = R"([model]
variant = "unet"
base_channels = 4
stages = 2
[train]
epochs = 2
batch = 4
lr = 1e-3
[data]
height = 16
width = 16
fg_budget = 0.1
max_blobs = 1
n_train = 6
n_val = 2
n_test = 3
)";

}  // namespace

// ---------------------------------------------------------------- config

TEST(RunConfigTest, DefaultsDescribeTheDeskSchedule) {
  const auto c = parse_run_config("");
  EXPECT_EQ(c.model.variant, Variant::Unet);
  EXPECT_EQ(c.model.base_channels, 32u);
  EXPECT_EQ(c.train.epochs, 40u);
  EXPECT_EQ(c.train.batch_size, 8u);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.data.kind, DataKind::Synthetic);
  EXPECT_EQ(c.data.synthetic.total(), 200u);
  EXPECT_EQ(c.precision, Precision::F32);
}

TEST(RunConfigTest, SectionsAndOverridesApply) {
  const auto c = parse_run_config("[model]\nvariant = \"fpa\"\ndilation = 12\n[train]\npreset = \"isles\"\nepochs = 3\n",
                                  {{"model.depthwise", "true"}, {"model.expansion", "4"}, {"train.lr", "5e-4"}});
  ASSERT_TRUE(c.model.fpa.has_value());
  EXPECT_EQ(c.model.fpa->dilation, 12u);
  EXPECT_TRUE(c.model.fpa->depthwise);
  EXPECT_EQ(c.model.fpa->expansion, 4u);
  EXPECT_EQ(c.train.batch_size, 80u);  // from the preset
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.learning_rate, 5e-4);
  const auto r = parse_run_config("", {{"model.variant", "rfna"}, {"model.ratio", "4"}});
  EXPECT_EQ(r.model.rfna->ratio, 4u);
}

TEST(RunConfigTest, RejectsUnknownKeysTypesAndContradictions) {
  EXPECT_THROW(parse_run_config("[model]\nvarient = \"unet\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[optim]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nepochs = \"many\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nbatch = -1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nvariant = \"unet\"\nratio = 4\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nvariant = \"d6unet\"\ndilation = 9\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nvariant = \"rfna\"\nratio = 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[data]\nkind = \"pngs\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("precision = \"f16\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model\n"), ConfigError);
  EXPECT_NO_THROW(parse_run_config("[model]\nvariant = \"d9unet\"\ndilation = 9\n"));
}

TEST(RunConfigTest, CanonicalTextRoundTrips) {
  const auto c = parse_run_config(
      "precision = \"f64\"\n[model]\nvariant = \"rfna\"\nratio = 2\nexpansion = 2\n[train]\nlr = 3e-4\nhflip = 0.25\n"
      "[data]\nnoise_sigma = 0.35\nseed = 9\n");
  const auto text = c.to_toml();
  const auto back = parse_run_config(text);
  EXPECT_EQ(back.to_toml(), text);
  EXPECT_EQ(back.precision, Precision::F64);
  EXPECT_EQ(back.model.rfna->expansion, 2u);
  EXPECT_EQ(back.train.learning_rate, 3e-4);
  EXPECT_EQ(back.train.augment_hflip_prob, 0.25);
  EXPECT_EQ(back.data.synthetic.noise_sigma, 0.35);
  EXPECT_EQ(back.data.synthetic.seed, 9u);
}

// ---------------------------------------------------------------- images

TEST(Images, HeatmapMaximumLandsOnGridMaximum) {
  const auto dir = scratch("pgm");
  Tensor<double> grid(Shape{5, 7});
  for (std::size_t i = 0; i < grid.numel(); ++i) grid[i] = std::sin(static_cast<double>(i)) + 1.0;
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < grid.numel(); ++i) {
    if (grid[i] > grid[argmax]) argmax = i;
  }
  write_pgm16(dir / "g.pgm", grid);
  const std::string bytes = read_file(dir / "g.pgm");
  const std::string header = "P5\n7 5\n65535\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  ASSERT_EQ(bytes.size(), header.size() + 2 * 35);
  auto sample = [&](std::size_t i) {
    return (static_cast<unsigned>(static_cast<unsigned char>(bytes[header.size() + 2 * i])) << 8) |
           static_cast<unsigned char>(bytes[header.size() + 2 * i + 1]);
  };
  EXPECT_EQ(sample(argmax), 65535u);
  for (std::size_t i = 0; i < 35; ++i) {
    if (i != argmax) {
      EXPECT_LT(sample(i), 65535u);
    }
  }
}

TEST(Images, DifferenceMapLegend) {
  BinaryMask pred(1, 4), gt(1, 4);
  pred.set(0, 0, true), gt.set(0, 0, true);  // TP
  gt.set(0, 1, true);                          // FN
  pred.set(0, 2, true);                        // FP
  const auto px = difference_map(pred, gt);
  EXPECT_EQ(px[0], kTruePositive);
  EXPECT_EQ(px[1], kFalseNegative);
  EXPECT_EQ(px[1], (Rgb{0, 0, 255}));
  EXPECT_EQ(px[2], kFalsePositive);
  EXPECT_EQ(px[3], kTrueNegative);
  EXPECT_THROW(difference_map(pred, BinaryMask(2, 2)), ShapeError);
}

// ---------------------------------------------------------------- manifest

TEST(Manifest, VerifyDetectsMissingAndModifiedFiles) {
  const auto dir = scratch("manifest");
  RunManifest m;
  m.command = "test";
  m.artifacts = {{"a.txt", {}, {}}, {"sub/b.txt", {}, {}}};
  ManifestWriter w(dir, m);
  EXPECT_EQ(read_manifest(dir).status, "running");
  EXPECT_FALSE(verify_manifest(dir).empty());
  write_file(dir / "a.txt", "alpha");
  EXPECT_THROW(w.finish(), IoError);
  fs::create_directories(dir / "sub");
  write_file(dir / "sub/b.txt", "beta");
  w.finish();
  EXPECT_TRUE(verify_manifest(dir).empty());
  EXPECT_EQ(read_manifest(dir).artifacts[0].fnv1a, hash_file(dir / "a.txt"));
  write_file(dir / "a.txt", "alphA");
  ASSERT_EQ(verify_manifest(dir).size(), 1u);
  EXPECT_NE(verify_manifest(dir)[0].find("content changed"), std::string::npos);
  fs::remove(dir / "sub/b.txt");
  EXPECT_EQ(verify_manifest(dir).size(), 2u);
}

TEST(Manifest, HashIsFnv1aOfFileBytes) {
  const auto dir = scratch("hash");
  write_file(dir / "empty", "");
  write_file(dir / "a", "a");
  EXPECT_EQ(hash_file(dir / "empty"), "cbf29ce484222325");
  EXPECT_EQ(hash_file(dir / "a"), "af63dc4c8601ec8c");
}

// ---------------------------------------------------------------- commands

TEST(Commands, SynthIsReproducibleAndFollowsSplitRatios) {
  const auto dir = scratch("synth");
  write_file(dir / "cfg.toml", "[data]\nn_train = 14\nn_val = 2\nn_test = 4\nheight = 32\nwidth = 32\nfg_budget = 0.1\n");
  const auto a = run_cli({"--seed", "7", "synth", "--config", (dir / "cfg.toml").string(), "--out", (dir / "a").string()});
  const auto b = run_cli({"--seed", "7", "synth", "--config", (dir / "cfg.toml").string(), "--out", (dir / "b").string()});
  ASSERT_EQ(a.code, kOk) << a.err;
  ASSERT_EQ(b.code, kOk) << b.err;
  const auto ma = read_manifest(dir / "a"), mb = read_manifest(dir / "b");
  ASSERT_EQ(ma.artifacts.size(), 1u + 2u * 20u);
  for (std::size_t i = 0; i < ma.artifacts.size(); ++i) EXPECT_EQ(ma.artifacts[i].fnv1a, mb.artifacts[i].fnv1a);
  const std::string index = read_file(dir / "a" / "index.csv");
  EXPECT_EQ(count_lines(index), 21u);
  auto count = [&](const std::string& split) {
    std::size_t n = 0;
    for (std::size_t p = 0; (p = index.find("," + split + "\n", p)) != std::string::npos; ++p) ++n;
    return n;
  };
  EXPECT_EQ(count("train"), 14u);
  EXPECT_EQ(count("val"), 2u);
  EXPECT_EQ(count("test"), 4u);
  EXPECT_EQ(run_cli({"verify", (dir / "a").string()}).code, kOk);
  // A different seed changes the data; a non-empty output dir is refused.
  EXPECT_EQ(run_cli({"--seed", "8", "synth", "--config", (dir / "cfg.toml").string(), "--out", (dir / "c").string()}).code,
            kOk);
  EXPECT_NE(read_manifest(dir / "c").artifacts[1].fnv1a, ma.artifacts[1].fnv1a);
  EXPECT_EQ(run_cli({"synth", "--out", (dir / "a").string()}).code, kConfigError);
}

TEST(Commands, TrainResumeEvalAndVerify) {
  const auto dir = scratch("train");
  write_file(dir / "cfg.toml", kSmallConfig);
  const std::string cfg = (dir / "cfg.toml").string(), data = (dir / "data").string(), run_dir = (dir / "run").string();
  ASSERT_EQ(run_cli({"synth", "--config", cfg, "--out", data}).code, kOk);

  const auto t = run_cli({"train", "--config", cfg, "--data", data, "--out", run_dir});
  ASSERT_EQ(t.code, kOk) << t.err;
  EXPECT_NE(t.out.find("fn_rate"), std::string::npos);
  EXPECT_EQ(count_lines(read_file(dir / "run" / "curves.csv")), 3u);
  EXPECT_EQ(run_cli({"train", "--config", cfg, "--data", data, "--out", run_dir}).code, kConfigError);

  const auto r = run_cli({"train", "--config", cfg, "--data", data, "--out", run_dir, "--resume", "--train.epochs", "3"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const std::string curves = read_file(dir / "run" / "curves.csv");
  EXPECT_EQ(count_lines(curves), 4u);
  EXPECT_NE(curves.find("\n3,"), std::string::npos);
  EXPECT_EQ(run_cli({"verify", run_dir}).code, kOk);

  const auto e = run_cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.ckpt").string(), "--data", data, "--out",
                      (dir / "eval").string()});
  ASSERT_EQ(e.code, kOk) << e.err;
  // header + 3 test cases + mean and excluded rows
  EXPECT_EQ(count_lines(read_file(dir / "eval" / "metrics.csv")), 1u + 3u + 2u);
  EXPECT_TRUE(fs::exists(dir / "eval" / "diffmaps" / "case_0010.ppm"));
  EXPECT_EQ(run_cli({"verify", (dir / "eval").string()}).code, kOk);

  fs::remove(dir / "run" / "curves.csv");
  EXPECT_EQ(run_cli({"verify", run_dir}).code, kAssertion);
}

TEST(Commands, ParamCountsPrintedForVariantComparison) {
  const auto dir = scratch("variants");
  write_file(dir / "cfg.toml", kSmallConfig);
  const std::string cfg = (dir / "cfg.toml").string(), data = (dir / "data").string();
  ASSERT_EQ(run_cli({"synth", "--config", cfg, "--out", data}).code, kOk);
  auto params_of = [&](const std::string& variant) {
    const auto r = run_cli({"train", "--config", cfg, "--data", data, "--out", (dir / variant).string(), "--train.epochs",
                        "1", "--model.variant", variant});
    EXPECT_EQ(r.code, kOk) << r.err;
    const auto m = read_manifest(dir / variant);
    return m.param_count.value_or(0);
  };
  EXPECT_GT(params_of("fpa"), params_of("unet"));
}

TEST(Commands, DivergenceAndBadInputsMapToExitCodes) {
  const auto dir = scratch("codes");
  write_file(dir / "cfg.toml", kSmallConfig);
  const std::string cfg = (dir / "cfg.toml").string(), data = (dir / "data").string();
  ASSERT_EQ(run_cli({"synth", "--config", cfg, "--out", data}).code, kOk);
  auto img = load_tsr<float>(dir / "data" / "images" / "case_0000.tsr");
  img[3] = std::nanf("");
  save_tsr(dir / "data" / "images" / "case_0000.tsr", img);
  const auto r = run_cli({"train", "--config", cfg, "--data", data, "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, kDivergence);
  EXPECT_NE(r.err.find("diverged"), std::string::npos);

  EXPECT_EQ(run_cli({"train", "--out", (dir / "x").string(), "--model.variant", "vgg"}).code, kConfigError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kConfigError);
  EXPECT_EQ(run_cli({"--precision", "f16", "verify", dir.string()}).code, kConfigError);
  EXPECT_EQ(run_cli({"verify", (dir / "nothing").string()}).code, kFailure);
  EXPECT_EQ(run_cli({"--help"}).code, kOk);
}

TEST(Commands, ErfOrderingChecksDriveTheExitCode) {
  const auto dir = scratch("erf");
  const auto ok = run_cli({"erf", "--arch", "dilated", "--dilation", "3", "--depth", "3", "--against-arch", "plain",
                       "--samples", "4", "--seeds", "2", "--expect", "larger", "--out", (dir / "a").string()});
  ASSERT_EQ(ok.code, kOk) << ok.err;
  const std::string csv = read_file(dir / "a" / "erf.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "arch,depth,dilation,residual,seed,rf_extent,erf_radius,ratio");
  EXPECT_EQ(count_lines(csv), 1u + 4u + 2u);  // header, 2 seeds x 2 stacks, 2 mean rows
  EXPECT_NE(csv.find("dilated,3,3,0,mean,19,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "a" / "heatmaps" / "plain_depth3_dil1_seed1.pgm"));
  const auto grid = load_tsr<double>(dir / "a" / "grids" / "dilated_depth3_dil3_seed0.tsr");
  ASSERT_EQ(grid.rank(), 2u);
  EXPECT_EQ(grid.shape()[0], grid.shape()[1]);
  for (double v : grid.data()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(run_cli({"verify", (dir / "a").string()}).code, kOk);

  const auto bad = run_cli({"erf", "--arch", "plain", "--depth", "3", "--against-arch", "dilated", "--against-dilation",
                        "3", "--samples", "4", "--seeds", "1", "--expect", "larger", "--out", (dir / "b").string()});
  EXPECT_EQ(bad.code, kAssertion);
  EXPECT_EQ(run_cli({"erf", "--arch", "plain", "--dilation", "2", "--out", (dir / "c").string()}).code, kConfigError);
  EXPECT_EQ(run_cli({"erf", "--expect", "larger", "--out", (dir / "d").string()}).code, kConfigError);
}

TEST(Commands, EvalExportsAttentionMapsPerStage) {
  const auto dir = scratch("attention");
  write_file(dir / "cfg.toml", kSmallConfig);
  const std::string cfg = (dir / "cfg.toml").string(), data = (dir / "data").string();
  ASSERT_EQ(run_cli({"synth", "--config", cfg, "--out", data}).code, kOk);
  const auto t = run_cli({"train", "--config", cfg, "--data", data, "--out", (dir / "fpa").string(), "--train.epochs",
                          "1", "--model.variant", "fpa", "--model.dilation", "2"});
  ASSERT_EQ(t.code, kOk) << t.err;
  ASSERT_EQ(run_cli({"train", "--config", cfg, "--data", data, "--out", (dir / "unet").string(), "--train.epochs", "1"})
                .code,
            kOk);

  const auto e = run_cli({"eval", "--checkpoint", (dir / "fpa" / "checkpoint.ckpt").string(), "--data", data, "--out",
                          (dir / "eval").string(), "--attention"});
  ASSERT_EQ(e.code, kOk) << e.err;
  // Stage i of a 4-channel stem halves the extent and doubles the width: 16x16 input,
  // stage 1 -> 8 channels at 8x8, stage 2 -> 16 channels at 4x4.
  for (std::size_t stage : {1u, 2u}) {
    const auto a = load_tsr<float>(dir / "eval" / "attention" / ("case_0008_stage" + std::to_string(stage) + ".tsr"));
    const std::size_t side = 16u >> stage;
    EXPECT_EQ(a.shape(), (Shape{4u << stage, side, side}));
    for (float v : a.data()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
    EXPECT_TRUE(fs::exists(dir / "eval" / "attention" / ("case_0008_stage" + std::to_string(stage) + ".pgm")));
  }
  EXPECT_EQ(run_cli({"verify", (dir / "eval").string()}).code, kOk);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir / "unet" / "checkpoint.ckpt").string(), "--data", data, "--out",
                     (dir / "eval_unet").string(), "--attention"})
                .code,
            kConfigError);
}

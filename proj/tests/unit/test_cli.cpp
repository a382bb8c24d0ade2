#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "audiomod/audiofe.hpp"
#include "audiomod/cli/commands.hpp"
#include "audiomod/cli/run_config.hpp"
#include "audiomod/errors.hpp"
#include "test_support.hpp"

namespace audiomod {
namespace {

namespace fs = std::filesystem;
using cli::RunConfig;
using json = nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
  std::vector<std::string> out_lines() const {
    std::vector<std::string> lines;
    std::istringstream in(out);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
  }
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "audiomod");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string config_error_key(const std::string& text, const std::vector<cli::Override>& ov = {}) {
  try {
    cli::parse_config_text(text, ov);
  } catch (const ConfigKeyError& e) {
    return e.key();
  }
  return "<none>";
}

// --- Config -------------------------------------------------------------------

TEST(Config, EmptyFileGivesDefaults) {
  const RunConfig c = cli::parse_config_text("");
  EXPECT_EQ(c.train.schedule.base_lr, 0.1);
  EXPECT_EQ(c.train.epochs, 20);
  EXPECT_EQ(c.train.schedule.decay_every, 5);
  EXPECT_EQ(c.train.schedule.decay_divisor, 10.0);
  EXPECT_EQ(c.train.schedule.warmup, training::WarmupKind::kNone);
  EXPECT_EQ(c.model.arch, model::Arch::kResnet18);
  EXPECT_EQ(c.model.pooling, aggregation::PoolingVariant::kAverage);
  EXPECT_EQ(c.model.attention.variant, attention::AttentionVariant::kNone);
  EXPECT_EQ(c.model.n_classes, 2);
  EXPECT_EQ(c.fbank.n_mels, 80);
  EXPECT_EQ(c.fbank.window_ms, 20.0);
  EXPECT_EQ(c.fbank.hop_ms, 10.0);
  EXPECT_EQ(c.teacher.arch, model::Arch::kResnet50);
  EXPECT_EQ(c.kd.temperature, 10.0);
  EXPECT_EQ(c.kd.lambda, 0.5);
  EXPECT_EQ(c.train.label_smoothing_eps, 0.0);
}

TEST(Config, FileThenOverrides) {
  const std::string text = "# comment\ntrain.warmup = constant\n\nmodel.pooling = max  # trailing\n";
  const RunConfig file_only = cli::parse_config_text(text);
  EXPECT_EQ(file_only.train.schedule.warmup, training::WarmupKind::kConstant);
  EXPECT_EQ(file_only.model.pooling, aggregation::PoolingVariant::kMax);
  const RunConfig c = cli::parse_config_text(text, {cli::parse_override("train.warmup=gradual")});
  EXPECT_EQ(c.train.schedule.warmup, training::WarmupKind::kGradual);
  EXPECT_EQ(c.model.pooling, aggregation::PoolingVariant::kMax);
}

TEST(Config, BadValuesNameTheirKey) {
  try {
    cli::parse_config_text("model.attention = cbamm\n");
    FAIL();
  } catch (const ConfigKeyError& e) {
    EXPECT_EQ(e.key(), "model.attention");
    EXPECT_NE(std::string(e.what()).find("none|se|cbam|ca"), std::string::npos);
  }
  EXPECT_EQ(config_error_key("model.atention = se\n"), "model.atention");
  EXPECT_EQ(config_error_key("train.epochs = abc\n"), "train.epochs");
  EXPECT_EQ(config_error_key("train.epochs = 3.5\n"), "train.epochs");
  EXPECT_EQ(config_error_key("train.base_lr = fast\n"), "train.base_lr");
  EXPECT_EQ(config_error_key("train.label_smoothing_eps = 1\n"), "train.label_smoothing_eps");
  EXPECT_EQ(config_error_key("train.epochs = 0\n"), "train.epochs");
  EXPECT_EQ(config_error_key("kd.lambda = 2\n"), "kd.lambda");
  EXPECT_EQ(config_error_key("fbank.fft_size = 300\n"), "fbank.fft_size");
  EXPECT_EQ(config_error_key("fbank.n_mels = 256\n"), "fbank.n_mels");
  EXPECT_EQ(config_error_key("model.channels = 8,16\n"), "model.channels");
  EXPECT_EQ(config_error_key("teacher.attention = cbamm\n"), "teacher.attention");
  EXPECT_EQ(config_error_key("teacher.channels = 1,2\n"), "teacher.channels");
  EXPECT_EQ(config_error_key("train.epochs = 3\ntrain.epochs = 4\n"), "train.epochs");
  EXPECT_EQ(config_error_key("", {{"nope", "1"}}), "nope");
  EXPECT_THROW(cli::parse_config_text("just words\n"), ConfigError);
  EXPECT_THROW(cli::parse_override("novalue"), ConfigError);
}

TEST(Config, ResolvedTextRoundTrips) {
  const RunConfig c = cli::parse_config_text(
      "model.arch = micro\nmodel.channels = 4,8,8,16\ntrain.base_lr = 0.003\nkd.lambda = 0.25\n"
      "run.seed = 18446744073709551615\ndata.manifest = a b/c.jsonl\n");
  const std::string text = cli::resolved_text(c);
  EXPECT_EQ(cli::resolved_text(cli::parse_config_text(text)), text);
  for (const auto& key : cli::known_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
  EXPECT_NE(text.find("train.base_lr = 0.003\n"), std::string::npos);
  EXPECT_NE(text.find("data.manifest = a b/c.jsonl\n"), std::string::npos);
  EXPECT_EQ(cli::parse_config_text(text).seed, 18446744073709551615ULL);
}

TEST(Config, DerivedFieldsFollowTheirSources) {
  const RunConfig c = cli::parse_config_text("fbank.n_mels = 40\nrun.seed = 9\nmodel.n_classes = 3\n");
  EXPECT_EQ(c.model.n_mels, 40);
  EXPECT_EQ(c.teacher.n_mels, 40);
  EXPECT_EQ(c.teacher.n_classes, 3);
  EXPECT_EQ(c.train.seed, 9u);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(cli::parse_config("/nonexistent/run.cfg"), ConfigError);
}

// --- Commands -----------------------------------------------------------------

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli::exit_code(ErrorKind::kConfig), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::kData), 3);
  EXPECT_EQ(cli::exit_code(ErrorKind::kNumeric), 4);
  EXPECT_EQ(cli::exit_code(ErrorKind::kIo), 1);
  EXPECT_EQ(cli::exit_code(ErrorKind::kFormat), 1);
}

TEST(Cli, LrPreviewGradual) {
  const auto r = run_cli({"lr-preview", "--set", "train.warmup=gradual"});
  ASSERT_EQ(r.code, 0);
  const auto lines = r.out_lines();
  ASSERT_EQ(lines.size(), 20u);
  EXPECT_EQ(lines.front(), "0 1e-05");
  EXPECT_EQ(lines[5], "5 0.1");
  EXPECT_EQ(lines.back(), "19 0.001");
}

TEST(Cli, LrPreviewReadsConfigFile) {
  const auto dir = testing::scratch_dir("cli_preview");
  std::ofstream(dir / "run.cfg") << "train.epochs = 3\ntrain.warmup = constant\n";
  const auto r = run_cli({"lr-preview", "--config", (dir / "run.cfg").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0 1e-05\n1 1e-05\n2 1e-05\n");
  const auto o = run_cli({"lr-preview", "--config", (dir / "run.cfg").string(), "--set", "train.warmup=none"});
  EXPECT_EQ(o.out, "0 0.1\n1 0.1\n2 0.1\n");
}

TEST(Cli, ConfigErrorIsOneJsonLine) {
  const auto r = run_cli({"lr-preview", "--set", "model.attention=cbamm"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  const auto j = json::parse(r.err);
  EXPECT_EQ(j["error"], "config");
  EXPECT_EQ(j["key"], "model.attention");
  EXPECT_NE(j["message"].get<std::string>().find("cbamm"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  const auto t = run_cli({"train"});
  EXPECT_EQ(t.code, 2);
  EXPECT_EQ(json::parse(t.err)["key"], "run.out_dir");
}

TEST(Cli, DistillWithoutTeacherIsConfigError) {
  const auto dir = testing::scratch_dir("cli_distill_missing");
  const auto r = run_cli({"distill", "--out", (dir / "run").string(), "--manifest", (dir / "m.jsonl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["key"], "kd.teacher_checkpoint");
}

// Small corpus shared by the end-to-end command tests.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(testing::scratch_dir("cli_runs"));
    const auto r = run_cli({"gen-data", "--out", (*root_ / "data").string(), "--per-class", "6,2,4", "--seed", "3",
                            "--min-duration", "1", "--max-duration", "1.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    ASSERT_EQ(j["records"], 24);
    ASSERT_EQ(j["test"], 8);
  }
  static void TearDownTestSuite() { delete root_; }

  static std::vector<std::string> train_args(const std::string& cmd, const fs::path& out) {
    return {cmd,     "--manifest", manifest().string(), "--out", out.string(), "--set", "model.arch=micro",
            "--set", "train.epochs=2", "--set", "train.batch_size=4", "--set", "train.base_lr=0.01",
            "--threads", "2"};
  }
  static fs::path manifest() { return *root_ / "data" / "manifest.jsonl"; }
  static fs::path* root_;
};
fs::path* CliRun::root_ = nullptr;

TEST_F(CliRun, TrainThenEvalAgree) {
  const auto out = *root_ / "train";
  const auto r = run_cli(train_args("train", out));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = r.out_lines();
  ASSERT_EQ(lines.size(), 6u);
  const auto summary = json::parse(lines.back());
  EXPECT_EQ(summary["summary"], true);

  for (const char* f : {"config.resolved", "metrics.jsonl", "best.ckpt", "best.ckpt.meta", "epoch_0.ckpt",
                        "epoch_1.ckpt", "epoch_1.ckpt.meta"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(read_file(out / "best.ckpt.meta"), read_file(out / "config.resolved"));

  const auto e = run_cli({"eval", "--config", (out / "config.resolved").string(), "--split", "test"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ev = json::parse(e.out);
  EXPECT_EQ(ev["accuracy"].get<double>(), summary["test_accuracy"].get<double>());
  EXPECT_EQ(ev["loss"].get<double>(), summary["test_loss"].get<double>());
  EXPECT_EQ(ev["count"], 8);
}

TEST_F(CliRun, ResolvedConfigReproducesRunExactly) {
  const auto a = *root_ / "repro_a";
  ASSERT_EQ(run_cli(train_args("train", a)).code, 0);
  const auto b = *root_ / "repro_b";
  const auto r = run_cli({"train", "--config", (a / "config.resolved").string(), "--out", b.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(a / "metrics.jsonl"), read_file(b / "metrics.jsonl"));
  EXPECT_EQ(read_file(a / "best.ckpt"), read_file(b / "best.ckpt"));
}

TEST_F(CliRun, DistillTrainsTeacherThenStudent) {
  const auto out = *root_ / "distill";
  auto args = train_args("distill", out);
  for (const char* s : {"teacher.arch=micro", "teacher.channels=4,8,8,16", "train.label_smoothing_eps=0.1"}) {
    args.push_back("--set");
    args.push_back(s);
  }
  args.push_back("--train-teacher");
  const auto r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "teacher" / "best.ckpt"));
  EXPECT_TRUE(fs::exists(out / "best.ckpt"));
  const auto lines = r.out_lines();
  EXPECT_TRUE(json::parse(lines.front()).contains("teacher"));
  EXPECT_EQ(json::parse(lines.back())["summary"], true);

  // A second distill reuses the existing teacher without --train-teacher.
  args.pop_back();
  const auto again = run_cli(args);
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_FALSE(json::parse(again.out_lines().front()).contains("teacher"));
}

TEST_F(CliRun, TrainWithExplicitTeacherCheckpoint) {
  const auto teacher_dir = *root_ / "teacher_src";
  ASSERT_EQ(run_cli(train_args("train", teacher_dir)).code, 0);
  auto args = train_args("train", *root_ / "kd_student");
  args.push_back("--set");
  args.push_back("kd.teacher_checkpoint=" + (teacher_dir / "best.ckpt").string());
  args.push_back("--set");
  args.push_back("teacher.arch=micro");
  const auto r = run_cli(args);
  EXPECT_EQ(r.code, 0) << r.err;
  // Wrong teacher architecture for that checkpoint.
  args.back() = "teacher.arch=resnet18";
  EXPECT_EQ(run_cli(args).code, 1);
}

TEST_F(CliRun, NonFiniteLossExitsFour) {
  const auto out = *root_ / "nan";
  auto args = train_args("train", out);
  args.push_back("--set");
  args.push_back("train.base_lr=1e300");
  const auto r = run_cli(args);
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(json::parse(r.err)["error"], "numeric");
  EXPECT_NE(read_file(out / "metrics.jsonl").find("\"abort\""), std::string::npos);
}

TEST_F(CliRun, ExtractWritesFeatureFiles) {
  const auto feats = *root_ / "features";
  const auto r = run_cli({"extract", "--manifest", manifest().string(), "--features-out", feats.string(), "--set",
                          "fbank.n_mels=40"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["extracted"], 24);
  const auto f = audiofe::read_features(feats / "syn0_00000.afb");
  EXPECT_EQ(f.n_mels, 40);
  EXPECT_GT(f.frames, 90);
}

TEST_F(CliRun, ExtractReportsUnreadableItems) {
  const auto dir = *root_ / "broken";
  fs::create_directories(dir);
  std::ofstream(dir / "bad.wav") << "not audio";
  std::ofstream(dir / "manifest.jsonl")
      << R"({"id":"bad","path":"bad.wav","label":0,"split":"train","duration_s":1.0})" << "\n"
      << R"({"id":"good","path":")" << fs::absolute(*root_ / "data" / "syn0_00000.wav").string()
      << R"(","label":0,"split":"train","duration_s":1.0})" << "\n";
  const auto r = run_cli({"extract", "--manifest", (dir / "manifest.jsonl").string(), "--features-out",
                          (dir / "feats").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(r.err)["item_error"], "bad");
  EXPECT_EQ(json::parse(r.out)["extracted"], 1);
}

TEST_F(CliRun, EvalOnMissingManifestIsIoError) {
  const auto r = run_cli({"eval", "--manifest", "/nonexistent.jsonl", "--checkpoint", "/nonexistent.ckpt"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"], "io");
}

TEST(CliBinary, ExitStatusReachesShell) {
  const std::string bin = AUDIOMOD_CLI_PATH;
  EXPECT_EQ(std::system((bin + " lr-preview > /dev/null").c_str()), 0);
  const int status = std::system((bin + " lr-preview --set model.pooling=mean 2> /dev/null").c_str());
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

}  // namespace
}  // namespace audiomod

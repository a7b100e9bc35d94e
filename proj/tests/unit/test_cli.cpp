#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include "json.hpp"

#include "cli.hpp"
#include "nucdiff/tensors.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace nucdiff;

namespace {

const fs::path kFixtures = NUCDIFF_FIXTURE_DIR;

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "nucdiff");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("nucdiff_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Default planted instance in `name`.
  std::string synth(const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"synth", "--out", path(name)};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = invoke(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  fs::path dir_;
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

nlohmann::json output_digests(const fs::path& dir) { return read_json(dir / "manifest.json").at("outputs"); }

void write_video(const fs::path& p, const Eigen::MatrixXd& m, int h, int w) {
  write_tensor(p, to_tensor(CasoratiMatrix(m, h, w)));
}

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({}).code, cli::kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"synth"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"synth", "--out", path("s"), "--rank", "99"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"synth", "--out", path("s"), "--foreground", "speckle"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"rpca", "--y", path("missing.ndt"), "--out", path("r")}).code, cli::kUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, SynthDefaultsWriteDeskScaleInstance) {
  const std::string s = synth("s");
  for (const char* f : {"Y.ndt", "L_true.ndt", "X_true.ndt", "mask_ventricle.ndt", "mask_septum.ndt", "spec.json",
                        "prior.json", "prior_means.ndt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(s) / f)) << f;
  }
  const Tensor y = read_tensor(fs::path(s) / "Y.ndt");
  EXPECT_EQ(y.dims, (std::vector<std::uint32_t>{7, 32, 32}));
  const auto manifest = read_json(fs::path(s) / "manifest.json");
  EXPECT_EQ(manifest.at("command"), "synth");
  EXPECT_TRUE(manifest.contains("duration_seconds"));
  EXPECT_TRUE(manifest.contains("version"));
}

TEST_F(CliTest, SynthMotionLevelsMakeSubdirectories) {
  const std::string s = synth("s", {"--motion-levels", "0,0.1,0.2"});
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(s)) dirs += e.is_directory() ? 1 : 0;
  EXPECT_EQ(dirs, 3);
}

TEST_F(CliTest, SynthRerunGivesIdenticalDigests) {
  const std::string a = synth("a", {"--seed", "17"});
  const std::string b = synth("b", {"--seed", "17"});
  EXPECT_EQ(output_digests(a), output_digests(b));
  const std::string c = synth("c", {"--seed", "18"});
  EXPECT_NE(output_digests(a), output_digests(c));
}

TEST_F(CliTest, RpcaPlantedRecovery) {
  oracle::Rng rng(120);
  const auto planted = oracle::planted_rpca(rng, 400, 50, 2, 0.05, 10.0);
  write_video(path("y.ndt"), planted.l + planted.x, 20, 20);
  write_video(path("l.ndt"), planted.l, 20, 20);
  const auto r = invoke({"rpca", "--y", path("y.ndt"), "--l-true", path("l.ndt"), "--out", path("r"),
                         "--max-iters", "2000"});
  ASSERT_EQ(r.code, cli::kOk) << r.out << r.err;
  const auto summary = read_json(path("r") + "/summary.json");
  EXPECT_TRUE(summary.at("converged").get<bool>());
  // Inputs round-trip through f32 on disk.
  EXPECT_LE(summary.at("l_recovery_error").get<double>(), 1e-2);
  const auto lines = read_lines(path("r") + "/objective.csv");
  EXPECT_EQ(lines.front(), "iteration,objective");
}

TEST_F(CliTest, RpcaZeroInputGivesZeroOutputs) {
  write_video(path("y.ndt"), Eigen::MatrixXd::Zero(16, 4), 4, 4);
  const auto r = invoke({"rpca", "--y", path("y.ndt"), "--out", path("r")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const char* f : {"L.ndt", "X.ndt"}) {
    const Tensor t = read_tensor(path("r") + "/" + f);
    for (float v : t.data) EXPECT_EQ(v, 0.0f);
  }
}

TEST_F(CliTest, RpcaSingleFrameWarns) {
  oracle::Rng rng(121);
  write_video(path("y.ndt"), oracle::gaussian_matrix(rng, 16, 1), 4, 4);
  const auto r = invoke({"rpca", "--y", path("y.ndt"), "--out", path("r")});
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_TRUE(r.code == cli::kOk || r.code == cli::kNotConverged);
  EXPECT_TRUE(fs::exists(path("r") + "/L.ndt"));
}

TEST_F(CliTest, RpcaNonConvergenceExitCode) {
  const std::string s = synth("s");
  const auto r = invoke({"rpca", "--y", s + "/Y.ndt", "--out", path("r"), "--max-iters", "3"});
  EXPECT_EQ(r.code, cli::kNotConverged);
  EXPECT_FALSE(read_json(path("r") + "/summary.json").at("converged").get<bool>());
}

TEST_F(CliTest, MalformedTensorExitCode) {
  {
    std::ofstream f(path("bad.ndt"), std::ios::binary);
    f << "NDT1garbage";
  }
  EXPECT_EQ(invoke({"rpca", "--y", path("bad.ndt"), "--out", path("r")}).code, cli::kInputFormat);
  const std::string s = synth("s");
  EXPECT_EQ(invoke({"nucdiff", "--y", path("bad.ndt"), "--prior", s + "/prior.json", "--out", path("n")}).code,
            cli::kInputFormat);
}

TEST_F(CliTest, NucdiffGaussianSmoke) {
  const std::string s = synth("s", {"--foreground", "gaussian"});
  const auto r = invoke({"nucdiff", "--y", s + "/Y.ndt", "--model", "gaussian", "--prior", s + "/prior.json",
                         "--steps", "20", "--out", path("n")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto lines = read_lines(path("n") + "/trace.csv");
  EXPECT_EQ(lines.front(), "step,tau,measurement_error,low_rank_penalty,rank");
  EXPECT_EQ(lines.size(), 21u);
  const Tensor x = read_tensor(path("n") + "/X.ndt");
  for (float v : x.data) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(CliTest, NucdiffGmmBeatsRpcaOnForeground) {
  const std::string s = synth("s", {"--seed", "5"});
  const auto nd = invoke({"nucdiff", "--y", s + "/Y.ndt", "--prior", s + "/prior.json", "--x-true",
                          s + "/X_true.ndt", "--steps", "200", "--out", path("n")});
  ASSERT_EQ(nd.code, cli::kOk) << nd.err;
  const auto rp = invoke({"rpca", "--y", s + "/Y.ndt", "--x-true", s + "/X_true.ndt", "--out", path("r")});
  ASSERT_TRUE(rp.code == cli::kOk || rp.code == cli::kNotConverged) << rp.err;
  EXPECT_LT(read_json(path("n") + "/summary.json").at("x_mse").get<double>(),
            read_json(path("r") + "/summary.json").at("x_mse").get<double>());
}

TEST_F(CliTest, NucdiffRerunGivesIdenticalDigests) {
  const std::string s = synth("s");
  std::vector<std::string> base{"nucdiff", "--y", s + "/Y.ndt", "--prior", s + "/prior.json", "--steps", "30",
                                "--seed", "4"};
  auto a = base;
  a.insert(a.end(), {"--out", path("a")});
  auto b = base;
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(invoke(a).code, cli::kOk);
  ASSERT_EQ(invoke(b).code, cli::kOk);
  EXPECT_EQ(output_digests(path("a")), output_digests(path("b")));
}

TEST_F(CliTest, NucdiffWeightShapeMismatch) {
  const std::string s = synth("s");
  const auto r = invoke({"nucdiff", "--y", s + "/Y.ndt", "--model", "mlp", "--weights",
                         (kFixtures / "mlp_silu.ndw").string(), "--out", path("n")});
  EXPECT_EQ(r.code, cli::kInputFormat) << r.err;
}

TEST_F(CliTest, NucdiffWithMlpWeights) {
  const std::string s = synth("s", {"--height", "4", "--width", "4", "--frames", "3", "--rank", "1"});
  const auto r = invoke({"nucdiff", "--y", s + "/Y.ndt", "--model", "mlp", "--weights",
                         (kFixtures / "mlp_silu.ndw").string(), "--steps", "10", "--total-steps", "1000",
                         "--out", path("n")});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
}

TEST_F(CliTest, NucdiffDivergenceIsNumericalFailure) {
  const std::string s = synth("s");
  const auto r = invoke({"nucdiff", "--y", s + "/Y.ndt", "--prior", s + "/prior.json", "--guidance-step",
                         "explicit", "--mu", "50", "--steps", "500", "--out", path("n")});
  EXPECT_EQ(r.code, cli::kNumerical) << r.err;
  EXPECT_NE(r.err.find("step"), std::string::npos) << r.err;
}

TEST_F(CliTest, MetricsRowsAndIdentity) {
  const std::string s = synth("s");
  const auto r = invoke({"metrics", "--original", s + "/Y.ndt", "--denoised", s + "/Y.ndt", "--ventricle",
                         s + "/mask_ventricle.ndt", "--septum", s + "/mask_septum.ndt", "--out", path("m"), "--plot"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto lines = read_lines(path("m") + "/metrics.csv");
  ASSERT_EQ(lines.size(), 1u + 2u * 7u + 2u);
  EXPECT_EQ(lines.front(), "sequence_id,frame_index,metric_name,value,params");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].find(",ks,") != std::string::npos) {
      EXPECT_NE(lines[i].find(",ks,0,"), std::string::npos) << lines[i];
    }
  }
  EXPECT_TRUE(fs::exists(path("m") + "/metrics.svg"));
}

TEST_F(CliTest, MetricsSeparatedRoisHaveFullContrast) {
  const std::string s = synth("s", {"--rank", "0", "--noise", "0"});
  const auto r = invoke({"metrics", "--original", s + "/Y.ndt", "--denoised", s + "/X_true.ndt", "--ventricle",
                         s + "/mask_ventricle.ndt", "--septum", s + "/mask_septum.ndt", "--out", path("m")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const auto& line : read_lines(path("m") + "/metrics.csv")) {
    if (line.find(",gcnr,") == std::string::npos) continue;
    const auto start = line.find(",gcnr,") + 6;
    EXPECT_GT(std::stod(line.substr(start, line.find(',', start) - start)), 0.95) << line;
  }
}

TEST_F(CliTest, MetricsMaskMismatch) {
  const std::string s = synth("s");
  const std::string t = synth("t", {"--height", "16", "--width", "16"});
  const auto r = invoke({"metrics", "--original", s + "/Y.ndt", "--denoised", s + "/Y.ndt", "--ventricle",
                         t + "/mask_ventricle.ndt", "--septum", s + "/mask_septum.ndt", "--out", path("m")});
  EXPECT_EQ(r.code, cli::kInputFormat);
}

TEST_F(CliTest, SweepSingleLevelSingleMethod) {
  const auto r = invoke({"sweep", "--levels", "0.2", "--methods", "rpca", "--out", path("w")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto lines = read_lines(path("w") + "/sweep.csv");
  EXPECT_EQ(lines.size(), 2u);
  EXPECT_TRUE(fs::exists(path("w") + "/ks_vs_psnr.svg"));
}

TEST_F(CliTest, SweepRerunGivesIdenticalCsv) {
  std::vector<std::string> base{"sweep", "--levels", "0,0.3", "--steps", "20", "--rpca-max-iters", "50"};
  auto a = base;
  a.insert(a.end(), {"--out", path("a")});
  auto b = base;
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(invoke(a).code, cli::kOk);
  ASSERT_EQ(invoke(b).code, cli::kOk);
  EXPECT_EQ(read_lines(path("a") + "/sweep.csv"), read_lines(path("b") + "/sweep.csv"));
  EXPECT_EQ(read_lines(path("a") + "/sweep.csv").size(), 5u);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  {
    std::ofstream f(path("synth.toml"));
    f << "height = 16\nwidth = 16\nframes = 4\nseed = 3\n";
  }
  const std::string s = synth("s", {"--config", path("synth.toml"), "--frames", "5"});
  EXPECT_EQ(read_tensor(fs::path(s) / "Y.ndt").dims, (std::vector<std::uint32_t>{5, 16, 16}));
  {
    std::ofstream f(path("bad.toml"));
    f << "no_such_key = 1\n";
  }
  EXPECT_EQ(invoke({"synth", "--out", path("t"), "--config", path("bad.toml")}).code, cli::kUsage);
}

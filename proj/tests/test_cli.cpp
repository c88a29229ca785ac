#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "maot/cli.hpp"

using namespace maot;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("maot_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "maot");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
  }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }
  json read_json(const std::string& name) const {
    std::ifstream in(dir_ / name);
    return json::parse(in);
  }
  std::vector<std::vector<std::string>> read_csv(const std::string& name) const {
    std::ifstream in(dir_ / name);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      rows.push_back(std::move(cells));
    }
    return rows;
  }

  fs::path dir_;
};

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  EXPECT_NE(it, header.end()) << name;
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

TEST_F(CliTest, SyntheticSweepWritesReports) {
  ASSERT_EQ(run({"synthetic", "--n", "16,32", "--out", out("syn"), "-q"}), 0);
  const json r = read_json("syn/report.json");
  EXPECT_EQ(r["command"], "synthetic");
  EXPECT_TRUE(r["converged"].get<bool>());
  ASSERT_EQ(r["runs"].size(), 2u);
  for (const auto& run : r["runs"]) {
    EXPECT_TRUE(std::isfinite(run["u_error"].get<double>()));
    EXPECT_TRUE(run["converged"].get<bool>());
  }
  ASSERT_EQ(r["observed_order"].size(), 1u);
  EXPECT_NEAR(r["observed_order"][0]["order"].get<double>(), 4.0, 0.5);

  const auto rows = read_csv("syn/history.csv");
  ASSERT_GT(rows.size(), 2u);
  const auto& h = rows[0];
  EXPECT_EQ(h.size(), 17u);
  const std::size_t n_col = column(h, "n"), it_col = column(h, "iter"), res_col = column(h, "residual");
  std::string last_n;
  long expected = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    ASSERT_EQ(rows[k].size(), h.size()) << k;
    if (rows[k][n_col] != last_n) {
      last_n = rows[k][n_col];
      expected = 0;
    }
    EXPECT_EQ(std::stol(rows[k][it_col]), expected++);
    EXPECT_TRUE(std::isfinite(std::stod(rows[k][res_col])));
  }
  const auto order = read_csv("syn/order.csv");
  ASSERT_EQ(order.size(), 2u);
}

TEST_F(CliTest, SingleGridHasNoOrderFile) {
  ASSERT_EQ(run({"synthetic", "--n", "16", "--backend", "fd", "--out", out("one"), "-q"}), 0);
  EXPECT_TRUE(fs::exists(dir_ / "one/report.json"));
  EXPECT_FALSE(fs::exists(dir_ / "one/order.csv"));
}

TEST_F(CliTest, NonConvergenceExitsWithTwo) {
  EXPECT_EQ(run({"synthetic", "--n", "16", "--max-iter", "1", "--out", out("nc"), "-q"}), 2);
  const json r = read_json("nc/report.json");
  EXPECT_FALSE(r["converged"].get<bool>());
}

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({"synthetic", "--n", "24", "--out", out("a"), "-q"}), 1);  // not a power of two for fft
  EXPECT_EQ(run({"synthetic", "--n", "6", "--backend", "fd", "--out", out("a"), "-q"}), 1);
  EXPECT_EQ(run({"synthetic", "--tau", "0.5", "--out", out("a"), "-q"}), 1);
  EXPECT_EQ(run({"synthetic", "--backend", "cuda", "--out", out("a"), "-q"}), 1);
  EXPECT_EQ(run({"register", "--source", out("missing.pgm"), "--target", out("missing.pgm")}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, FiniteDifferenceGridNeedNotBePowerOfTwo) {
  EXPECT_EQ(run({"synthetic", "--n", "24", "--backend", "fd", "--out", out("fd24"), "-q"}), 0);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  ::setenv("MAOT_OUT", out("env").c_str(), 1);
  const int code = run({"synthetic", "--n", "16", "-q"});
  ::unsetenv("MAOT_OUT");
  ASSERT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "env/report.json"));
  EXPECT_TRUE(fs::exists(dir_ / "env/history.csv"));
}

TEST_F(CliTest, ThreadedAndSerialSweepsAgree) {
  ASSERT_EQ(run({"synthetic", "--n", "16,32", "--out", out("t"), "-q"}), 0);
  ASSERT_EQ(run({"synthetic", "--n", "16,32", "--single-thread", "--out", out("s"), "-q"}), 0);
  const json a = read_json("t/report.json"), b = read_json("s/report.json");
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& ra = a["runs"][r]["records"];
    const auto& rb = b["runs"][r]["records"];
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t k = 0; k < ra.size(); ++k) EXPECT_EQ(ra[k]["residual"], rb[k]["residual"]);
    EXPECT_EQ(a["runs"][r]["u_error"], b["runs"][r]["u_error"]);
  }
}

TEST_F(CliTest, ZeroPotentialConvergesImmediately) {
  ASSERT_EQ(run({"synthetic", "--n", "16", "--zero-potential", "--out", out("z"), "-q"}), 0);
  const json r = read_json("z/report.json");
  EXPECT_LE(r["runs"][0]["newton_steps"].get<int>(), 1);
}

TEST_F(CliTest, PhantomAndRegisterIdenticalImages) {
  ASSERT_EQ(run({"phantom", "--size", "64", "--lesion", "0.3,0.6,0.05", out("a.pgm")}), 0);
  ASSERT_EQ(run({"phantom", "--size", "64", out("b.png")}), 0);
  EXPECT_EQ(run({"phantom", "--size", "64", "--lesion", "0.3,0.6", out("c.pgm")}), 1);
  const GrayImage img = read_image(out("a.pgm"));
  EXPECT_EQ(img.width, 64u);

  ASSERT_EQ(run({"register", "--source", out("a.pgm"), "--target", out("a.pgm"), "--n", "32", "--frames", "--out",
                 out("same"), "-q"}),
            0);
  const json r = read_json("same/report.json");
  EXPECT_LE(r["distance"].get<double>(), 1e-12);
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "same/divergence.pgm"));
  EXPECT_TRUE(fs::exists(dir_ / "same/frames/source.pgm"));
  EXPECT_TRUE(fs::exists(dir_ / "same/frames/iter_000.pgm"));
}

TEST_F(CliTest, RegisterLesionPair) {
  ASSERT_EQ(run({"phantom", "--size", "128", "--lesion", "0.3,0.62,0.05", out("lesion.pgm")}), 0);
  ASSERT_EQ(run({"phantom", "--size", "128", out("healthy.pgm")}), 0);
  ASSERT_EQ(run({"register", "--source", out("lesion.pgm"), "--target", out("healthy.pgm"), "--n", "64", "--sample",
                 "bilinear", "--format", "png", "--out", out("reg"), "-q"}),
            0);
  const json r = read_json("reg/report.json");
  EXPECT_GT(r["distance"].get<double>(), 1e-6);
  const double row = r["divergence"]["argmax_abs"]["row"].get<double>() + 0.5;
  const double col = r["divergence"]["argmax_abs"]["col"].get<double>() + 0.5;
  EXPECT_LE(std::hypot(row / 64 - 0.3, col / 64 - 0.62), 0.05 + 1.0 / 64);
  EXPECT_TRUE(fs::exists(dir_ / "reg/divergence.png"));
  EXPECT_TRUE(fs::exists(dir_ / "reg/history.csv"));
}

TEST_F(CliTest, BenchWithProbe) {
  ASSERT_EQ(run({"bench", "--n", "16,32", "--backend", "both", "--probe-spectral-radius", "--seed", "3", "--out",
                 out("bench"), "-q"}),
            0);
  const auto rows = read_csv("bench/bench.csv");
  ASSERT_EQ(rows.size(), 5u);
  const auto& h = rows[0];
  const std::size_t rmin = column(h, "probe_radius_min"), rmax = column(h, "probe_radius_max");
  const std::size_t inner = column(h, "mean_inner_iterations");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_GT(std::stod(rows[k][rmin]), 0.0);
    EXPECT_LT(std::stod(rows[k][rmax]), 1.0);
    EXPECT_GT(std::stod(rows[k][inner]), 0.0);
  }
  const json r = read_json("bench/report.json");
  EXPECT_EQ(r["runs"].size(), 4u);
  EXPECT_FALSE(r["runs"][0]["spectral_radius_probes"].empty());
}

TEST_F(CliTest, BinaryExitCodes) {
  const char* path = MAOT_CLI_PATH;
  ASSERT_TRUE(fs::exists(path)) << path;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const std::string exe = std::string("'") + path + "'";
  EXPECT_EQ(status(exe + " synthetic --n 16 -q --out '" + out("b0") + "'"), 0);
  EXPECT_EQ(status(exe + " synthetic --n 16 --max-iter 1 -q --out '" + out("b2") + "'"), 2);
  EXPECT_EQ(status(exe + " synthetic --n 12 -q --out '" + out("b1") + "'"), 1);
  EXPECT_EQ(status(exe + " nosuchcommand"), 1);
}

// Drives the essvi-mm executable end to end.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "essvi_mm/agent.hpp"
#include "essvi_mm/cli/commands.hpp"
#include "essvi_mm/cli/csv.hpp"
#include "essvi_mm/cli/settings.hpp"
#include "essvi_mm/env.hpp"
#include "essvi_mm/risk.hpp"

namespace essvi_mm::cli {
namespace {

namespace fs = std::filesystem;

// Small run so each invocation finishes in well under a second.
const std::string kSmall =
    " --set steps_per_episode=40 --set episodes=3 --set warm_steps=30 --set minibatch=16";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("essvi_mm_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ESSVI_MM_TOOL) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string joined(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("trained"));
    code_ = run("train --seed 0 --out " + (*dir_ / "a").string() + kSmall, *dir_ / "a.log");
  }
  static void TearDownTestSuite() { delete dir_; }

  static fs::path* dir_;
  static int code_;
};

fs::path* TrainedRun::dir_ = nullptr;
int TrainedRun::code_ = -1;

TEST_F(TrainedRun, WritesArtifactsWithGoldenHeaders) {
  ASSERT_EQ(code_, kExitOk) << slurp(*dir_ / "a.log");
  const fs::path a = *dir_ / "a";
  EXPECT_EQ(first_line(a / "run_log.csv"),
            "episode,reward_sum,pnl_raw,pnl_adj,bf_mean,cal_mean,shape_mean,cvar_mean,"
            "var5_steps,cvar5_steps,alpha_mean,hedge_mean,act_std");
  EXPECT_EQ(first_line(a / "step_log.csv"),
            "episode,t,spot,reward,pnl_quote,pnl_hedge,bf,cal,shape,cvar,alpha,hedge,psi_scale,"
            "rho_shift,dual");
  EXPECT_EQ(first_line(a / "run_log.csv"), joined(kRunLogHeader));
  EXPECT_EQ(read_csv((a / "run_log.csv").string()).rows.size(), 3u);
  EXPECT_EQ(read_csv((a / "step_log.csv").string()).rows.size(), 120u);
  const std::string text = slurp(a / "step_log.csv");
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_NE(e.path().extension(), ".tmp") << e.path();
  }
}

TEST_F(TrainedRun, SettingsRecordTheEffectiveConfig) {
  ASSERT_EQ(code_, kExitOk);
  const RunSettings s = parse_settings(slurp(*dir_ / "a" / "settings.json"));
  EXPECT_EQ(s.env.steps_per_episode, 40);
  EXPECT_EQ(s.agent.episodes, 3);
  EXPECT_EQ(s.seed, 0u);
  EXPECT_EQ(s.out_dir, (*dir_ / "a").string());
}

TEST_F(TrainedRun, SameSeedIsByteIdenticalOtherSeedDiffers) {
  ASSERT_EQ(code_, kExitOk);
  ASSERT_EQ(run("train --seed 0 --out " + (*dir_ / "b").string() + kSmall, *dir_ / "b.log"), 0);
  ASSERT_EQ(run("train --seed 1 --out " + (*dir_ / "c").string() + kSmall, *dir_ / "c.log"), 0);
  for (const char* f : {"run_log.csv", "step_log.csv"}) {
    EXPECT_EQ(slurp(*dir_ / "a" / f), slurp(*dir_ / "b" / f)) << f;
    EXPECT_NE(slurp(*dir_ / "a" / f), slurp(*dir_ / "c" / f)) << f;
  }
}

TEST_F(TrainedRun, RewardsRecomposeBitwiseFromTheStepLog) {
  ASSERT_EQ(code_, kExitOk);
  const RunSettings s = parse_settings(slurp(*dir_ / "a" / "settings.json"));
  const CsvTable t = read_csv((*dir_ / "a" / "step_log.csv").string());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto ep = static_cast<int>(t.number(i, "episode"));
    const RewardWeights w = annealed_weights(ep, s.agent.episodes, s.env);
    const double r = compose_reward(t.number(i, "pnl_quote"), t.number(i, "pnl_hedge"),
                                    t.number(i, "shape"), t.number(i, "bf"), t.number(i, "cal"),
                                    t.number(i, "cvar"), w.lambda_shape,
                                    w.lambda_arb + t.number(i, "dual"), w.lambda_cvar);
    ASSERT_EQ(r, t.number(i, "reward")) << "row " << i;
  }
}

TEST_F(TrainedRun, PlotDataMatchesTheLogs) {
  ASSERT_EQ(code_, kExitOk);
  const fs::path out = *dir_ / "plots";
  ASSERT_EQ(run("plot-data --run " + (*dir_ / "a").string() + " --out " + out.string(),
                *dir_ / "plot.log"),
            0)
      << slurp(*dir_ / "plot.log");
  const CsvTable steps = read_csv((*dir_ / "a" / "step_log.csv").string());
  std::vector<double> pnl;
  for (std::size_t i = 0; i < steps.rows.size(); ++i) {
    pnl.push_back(steps.number(i, "pnl_quote") + steps.number(i, "pnl_hedge"));
  }
  // Independent empirical tail: 5% quantile and the mean of the worst 5% mass.
  std::vector<double> sorted = pnl;
  std::sort(sorted.begin(), sorted.end());
  const double mass = 0.05 * static_cast<double>(sorted.size());
  double acc = 0.0;
  double left = mass;
  for (double x : sorted) {
    const double w = std::min(1.0, left);
    if (w <= 0.0) break;
    acc += w * x;
    left -= w;
  }
  const CsvTable hist = read_csv((out / "pnl_hist.csv").string());
  ASSERT_EQ(hist.rows.size(), 50u);
  EXPECT_NEAR(hist.number(0, "cvar5"), acc / mass, 1e-12 * std::max(1.0, std::abs(acc / mass)));
  const auto k = static_cast<std::size_t>(std::ceil(mass)) - 1;
  EXPECT_EQ(hist.number(0, "var5"), sorted[k]);
  double total = 0.0;
  for (std::size_t i = 0; i < hist.rows.size(); ++i) total += hist.number(i, "count");
  EXPECT_EQ(total, static_cast<double>(pnl.size()));
  EXPECT_EQ(hist.number(0, "bin_lo"), sorted.front());
  EXPECT_EQ(hist.number(49, "bin_hi"), sorted.back());

  const RunSettings s = parse_settings(slurp(*dir_ / "a" / "settings.json"));
  const CsvTable surf = read_csv((out / "surface_compare.csv").string());
  EXPECT_EQ(surf.rows.size(), s.env.maturities.size() * s.env.k_grid.size());
  EXPECT_EQ(surf.header, (std::vector<std::string>{"maturity", "k", "true_vol", "quoted_vol"}));

  const CsvTable curves = read_csv((out / "training_curves.csv").string());
  EXPECT_EQ(curves.rows.size(), 3u);
  EXPECT_EQ(curves.header,
            (std::vector<std::string>{"episode", "reward", "pnl_adj", "bf", "cal", "shape", "cvar",
                                      "hedge_mean", "alpha_mean", "act_std"}));
  const CsvTable runs = read_csv((*dir_ / "a" / "run_log.csv").string());
  EXPECT_EQ(curves.number(2, "pnl_adj"), runs.number(2, "pnl_adj"));
}

TEST(Cli, MalformedConfigExitsTwoWithoutArtifacts) {
  const fs::path dir = scratch("malformed");
  // The parser trips on the closing brace, one line below the missing value.
  std::ofstream(dir / "bad.json") << "{\n  \"seed\": 1,\n  \"beta\": \n}";
  const fs::path out = dir / "out";
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string() + " --out " + out.string(),
                dir / "log"),
            kExitConfig);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(slurp(dir / "log").find("bad.json:4:"), std::string::npos) << slurp(dir / "log");

  EXPECT_EQ(run("train --set filter_rate=0 --out " + out.string(), dir / "log2"), kExitConfig);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run("train --bogus", dir / "log3"), kExitConfig);
}

TEST(Cli, DiagnosticsExitCodes) {
  const fs::path dir = scratch("diag");
  EXPECT_EQ(run("diag wing --out " + (dir / "w").string(), dir / "w.log"), 0) << slurp(dir / "w.log");
  const CsvTable wing = read_csv((dir / "w" / "wing.csv").string());
  EXPECT_LE(wing.number(0, "max_slope"), 1.05);
  EXPECT_EQ(run("diag grid --out " + (dir / "g").string(), dir / "g.log"), 0) << slurp(dir / "g.log");
  EXPECT_EQ(read_csv((dir / "g" / "grid.csv").string()).rows.size(), 6u);
  EXPECT_EQ(run("diag cvar --out " + (dir / "c").string(), dir / "c.log"), 0) << slurp(dir / "c.log");
  EXPECT_EQ(run("diag sens --out " + (dir / "s").string(), dir / "s.log"), 0) << slurp(dir / "s.log");
  EXPECT_EQ(run("diag sens --set s0=0 --out " + (dir / "s0").string(), dir / "s0.log"),
            kExitCheckFailed);
  EXPECT_NE(slurp(dir / "s0.log").find("FAIL"), std::string::npos);
  EXPECT_EQ(run("diag nothing --out " + (dir / "n").string(), dir / "n.log"), kExitConfig);
}

TEST(Cli, PlotDataRejectsMissingOrEmptyRuns) {
  const fs::path dir = scratch("plot_empty");
  EXPECT_EQ(run("plot-data --run " + (dir / "none").string(), dir / "a.log"), kExitConfig);
  const fs::path run_dir = dir / "empty";
  fs::create_directories(run_dir);
  std::ofstream(run_dir / "settings.json") << serialize(RunSettings{});
  std::ofstream(run_dir / "run_log.csv") << joined(kRunLogHeader) << '\n';
  std::ofstream(run_dir / "step_log.csv") << joined(kStepLogHeader) << '\n';
  EXPECT_EQ(run("plot-data --run " + run_dir.string(), dir / "b.log"), kExitConfig);
  EXPECT_FALSE(fs::exists(run_dir / "pnl_hist.csv"));
}

}  // namespace
}  // namespace essvi_mm::cli

#include "essvi_mm/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "essvi_mm/cli/csv.hpp"
#include "essvi_mm/cli/settings.hpp"
#include "essvi_mm/diagnostics.hpp"
#include "essvi_mm/errors.hpp"
#include "essvi_mm/risk.hpp"
#include "essvi_mm/train.hpp"

namespace essvi_mm::cli {

namespace fs = std::filesystem;

const std::vector<std::string> kRunLogHeader = {
    "episode",   "reward_sum",  "pnl_raw",    "pnl_adj",    "bf_mean",
    "cal_mean",  "shape_mean",  "cvar_mean",  "var5_steps", "cvar5_steps",
    "alpha_mean", "hedge_mean", "act_std"};

const std::vector<std::string> kStepLogHeader = {
    "episode", "t",     "spot",  "reward", "pnl_quote", "pnl_hedge", "bf",  "cal",
    "shape",   "cvar",  "alpha", "hedge",  "psi_scale", "rho_shift", "dual"};

namespace {

constexpr int kSensStates = 50;
constexpr int kWingSamples = 1000;
constexpr double kWingK = 50.0;
constexpr int kGridLevels = 3;
constexpr int kHistBins = 50;
constexpr std::size_t kMaxReportedFailures = 20;

RunSettings resolve(const CommonOptions& opts) {
  RunSettings s = load_settings(opts.config_path, opts.overrides);
  if (opts.has_seed) s.seed = opts.seed;
  if (!opts.out_dir.empty()) s.out_dir = opts.out_dir;
  return s;
}

std::string join(const fs::path& dir, const char* name) { return (dir / name).string(); }

void write_run_log(const std::vector<EpisodeRecord>& episodes, const std::string& path) {
  CsvWriter w(kRunLogHeader);
  for (const EpisodeRecord& e : episodes) {
    w.cell(e.episode).cell(e.reward_sum).cell(e.pnl_raw).cell(e.pnl_adj).cell(e.bf_mean);
    w.cell(e.cal_mean).cell(e.shape_mean).cell(e.cvar_mean).cell(e.var5_steps);
    w.cell(e.cvar5_steps).cell(e.alpha_mean).cell(e.hedge_mean).cell(e.act_std);
    w.end_row();
  }
  w.commit(path);
}

void write_step_log(const std::vector<StepRecord>& steps, const std::string& path) {
  CsvWriter w(kStepLogHeader);
  for (const StepRecord& s : steps) {
    w.cell(s.episode).cell(s.t).cell(s.spot).cell(s.reward).cell(s.pnl_quote).cell(s.pnl_hedge);
    w.cell(s.bf).cell(s.cal).cell(s.shape).cell(s.cvar);
    w.cell(s.action.alpha).cell(s.action.hedge).cell(s.action.psi_scale);
    w.cell(s.action.rho_shift).cell(s.action.dual);
    w.end_row();
  }
  w.commit(path);
}

std::string bool_cell(bool b) { return b ? "1" : "0"; }

void add_check(CsvWriter& w, int state, const SensitivityRow& row, const char* name,
               const Check& c) {
  w.cell(state).cell(row.m).cell(row.k).cell(std::string(name)).cell(c.analytic).cell(c.fd);
  w.cell(c.rel_err).cell(bool_cell(c.claimed_zero)).cell(bool_cell(c.ok));
  w.end_row();
}

int diag_sens(const RunSettings& s, const fs::path& out) {
  std::mt19937_64 rng(s.seed);
  CsvWriter sens({"state", "m", "k", "quantity", "analytic", "fd", "rel_err", "claimed_zero", "ok"});
  CsvWriter mono({"state", "m", "j", "alpha_lo", "alpha_hi", "buy_lo", "buy_hi", "sell_lo",
                  "sell_hi", "sell_checked", "ok"});
  const std::vector<double> alphas = {0.001, 0.005, 0.01, 0.02};
  std::vector<std::string> failures;
  bool pass = true;
  int attempts = 0;
  for (int i = 0; i < kSensStates; ++i) {
    SensitivityReport rep;
    MarketState state;
    while (true) {
      if (++attempts > 100 * kSensStates) {
        std::cerr << "diag sens: could not draw interior states\n";
        return kExitCheckFailed;
      }
      auto [st, action] = random_interior_state(s.env, rng);
      try {
        rep = quote_sensitivities(st, action, s.env);
      } catch (const ClampActive&) {
        continue;
      }
      state = std::move(st);
      break;
    }
    const MonotonicityReport m = intensity_monotonicity_check(state, s.env, alphas);
    pass = pass && rep.pass && m.pass;
    for (const SensitivityRow& row : rep.rows) {
      const std::pair<const char*, const Check*> checks[] = {
          {"d_mid_d_alpha", &row.d_mid_d_alpha},
          {"d_ask_d_alpha", &row.d_ask_d_alpha},
          {"d_bid_d_alpha", &row.d_bid_d_alpha},
          {"d_mid_d_rho_shift", &row.d_mid_d_rho_shift},
          {"d_mid_d_psi_scale", &row.d_mid_d_psi_scale},
          {"d_mid_d_dual", &row.d_mid_d_dual},
          {"d_lambda_buy_d_alpha", &row.d_lambda_buy_d_alpha},
          {"d_lambda_sell_d_alpha", &row.d_lambda_sell_d_alpha},
          {"d_delta_d_rho_shift", &row.d_delta_d_rho_shift},
          {"d_delta_d_psi_scale", &row.d_delta_d_psi_scale},
          {"d_vega_d_rho_shift", &row.d_vega_d_rho_shift},
          {"d_vega_d_psi_scale", &row.d_vega_d_psi_scale}};
      for (const auto& [name, c] : checks) {
        add_check(sens, i, row, name, *c);
        if (!c->ok) {
          std::ostringstream msg;
          msg << "state " << i << " m=" << row.m << " k=" << row.k << " " << name
              << " analytic=" << format_double(c->analytic) << " fd=" << format_double(c->fd);
          failures.push_back(msg.str());
        }
      }
    }
    if (!rep.signs_ok) failures.push_back("state " + std::to_string(i) + ": sign pattern violated");
    for (const MonotonicityRow& r : m.rows) {
      mono.cell(i).cell(r.m).cell(r.j).cell(r.alpha_lo).cell(r.alpha_hi).cell(r.buy_lo);
      mono.cell(r.buy_hi).cell(r.sell_lo).cell(r.sell_hi).cell(bool_cell(r.sell_checked));
      mono.cell(bool_cell(r.ok)).end_row();
      if (!r.ok) {
        std::ostringstream msg;
        msg << "state " << i << " m=" << r.m << " j=" << r.j << " alpha " << r.alpha_lo << "->"
            << r.alpha_hi << ": intensities not strictly decreasing";
        failures.push_back(msg.str());
      }
    }
  }
  sens.commit(join(out, "sens.csv"));
  mono.commit(join(out, "monotonicity.csv"));
  for (std::size_t i = 0; i < std::min(failures.size(), kMaxReportedFailures); ++i) {
    std::cerr << "FAIL " << failures[i] << '\n';
  }
  if (failures.size() > kMaxReportedFailures) {
    std::cerr << "... " << failures.size() - kMaxReportedFailures << " more failures\n";
  }
  std::cout << "diag sens: " << (pass ? "pass" : "fail") << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

int diag_grid(const fs::path& out) {
  const GridReport rep = grid_consistency_experiment(GridSpec{}, kGridLevels);
  CsvWriter w({"test", "level", "step", "clean", "floor_or_bound", "ratio_or_rate", "violated",
               "ok"});
  for (std::size_t l = 0; l < rep.bf.size(); ++l) {
    const BfLevel& b = rep.bf[l];
    w.cell(std::string("bf")).cell(static_cast<int>(l)).cell(b.dk).cell(b.bf_clean).cell(b.floor);
    w.cell(b.ratio).cell(b.bf_injected).cell(bool_cell(b.detected)).end_row();
  }
  for (std::size_t l = 0; l < rep.cal.size(); ++l) {
    const CalLevel& c = rep.cal[l];
    w.cell(std::string("cal")).cell(static_cast<int>(l)).cell(c.dt).cell(c.cal_clean_hard);
    w.cell(c.soft_bound).cell(c.pair_over_dt).cell(c.cal_swap_pair).cell(bool_cell(c.ok)).end_row();
  }
  w.commit(join(out, "grid.csv"));
  if (!rep.bf_rate_ok) std::cerr << "FAIL bf convergence ratio outside its band\n";
  if (!rep.bf_detect_ok) std::cerr << "FAIL injected concavity not detected\n";
  if (!rep.cal_ok) std::cerr << "FAIL calendar checks\n";
  std::cout << "diag grid: " << (rep.pass ? "pass" : "fail") << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

int diag_wing(const RunSettings& s, const fs::path& out) {
  std::mt19937_64 rng(s.seed);
  const WingReport rep = wing_bound_sweep(kWingSamples, kWingK, s.env.caps, rng);
  CsvWriter w({"samples", "k_eval", "max_slope", "bound", "pass"});
  w.cell(rep.samples).cell(rep.k_eval).cell(rep.max_slope).cell(rep.bound);
  w.cell(bool_cell(rep.pass)).end_row();
  w.commit(join(out, "wing.csv"));
  if (!rep.pass) {
    std::cerr << "FAIL max slope " << format_double(rep.max_slope) << " exceeds "
              << format_double(rep.bound) << '\n';
  }
  std::cout << "diag wing: max slope " << rep.max_slope << ", " << (rep.pass ? "pass" : "fail")
            << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

int diag_cvar(const RunSettings& s, const fs::path& out) {
  std::mt19937_64 rng(s.seed);
  const CvarGradReport rep = cvar_gradient_check(s.env.cvar, CvarGradSpec{}, rng);
  CsvWriter w({"quantity", "value"});
  const std::pair<const char*, double> rows[] = {
      {"pathwise", rep.pathwise},         {"crn_fd", rep.crn_fd},
      {"rel_err", rep.rel_err},           {"zero_noise_grad", rep.zero_noise_grad},
      {"grad_tau_1e-2", rep.grad_tau_coarse}, {"grad_tau_1e-3", rep.grad_tau_fine},
      {"crn_var", rep.crn_var},           {"indep_var", rep.indep_var},
      {"pass", rep.pass ? 1.0 : 0.0}};
  for (const auto& [name, v] : rows) w.cell(std::string(name)).cell(v).end_row();
  w.commit(join(out, "cvar.csv"));
  if (!rep.pass) {
    std::cerr << "FAIL pathwise " << format_double(rep.pathwise) << " vs CRN "
              << format_double(rep.crn_fd) << ", variance ratio "
              << format_double(rep.indep_var / rep.crn_var) << '\n';
  }
  std::cout << "diag cvar: " << (rep.pass ? "pass" : "fail") << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

Action action_from_row(const CsvTable& t, std::size_t row) {
  Action a;
  a.alpha = t.number(row, "alpha");
  a.hedge = t.number(row, "hedge");
  a.psi_scale = t.number(row, "psi_scale");
  a.rho_shift = t.number(row, "rho_shift");
  a.dual = t.number(row, "dual");
  return a;
}

}  // namespace

int cmd_train(const CommonOptions& opts) {
  RunSettings s;
  try {
    s = resolve(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path out(s.out_dir);
  fs::create_directories(out);
  write_file_atomic(join(out, "settings.json"), serialize(s));

  TrainResult result;
  try {
    result = train(s.env, s.agent, s.seed, [](const EpisodeRecord& e) {
      std::cerr << "episode " << e.episode << ": reward " << e.reward_sum << ", pnl_adj "
                << e.pnl_adj << ", bf " << e.bf_mean << ", cal " << e.cal_mean << '\n';
    });
  } catch (const NonFiniteGradient& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kExitNonFinite;
  }
  std::cerr << "warm start: " << result.warm.steps_run << " steps, loss "
            << result.warm.initial_loss << " -> " << result.warm.final_loss << ", arb "
            << result.warm.final_arb << '\n';
  write_run_log(result.episodes, join(out, "run_log.csv"));
  write_step_log(result.steps, join(out, "step_log.csv"));
  return kExitOk;
}

int cmd_diag(const std::string& which, const CommonOptions& opts) {
  RunSettings s;
  try {
    s = resolve(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path out(s.out_dir);
  fs::create_directories(out);
  if (which == "sens") return diag_sens(s, out);
  if (which == "grid") return diag_grid(out);
  if (which == "wing") return diag_wing(s, out);
  if (which == "cvar") return diag_cvar(s, out);
  std::cerr << "unknown diagnostic '" << which << "' (expected sens, grid, wing or cvar)\n";
  return kExitConfig;
}

int cmd_plot_data(const std::string& run_dir, const std::string& out_dir) {
  const fs::path run(run_dir);
  const fs::path out(out_dir.empty() ? run_dir : out_dir);
  RunSettings s;
  CsvTable run_log;
  CsvTable step_log;
  try {
    std::ifstream in(run / "settings.json", std::ios::binary);
    if (!in) throw std::runtime_error("missing " + join(run, "settings.json"));
    std::ostringstream text;
    text << in.rdbuf();
    s = parse_settings(text.str(), join(run, "settings.json"));
    run_log = read_csv(join(run, "run_log.csv"));
    step_log = read_csv(join(run, "step_log.csv"));
    if (step_log.rows.empty()) throw std::runtime_error("step_log.csv has no steps");
  } catch (const std::exception& e) {
    std::cerr << "plot-data: " << e.what() << '\n';
    return kExitConfig;
  }
  fs::create_directories(out);

  ScenarioBatch pnl;
  for (std::size_t i = 0; i < step_log.rows.size(); ++i) {
    pnl.pnl.push_back(step_log.number(i, "pnl_quote") + step_log.number(i, "pnl_hedge"));
  }
  const double var5 = -empirical_var(pnl, 0.05);
  const double cvar5 = -empirical_cvar_exact(pnl, 0.05);
  const auto [lo_it, hi_it] = std::minmax_element(pnl.pnl.begin(), pnl.pnl.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / kHistBins;
  std::vector<long long> counts(kHistBins, 0);
  for (double x : pnl.pnl) {
    int b = width > 0.0 ? static_cast<int>((x - lo) / width) : 0;
    counts[static_cast<std::size_t>(std::clamp(b, 0, kHistBins - 1))] += 1;
  }
  CsvWriter hist({"bin_lo", "bin_hi", "count", "var5", "cvar5"});
  for (int b = 0; b < kHistBins; ++b) {
    const double edge_hi = b + 1 == kHistBins ? hi : lo + width * (b + 1);
    hist.cell(lo + width * b).cell(edge_hi).cell(counts[static_cast<std::size_t>(b)]);
    hist.cell(var5).cell(cvar5).end_row();
  }
  hist.commit(join(out, "pnl_hist.csv"));

  const std::size_t last = step_log.rows.size() - 1;
  std::mt19937_64 rng(s.seed);
  MarketState state = reset(s.env, rng);
  state.spot = step_log.number(last, "spot");
  const QuoteGrid q = quote_grid(state, action_from_row(step_log, last), s.env);
  CsvWriter surf({"maturity", "k", "true_vol", "quoted_vol"});
  for (std::size_t m = 0; m < s.env.maturities.size(); ++m) {
    const double t = std::max(s.env.maturities[m], s.env.caps.t_min);
    for (std::size_t j = 0; j < s.env.k_grid.size(); ++j) {
      const double w = essvi_total_variance(state.latent.slices[m], s.env.k_grid[j]);
      surf.cell(s.env.maturities[m]).cell(s.env.k_grid[j]).cell(implied_vol(w, t, s.env.caps));
      surf.cell(q.vol(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j))).end_row();
    }
  }
  surf.commit(join(out, "surface_compare.csv"));

  CsvWriter curves({"episode", "reward", "pnl_adj", "bf", "cal", "shape", "cvar", "hedge_mean",
                    "alpha_mean", "act_std"});
  for (std::size_t i = 0; i < run_log.rows.size(); ++i) {
    curves.cell(run_log.rows[i][static_cast<std::size_t>(run_log.column("episode"))]);
    for (const char* c : {"reward_sum", "pnl_adj", "bf_mean", "cal_mean", "shape_mean",
                          "cvar_mean", "hedge_mean", "alpha_mean", "act_std"}) {
      curves.cell(run_log.number(i, c));
    }
    curves.end_row();
  }
  curves.commit(join(out, "training_curves.csv"));
  return kExitOk;
}

}  // namespace essvi_mm::cli

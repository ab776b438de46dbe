#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "essvi_mm/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace essvi_mm::cli;
  CLI::App app{"eSSVI option market-making laboratory"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string which;
  std::string run_dir;
  std::string plot_out;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "flat JSON settings file");
    cmd->add_option("--seed", opts.seed, "random seed")->each([&](const std::string&) {
      opts.has_seed = true;
    });
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--set", opts.overrides, "key=value settings override")->take_all();
  };

  CLI::App* train = app.add_subcommand("train", "warm-start and train the agent");
  add_common(train);
  CLI::App* diag = app.add_subcommand("diag", "run a numerical diagnostic");
  diag->add_option("which", which, "sens, grid, wing or cvar")->required();
  add_common(diag);
  CLI::App* plot = app.add_subcommand("plot-data", "derive plot series from a training run");
  plot->add_option("--run", run_dir, "training output directory")->required();
  plot->add_option("--out", plot_out, "output directory (defaults to the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(opts);
    if (*diag) return cmd_diag(which, opts);
    return cmd_plot_data(run_dir, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}

#pragma once

#include <string>
#include <vector>

namespace essvi_mm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonFinite = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;  // empty keeps the settings value
  bool has_seed = false;
  unsigned long long seed = 0;
};

extern const std::vector<std::string> kRunLogHeader;
extern const std::vector<std::string> kStepLogHeader;

// Each returns a process exit code and reports problems on stderr.
int cmd_train(const CommonOptions& opts);
int cmd_diag(const std::string& which, const CommonOptions& opts);
int cmd_plot_data(const std::string& run_dir, const std::string& out_dir);

}  // namespace essvi_mm::cli

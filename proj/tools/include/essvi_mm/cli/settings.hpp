#pragma once

// Run settings: the effective environment and agent configuration plus seed and
// output directory, stored as one flat JSON object with snake_case keys.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "essvi_mm/agent.hpp"
#include "essvi_mm/env.hpp"

namespace essvi_mm::cli {

struct RunSettings {
  EnvConfig env = EnvConfig::defaults();
  AgentConfig agent;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  friend bool operator==(const RunSettings& a, const RunSettings& b);
};

// Configuration failure. The message is prefixed with source:line where known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize(const RunSettings& s);

// Parses `text` on top of the defaults. `source` names the input in messages.
// Throws ConfigError on malformed JSON, unknown keys, wrong types and failed
// validation.
RunSettings parse_settings(const std::string& text, const std::string& source = "<settings>");

// Applies key=value overrides; the value is read as JSON, falling back to a
// bare string.
void apply_overrides(RunSettings& s, const std::vector<std::string>& overrides);

// Loads the file (or defaults when `path` is empty), applies overrides and
// validates the result.
RunSettings load_settings(const std::string& path, const std::vector<std::string>& overrides);

// Every settings key in serialization order.
std::vector<std::string> settings_keys();

}  // namespace essvi_mm::cli

#include "essvi_mm/cli/settings.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>
#include <variant>

#include <nlohmann/json.hpp>

#include "essvi_mm/cli/csv.hpp"
#include "essvi_mm/errors.hpp"

namespace essvi_mm::cli {

namespace {

using Json = nlohmann::json;
using FieldPtr = std::variant<double*, int*, bool*, std::vector<double>*, std::uint64_t*,
                              std::string*>;

struct Field {
  const char* key;
  FieldPtr ptr;
};

std::vector<Field> fields(RunSettings& s) {
  EnvConfig& e = s.env;
  AgentConfig& a = s.agent;
  return {
      {"seed", &s.seed},
      {"out_dir", &s.out_dir},
      {"maturities", &e.maturities},
      {"k_grid", &e.k_grid},
      {"steps_per_episode", &e.steps_per_episode},
      {"dt", &e.dt},
      {"spot0", &e.spot0},
      {"heston_mu", &e.heston.mu},
      {"heston_kappa", &e.heston.kappa},
      {"heston_v_bar", &e.heston.v_bar},
      {"heston_xi", &e.heston.xi},
      {"heston_rho_sv", &e.heston.rho_sv},
      {"heston_v0", &e.heston.v0},
      {"lambda0", &e.intensity.lambda0},
      {"beta", &e.intensity.beta},
      {"kappa_k", &e.intensity.kappa_k},
      {"s0", &e.intensity.s0},
      {"alpha_max", &e.bounds.alpha_max},
      {"psi_scale_min", &e.bounds.psi_scale_min},
      {"psi_scale_max", &e.bounds.psi_scale_max},
      {"rho_shift_max", &e.bounds.rho_shift_max},
      {"lambda_shape_max", &e.lambda_shape_max},
      {"lambda_arb_max", &e.lambda_arb_max},
      {"lambda_cvar", &e.lambda_cvar},
      {"filter_rate", &e.filter_rate},
      {"latent_rho", &e.latent_rho},
      {"latent_psi_frac", &e.latent_psi_frac},
      {"latent_theta_slope", &e.latent_theta_slope},
      {"cvar_noise_scale", &e.cvar_noise_scale},
      {"eps_psi", &e.caps.eps_psi},
      {"tau_max", &e.caps.tau_max},
      {"sigma_min", &e.caps.sigma_min},
      {"t_min", &e.caps.t_min},
      {"eps_rho", &e.caps.eps_rho},
      {"eps_num", &e.caps.eps_num},
      {"log_theta_bound", &e.caps.log_theta_bound},
      {"tau_arb", &e.penalty.tau_arb},
      {"eps_norm", &e.penalty.eps_norm},
      {"hard_hinge", &e.penalty.hard_hinge},
      {"hinge_shift", &e.penalty.hinge_shift},
      {"cvar_tail_fraction", &e.cvar.tail_fraction},
      {"tau_cvar", &e.cvar.tau_cvar},
      {"n_scenarios", &e.cvar.n_scenarios},
      {"hidden", &a.hidden},
      {"init_log_std", &a.init_log_std},
      {"log_std_min", &a.log_std_min},
      {"log_std_max", &a.log_std_max},
      {"gamma", &a.gamma},
      {"gae_lambda", &a.gae_lambda},
      {"clip_eps", &a.clip_eps},
      {"value_coef", &a.value_coef},
      {"entropy_coef", &a.entropy_coef},
      {"lr", &a.lr},
      {"adam_beta1", &a.adam_beta1},
      {"adam_beta2", &a.adam_beta2},
      {"adam_eps", &a.adam_eps},
      {"epochs", &a.epochs},
      {"minibatch", &a.minibatch},
      {"max_grad_norm", &a.max_grad_norm},
      {"episodes", &a.episodes},
      {"warm_steps", &a.warm_steps},
      {"warm_lr", &a.warm_lr},
      {"warm_loss_tol", &a.warm_loss_tol},
      {"warm_arb_tol", &a.warm_arb_tol},
      {"warm_entropy_coef", &a.warm_entropy_coef},
      {"warm_reset_states", &a.warm_reset_states},
      {"warm_rollouts", &a.warm_rollouts},
      {"warm_rollout_len", &a.warm_rollout_len},
  };
}

std::string quoted(const std::string& s) { return Json(s).dump(); }

std::string render(const FieldPtr& ptr) {
  struct Visitor {
    std::string operator()(const double* v) const { return format_double(*v); }
    std::string operator()(const int* v) const { return std::to_string(*v); }
    std::string operator()(const bool* v) const { return *v ? "true" : "false"; }
    std::string operator()(const std::uint64_t* v) const { return std::to_string(*v); }
    std::string operator()(const std::string* v) const { return quoted(*v); }
    std::string operator()(const std::vector<double>* v) const {
      std::string out = "[";
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (i > 0) out += ", ";
        out += format_double((*v)[i]);
      }
      return out + "]";
    }
  };
  return std::visit(Visitor{}, ptr);
}

// Assigns `value` to the field; returns an error description or empty on success.
std::string assign(const FieldPtr& ptr, const Json& value) {
  struct Visitor {
    const Json& v;
    std::string operator()(double* out) const {
      if (!v.is_number()) return "expected a number";
      *out = v.get<double>();
      return {};
    }
    std::string operator()(int* out) const {
      if (!v.is_number_integer()) return "expected an integer";
      const auto x = v.get<long long>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        return "integer out of range";
      }
      *out = static_cast<int>(x);
      return {};
    }
    std::string operator()(bool* out) const {
      if (!v.is_boolean()) return "expected true or false";
      *out = v.get<bool>();
      return {};
    }
    std::string operator()(std::uint64_t* out) const {
      if (!v.is_number_unsigned()) return "expected a non-negative integer";
      *out = v.get<std::uint64_t>();
      return {};
    }
    std::string operator()(std::string* out) const {
      if (!v.is_string()) return "expected a string";
      *out = v.get<std::string>();
      return {};
    }
    std::string operator()(std::vector<double>* out) const {
      if (!v.is_array()) return "expected an array of numbers";
      std::vector<double> xs;
      for (const Json& x : v) {
        if (!x.is_number()) return "expected an array of numbers";
        xs.push_back(x.get<double>());
      }
      *out = std::move(xs);
      return {};
    }
  };
  return std::visit(Visitor{value}, ptr);
}

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

// Line of the first `"key":` in the text, or 0 if absent.
int line_of_key(const std::string& text, const std::string& key) {
  const std::string needle = quoted(key);
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    std::size_t after = pos + needle.size();
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == ':') return line_of_offset(text, pos);
    pos += needle.size();
  }
  return 0;
}

std::string where(const std::string& source, int line) {
  return line > 0 ? source + ":" + std::to_string(line) : source;
}

Field* find_field(std::vector<Field>& fs, const std::string& key) {
  for (Field& f : fs) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

void validate(const RunSettings& s, const std::string& source, const std::string& text) {
  try {
    if (s.out_dir.empty()) throw InvalidConfig("out_dir", "must not be empty");
    s.env.validate();
    s.agent.validate();
  } catch (const InvalidConfig& e) {
    throw ConfigError(where(source, line_of_key(text, e.key())) + ": " + e.what());
  }
}

RunSettings parse_fields(const std::string& text, const std::string& source);

}  // namespace

bool operator==(const RunSettings& a, const RunSettings& b) { return serialize(a) == serialize(b); }

std::vector<std::string> settings_keys() {
  RunSettings s;
  std::vector<std::string> keys;
  for (const Field& f : fields(s)) keys.emplace_back(f.key);
  return keys;
}

std::string serialize(const RunSettings& settings) {
  RunSettings s = settings;
  const std::vector<Field> fs = fields(s);
  std::string out = "{\n";
  for (std::size_t i = 0; i < fs.size(); ++i) {
    out += "  " + quoted(fs[i].key) + ": " + render(fs[i].ptr);
    out += i + 1 < fs.size() ? ",\n" : "\n";
  }
  return out + "}\n";
}

namespace {

RunSettings parse_fields(const std::string& text, const std::string& source) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ConfigError(where(source, line_of_offset(text, byte)) + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(where(source, 1) + ": expected a JSON object");
  RunSettings s;
  std::vector<Field> fs = fields(s);
  for (const auto& [key, value] : doc.items()) {
    Field* f = find_field(fs, key);
    const int line = line_of_key(text, key);
    if (f == nullptr) throw ConfigError(where(source, line) + ": unknown key '" + key + "'");
    const std::string err = assign(f->ptr, value);
    if (!err.empty()) throw ConfigError(where(source, line) + ": " + key + ": " + err);
  }
  return s;
}

}  // namespace

RunSettings parse_settings(const std::string& text, const std::string& source) {
  RunSettings s = parse_fields(text, source);
  validate(s, source, text);
  return s;
}

void apply_overrides(RunSettings& s, const std::vector<std::string>& overrides) {
  std::vector<Field> fs = fields(s);
  for (const std::string& o : overrides) {
    const std::size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set " + o + ": expected key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    Field* f = find_field(fs, key);
    if (f == nullptr) throw ConfigError("--set " + o + ": unknown key '" + key + "'");
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    const std::string err = assign(f->ptr, value);
    if (!err.empty()) throw ConfigError("--set " + o + ": " + err);
  }
}

RunSettings load_settings(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  std::string source = "<defaults>";
  RunSettings s;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
    source = path;
    s = parse_fields(text, source);
  }
  apply_overrides(s, overrides);
  try {
    validate(s, source, text);
  } catch (const ConfigError& e) {
    if (overrides.empty()) throw;
    throw ConfigError(std::string(e.what()) + " (after --set overrides)");
  }
  return s;
}

}  // namespace essvi_mm::cli

#include "essvi_mm/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "essvi_mm/errors.hpp"

namespace essvi_mm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw InvalidConfig(key, what);
}

// Backpropagates output gradients of the three heads into grad.
void backprop_heads(const PolicyParams& p, const PolicyEval& e, const Eigen::VectorXd& d_mean,
                    const Eigen::VectorXd& d_log_std, double d_value, const AgentConfig& cfg,
                    PolicyParams* grad) {
  if (d_mean.size() > 0) mlp_backward(p.actor_mean, e.mean_cache, d_mean, &grad->actor_mean);
  if (d_log_std.size() > 0) {
    Eigen::VectorXd d_raw = d_log_std;
    for (Eigen::Index i = 0; i < d_raw.size(); ++i) {
      const double r = e.log_std_raw(i);
      if (r < cfg.log_std_min || r > cfg.log_std_max) d_raw(i) = 0.0;
    }
    mlp_backward(p.actor_logstd, e.logstd_cache, d_raw, &grad->actor_logstd);
  }
  if (d_value != 0.0) {
    Eigen::VectorXd dv(1);
    dv(0) = d_value;
    mlp_backward(p.critic, e.critic_cache, dv, &grad->critic);
  }
}

RawAction vec_to_raw(const Eigen::VectorXd& v) {
  RawAction z{};
  for (int i = 0; i < kActionDim; ++i) z[static_cast<std::size_t>(i)] = v(i);
  return z;
}

}  // namespace

void AgentConfig::validate() const {
  require(hidden > 0, "hidden", "must be positive");
  require(log_std_min < log_std_max, "log_std_min", "must be below log_std_max");
  require(std::isfinite(init_log_std), "init_log_std", "must be finite");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma", "must lie in [0, 1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda", "must lie in [0, 1]");
  require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps", "must lie in (0, 1)");
  require(value_coef >= 0.0, "value_coef", "must be non-negative");
  require(entropy_coef >= 0.0, "entropy_coef", "must be non-negative");
  require(lr > 0.0, "lr", "must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(minibatch > 0, "minibatch", "must be positive");
  require(max_grad_norm > 0.0, "max_grad_norm", "must be positive");
  require(episodes > 0, "episodes", "must be positive");
  require(warm_steps >= 0, "warm_steps", "must be non-negative");
  require(warm_lr > 0.0, "warm_lr", "must be positive");
  require(warm_loss_tol >= 0.0, "warm_loss_tol", "must be non-negative");
  require(warm_arb_tol >= 0.0, "warm_arb_tol", "must be non-negative");
  require(warm_entropy_coef >= 0.0, "warm_entropy_coef", "must be non-negative");
  require(warm_reset_states >= 1, "warm_reset_states", "must be at least 1");
  require(warm_rollouts >= 0, "warm_rollouts", "must be non-negative");
  require(warm_rollout_len >= 0, "warm_rollout_len", "must be non-negative");
}

Eigen::Index PolicyParams::num_params() const {
  return actor_mean.num_params() + actor_logstd.num_params() + critic.num_params();
}

PolicyParams PolicyParams::zeros_like() const {
  return {actor_mean.zeros_like(), actor_logstd.zeros_like(), critic.zeros_like()};
}

std::vector<double> PolicyParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(num_params()));
  actor_mean.flatten_into(flat);
  actor_logstd.flatten_into(flat);
  critic.flatten_into(flat);
  return flat;
}

void PolicyParams::unflatten(const std::vector<double>& flat) {
  if (static_cast<Eigen::Index>(flat.size()) != num_params()) {
    throw ShapeMismatch("flat parameter vector has the wrong length");
  }
  std::size_t offset = 0;
  actor_mean.unflatten_from(flat, &offset);
  actor_logstd.unflatten_from(flat, &offset);
  critic.unflatten_from(flat, &offset);
}

bool PolicyParams::all_finite() const {
  return actor_mean.all_finite() && actor_logstd.all_finite() && critic.all_finite();
}

PolicyParams make_policy(const AgentConfig& cfg, std::mt19937_64& rng) {
  const int h = cfg.hidden;
  PolicyParams p;
  p.actor_mean = make_mlp({kFeatureDim, h, h, kActionDim}, rng, 1.0, 0.01);
  p.actor_logstd = make_mlp({kFeatureDim, h, h, kActionDim}, rng, 1.0, 0.01);
  p.actor_logstd.layers.back().bias.setConstant(cfg.init_log_std);
  p.critic = make_mlp({kFeatureDim, h, h, 1}, rng, 1.0, 1.0);
  return p;
}

Eigen::VectorXd to_input(const FeatureVector& f) {
  Eigen::VectorXd x(kFeatureDim);
  for (int i = 0; i < kFeatureDim; ++i) x(i) = f[static_cast<std::size_t>(i)];
  return x;
}

PolicyEval evaluate_policy(const PolicyParams& p, const FeatureVector& f, const AgentConfig& cfg) {
  const Eigen::VectorXd x = to_input(f);
  PolicyEval e;
  e.mean = mlp_forward(p.actor_mean, x, &e.mean_cache);
  e.log_std_raw = mlp_forward(p.actor_logstd, x, &e.logstd_cache);
  e.log_std = e.log_std_raw.cwiseMax(cfg.log_std_min).cwiseMin(cfg.log_std_max);
  e.value = mlp_forward(p.critic, x, &e.critic_cache)(0);
  return e;
}

Action squash(const RawAction& z, const ActionBounds& b) {
  Action a;
  a.alpha = b.alpha_max * logistic(z[0]);
  a.hedge = logistic(z[1]);
  a.psi_scale = b.psi_scale_min + (b.psi_scale_max - b.psi_scale_min) * logistic(z[2]);
  a.rho_shift = b.rho_shift_max * std::tanh(z[3]);
  a.dual = softplus(z[4]);
  return a;
}

RawAction squash_jacobian(const RawAction& z, const ActionBounds& b) {
  const auto dlogistic = [](double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
  };
  const double th = std::tanh(z[3]);
  return {b.alpha_max * dlogistic(z[0]), dlogistic(z[1]),
          (b.psi_scale_max - b.psi_scale_min) * dlogistic(z[2]), b.rho_shift_max * (1.0 - th * th),
          logistic(z[4])};
}

GaussianStats log_prob_and_entropy(const PolicyParams& p, const FeatureVector& f, const RawAction& z,
                                   const AgentConfig& cfg, PolicyParams* grad_log_prob,
                                   PolicyParams* grad_entropy) {
  const PolicyEval e = evaluate_policy(p, f, cfg);
  GaussianStats s;
  Eigen::VectorXd d_mean(kActionDim);
  Eigen::VectorXd d_ls(kActionDim);
  for (int i = 0; i < kActionDim; ++i) {
    const double sigma = std::exp(e.log_std(i));
    const double u = (z[static_cast<std::size_t>(i)] - e.mean(i)) / sigma;
    s.log_prob += -0.5 * u * u - e.log_std(i) - 0.5 * kLog2Pi;
    s.entropy += 0.5 * (kLog2Pi + 1.0) + e.log_std(i);
    d_mean(i) = u / sigma;
    d_ls(i) = u * u - 1.0;
  }
  if (grad_log_prob) backprop_heads(p, e, d_mean, d_ls, 0.0, cfg, grad_log_prob);
  if (grad_entropy) {
    backprop_heads(p, e, Eigen::VectorXd(), Eigen::VectorXd::Ones(kActionDim), 0.0, cfg,
                   grad_entropy);
  }
  return s;
}

RawAction sample_raw_action(const PolicyEval& eval, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RawAction z{};
  for (int i = 0; i < kActionDim; ++i) {
    z[static_cast<std::size_t>(i)] = eval.mean(i) + std::exp(eval.log_std(i)) * normal(rng);
  }
  return z;
}

double value_error(const PolicyParams& p, const FeatureVector& f, double target,
                   PolicyParams* grad) {
  MlpCache cache;
  const double v = mlp_forward(p.critic, to_input(f), &cache)(0);
  const double diff = v - target;
  if (grad) {
    Eigen::VectorXd dv(1);
    dv(0) = 2.0 * diff;
    mlp_backward(p.critic, cache, dv, &grad->critic);
  }
  return diff * diff;
}

double warm_start_loss(const PolicyParams& p, const std::vector<FeatureVector>& states,
                       const Action& anchor, const ActionBounds& bounds, const AgentConfig& cfg,
                       PolicyParams* grad) {
  if (states.empty()) return 0.0;
  const double n = static_cast<double>(states.size());
  const auto target = anchor.as_array();
  double loss = 0.0;
  for (const auto& f : states) {
    const PolicyEval e = evaluate_policy(p, f, cfg);
    const RawAction mu = vec_to_raw(e.mean);
    const auto a = squash(mu, bounds).as_array();
    const RawAction jac = squash_jacobian(mu, bounds);
    Eigen::VectorXd d_mean(kActionDim);
    double entropy = 0.0;
    for (int i = 0; i < kActionDim; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double diff = a[k] - target[k];
      loss += diff * diff / n;
      d_mean(i) = 2.0 * diff * jac[k] / n;
      entropy += 0.5 * (kLog2Pi + 1.0) + e.log_std(i);
    }
    loss -= cfg.warm_entropy_coef * entropy / n;
    if (grad) {
      Eigen::VectorXd d_ls;
      if (cfg.warm_entropy_coef != 0.0) {
        d_ls = Eigen::VectorXd::Constant(kActionDim, -cfg.warm_entropy_coef / n);
      }
      backprop_heads(p, e, d_mean, d_ls, 0.0, cfg, grad);
    }
  }
  return loss;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (grad.size() != params.size()) throw ShapeMismatch("gradient and parameters differ in length");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradient("gradient contains NaN or Inf");
    sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteGradient("gradient norm overflowed");
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

std::vector<FeatureVector> warm_start_states(const EnvConfig& env_cfg, const AgentConfig& cfg,
                                             const Action& anchor, std::mt19937_64& rng) {
  std::vector<FeatureVector> states;
  MarketMakingEnv env(env_cfg, rng());
  for (int i = 0; i < cfg.warm_reset_states; ++i) states.push_back(env.reset());
  for (int r = 0; r < cfg.warm_rollouts; ++r) {
    env.reset();
    for (int t = 0; t < cfg.warm_rollout_len && !env.done(); ++t) {
      states.push_back(env.step(anchor).features);
    }
  }
  return states;
}

double policy_mean_arb(const PolicyParams& p, const EnvConfig& env_cfg, const AgentConfig& cfg) {
  std::mt19937_64 unused(0);
  const MarketState s = reset(env_cfg, unused);
  const PolicyEval e = evaluate_policy(p, features(s, env_cfg), cfg);
  const Action a = clamp_action(squash(vec_to_raw(e.mean), env_cfg.bounds), env_cfg.bounds);
  const EssviSurface quoted = deform(s.estimate, a.psi_scale, a.rho_shift, env_cfg.caps);
  const ArbPenalties pen = surface_penalties(quoted, s.spot, env_cfg);
  return pen.bf + pen.cal;
}

WarmStartReport warm_start(PolicyParams& p, const EnvConfig& env_cfg, const Action& anchor,
                           int steps, const AgentConfig& cfg, std::mt19937_64& rng) {
  WarmStartReport report;
  const std::vector<FeatureVector> states = warm_start_states(env_cfg, cfg, anchor, rng);
  report.initial_loss = warm_start_loss(p, states, anchor, env_cfg.bounds, cfg);
  double loss = report.initial_loss;
  AdamState adam;
  std::vector<double> flat = p.flatten();
  for (int it = 0; it < steps; ++it) {
    if (loss <= cfg.warm_loss_tol && policy_mean_arb(p, env_cfg, cfg) <= cfg.warm_arb_tol) {
      report.early_stopped = true;
      break;
    }
    PolicyParams grad = p.zeros_like();
    warm_start_loss(p, states, anchor, env_cfg.bounds, cfg, &grad);
    std::vector<double> g = grad.flatten();
    clip_grad_norm(g, std::numeric_limits<double>::infinity());
    adam_step(flat, g, adam, cfg.warm_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    p.unflatten(flat);
    ++report.steps_run;
    loss = warm_start_loss(p, states, anchor, env_cfg.bounds, cfg);
  }
  report.final_loss = loss;
  report.final_arb = policy_mean_arb(p, env_cfg, cfg);
  return report;
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double last_value, double gamma, double lam) {
  if (rewards.size() != values.size()) throw ShapeMismatch("rewards and values differ in length");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = (i + 1 < n) ? values[i + 1] : last_value;
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lam * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
}

PpoTerms ppo_objective(const PolicyParams& p, const Trajectory& batch,
                       const std::vector<std::size_t>& indices, const AgentConfig& cfg,
                       PolicyParams* grad) {
  std::vector<std::size_t> all;
  const std::vector<std::size_t>* idx = &indices;
  if (indices.empty()) {
    all.resize(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    idx = &all;
  }
  PpoTerms terms;
  if (idx->empty()) return terms;
  const double n = static_cast<double>(idx->size());
  for (std::size_t i : *idx) {
    const PolicyEval e = evaluate_policy(p, batch.features[i], cfg);
    const RawAction& z = batch.raw_actions[i];
    double log_prob = 0.0;
    double entropy = 0.0;
    Eigen::VectorXd u(kActionDim);
    Eigen::VectorXd sigma(kActionDim);
    for (int d = 0; d < kActionDim; ++d) {
      sigma(d) = std::exp(e.log_std(d));
      u(d) = (z[static_cast<std::size_t>(d)] - e.mean(d)) / sigma(d);
      log_prob += -0.5 * u(d) * u(d) - e.log_std(d) - 0.5 * kLog2Pi;
      entropy += 0.5 * (kLog2Pi + 1.0) + e.log_std(d);
    }
    const double adv = batch.advantages[i];
    const double ratio = std::exp(log_prob - batch.log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double unclipped_term = ratio * adv;
    const double clipped_term = clipped * adv;
    const bool use_unclipped = unclipped_term <= clipped_term;
    const double surr = use_unclipped ? unclipped_term : clipped_term;
    const double verr = e.value - batch.returns[i];

    terms.surrogate += surr / n;
    terms.value_loss += verr * verr / n;
    terms.entropy += entropy / n;

    if (grad) {
      // Gradient of -(surr - c_v verr^2 + c_H entropy) / n.
      const double d_logp = use_unclipped ? -unclipped_term / n : 0.0;
      Eigen::VectorXd d_mean = d_logp * (u.array() / sigma.array()).matrix();
      Eigen::VectorXd d_ls = d_logp * (u.array().square() - 1.0).matrix();
      d_ls.array() -= cfg.entropy_coef / n;
      const double d_value = cfg.value_coef * 2.0 * verr / n;
      backprop_heads(p, e, d_mean, d_ls, d_value, cfg, grad);
    }
  }
  terms.objective = terms.surrogate - cfg.value_coef * terms.value_loss +
                    cfg.entropy_coef * terms.entropy;
  return terms;
}

PpoReport ppo_update(PolicyParams& p, const Trajectory& batch, const AgentConfig& cfg,
                     AdamState& adam, std::mt19937_64& rng) {
  PpoReport report;
  report.before = ppo_objective(p, batch, {}, cfg);
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> flat = p.flatten();
  const auto mb = static_cast<std::size_t>(cfg.minibatch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t stop = std::min(order.size(), start + mb);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      PolicyParams grad = p.zeros_like();
      ppo_objective(p, batch, idx, cfg, &grad);
      std::vector<double> g = grad.flatten();
      report.max_grad_norm_seen = std::max(report.max_grad_norm_seen, clip_grad_norm(g, cfg.max_grad_norm));
      adam_step(flat, g, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      p.unflatten(flat);
      ++report.updates;
    }
  }
  if (!p.all_finite()) throw NonFiniteGradient("parameters became non-finite");
  report.after = ppo_objective(p, batch, {}, cfg);
  return report;
}

RewardWeights annealed_weights(int episode, int n_episodes, const EnvConfig& env_cfg) {
  const double frac =
      n_episodes > 1 ? static_cast<double>(episode - 1) / static_cast<double>(n_episodes - 1) : 0.0;
  RewardWeights w;
  w.lambda_shape = env_cfg.lambda_shape_max * frac;
  w.lambda_arb = env_cfg.lambda_arb_max * frac;
  w.lambda_cvar = env_cfg.lambda_cvar;
  return w;
}

}  // namespace essvi_mm

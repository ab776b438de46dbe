#pragma once

// Gaussian actor-critic over raw actions, squashing to physical actions,
// warm-start regression, GAE and clipped PPO.

#include <Eigen/Dense>
#include <array>
#include <random>
#include <vector>

#include "essvi_mm/env.hpp"
#include "essvi_mm/mlp.hpp"

namespace essvi_mm {

using RawAction = std::array<double, kActionDim>;

struct AgentConfig {
  int hidden = 64;
  double init_log_std = -1.6094379124341003;  // log 0.2
  double log_std_min = -6.907755278982137;    // log 1e-3
  double log_std_max = -0.6931471805599453;   // log 0.5
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 1e-3;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 4;
  int minibatch = 256;
  double max_grad_norm = 1.0;
  int episodes = 8;
  int warm_steps = 800;
  double warm_lr = 3e-4;
  double warm_loss_tol = 1e-3;
  double warm_arb_tol = 1e-6;
  double warm_entropy_coef = 0.0;
  int warm_reset_states = 64;
  int warm_rollouts = 2;
  int warm_rollout_len = 32;

  // Throws InvalidConfig naming the offending field.
  void validate() const;
};

struct PolicyParams {
  MlpParams actor_mean;
  MlpParams actor_logstd;
  MlpParams critic;

  Eigen::Index num_params() const;
  PolicyParams zeros_like() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
  bool all_finite() const;
};

PolicyParams make_policy(const AgentConfig& cfg, std::mt19937_64& rng);

Eigen::VectorXd to_input(const FeatureVector& f);

struct PolicyEval {
  Eigen::VectorXd mean;         // 5
  Eigen::VectorXd log_std;      // 5, clamped
  Eigen::VectorXd log_std_raw;  // 5, before clamping
  double value = 0.0;
  MlpCache mean_cache;
  MlpCache logstd_cache;
  MlpCache critic_cache;
};

PolicyEval evaluate_policy(const PolicyParams& p, const FeatureVector& f, const AgentConfig& cfg);

// Physical action from a raw action.
Action squash(const RawAction& z, const ActionBounds& bounds);
// d action_i / d z_i.
RawAction squash_jacobian(const RawAction& z, const ActionBounds& bounds);

struct GaussianStats {
  double log_prob = 0.0;
  double entropy = 0.0;
};

// Diagonal Gaussian log density at z and entropy. When grad_log_prob or
// grad_entropy is given, the parameter gradients are accumulated into it.
GaussianStats log_prob_and_entropy(const PolicyParams& p, const FeatureVector& f, const RawAction& z,
                                   const AgentConfig& cfg, PolicyParams* grad_log_prob = nullptr,
                                   PolicyParams* grad_entropy = nullptr);

RawAction sample_raw_action(const PolicyEval& eval, std::mt19937_64& rng);

// Squared value error (V(s) - target)^2 and its parameter gradient.
double value_error(const PolicyParams& p, const FeatureVector& f, double target,
                   PolicyParams* grad = nullptr);

// Mean over states of ||squash(mean(s)) - anchor||^2 minus entropy_coef times the
// mean policy entropy.
double warm_start_loss(const PolicyParams& p, const std::vector<FeatureVector>& states,
                       const Action& anchor, const ActionBounds& bounds, const AgentConfig& cfg,
                       PolicyParams* grad = nullptr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;
};

// One Adam descent step on a flattened parameter vector.
void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// Rescales grad in place so its Euclidean norm is at most max_norm. Returns the
// norm before clipping. Throws NonFiniteGradient for NaN or Inf entries.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

struct WarmStartReport {
  int steps_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_arb = 0.0;  // BF + CAL at the policy mean on a fresh reset
  bool early_stopped = false;
};

// States used for warm-start regression: fresh resets and short anchor rollouts.
std::vector<FeatureVector> warm_start_states(const EnvConfig& env_cfg, const AgentConfig& cfg,
                                             const Action& anchor, std::mt19937_64& rng);

// BF + CAL of the quoted surface when acting with the policy mean at a fresh reset.
double policy_mean_arb(const PolicyParams& p, const EnvConfig& env_cfg, const AgentConfig& cfg);

WarmStartReport warm_start(PolicyParams& p, const EnvConfig& env_cfg, const Action& anchor,
                           int steps, const AgentConfig& cfg, std::mt19937_64& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double last_value, double gamma, double lam);

// Centres and scales to unit (population) standard deviation.
void normalize_advantages(std::vector<double>& adv);

struct Trajectory {
  std::vector<FeatureVector> features;
  std::vector<RawAction> raw_actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return features.size(); }
};

struct PpoTerms {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double objective = 0.0;  // surrogate - c_v value_loss + c_H entropy
};

// Clipped PPO objective over the given sample indices (all samples if empty).
// When grad is given, accumulates the gradient of -objective.
PpoTerms ppo_objective(const PolicyParams& p, const Trajectory& batch,
                       const std::vector<std::size_t>& indices, const AgentConfig& cfg,
                       PolicyParams* grad = nullptr);

struct PpoReport {
  PpoTerms before;
  PpoTerms after;
  int updates = 0;
  double max_grad_norm_seen = 0.0;
};

// Epochs of shuffled minibatch Adam on -objective. Throws NonFiniteGradient.
PpoReport ppo_update(PolicyParams& p, const Trajectory& batch, const AgentConfig& cfg,
                     AdamState& adam, std::mt19937_64& rng);

// Structural weights for 1-based episode index e out of n_episodes.
RewardWeights annealed_weights(int episode, int n_episodes, const EnvConfig& env_cfg);

}  // namespace essvi_mm

#include "essvi_mm/train.hpp"

#include <cmath>

#include "essvi_mm/risk.hpp"

namespace essvi_mm {

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream) {
  const auto id = static_cast<std::uint64_t>(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

namespace {

EpisodeRecord summarize(int episode, const RewardWeights& w, const std::vector<StepRecord>& steps,
                        const std::vector<double>& lambda_eff, double std_sum) {
  EpisodeRecord r;
  r.episode = episode;
  r.weights = w;
  ScenarioBatch step_pnl;
  const double n = static_cast<double>(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepRecord& s = steps[i];
    const double raw = s.pnl_quote + s.pnl_hedge;
    r.reward_sum += s.reward;
    r.pnl_raw += raw;
    r.pnl_adj += raw - w.lambda_shape * s.shape - lambda_eff[i] * (s.bf + s.cal);
    r.bf_mean += s.bf / n;
    r.cal_mean += s.cal / n;
    r.shape_mean += s.shape / n;
    r.cvar_mean += s.cvar / n;
    r.alpha_mean += s.action.alpha / n;
    r.hedge_mean += s.action.hedge / n;
    step_pnl.pnl.push_back(raw);
  }
  if (!step_pnl.pnl.empty()) {
    r.var5_steps = -empirical_var(step_pnl, 0.05);
    r.cvar5_steps = -empirical_cvar_exact(step_pnl, 0.05);
  }
  r.act_std = steps.empty() ? 0.0 : std_sum / (n * kActionDim);
  return r;
}

}  // namespace

TrainResult train(const EnvConfig& env_cfg, const AgentConfig& agent_cfg, std::uint64_t seed,
                  const EpisodeCallback& on_episode) {
  env_cfg.validate();
  agent_cfg.validate();

  std::mt19937_64 init_rng = make_stream(seed, Stream::kPolicyInit);
  std::mt19937_64 warm_rng = make_stream(seed, Stream::kWarmStart);
  std::mt19937_64 action_rng = make_stream(seed, Stream::kActions);
  std::mt19937_64 ppo_rng = make_stream(seed, Stream::kPpo);
  const std::uint64_t env_seed = make_stream(seed, Stream::kEnv)();

  TrainResult result;
  result.policy = make_policy(agent_cfg, init_rng);
  result.warm = warm_start(result.policy, env_cfg, anchor_action(), agent_cfg.warm_steps,
                           agent_cfg, warm_rng);

  MarketMakingEnv env(env_cfg, env_seed);
  AdamState adam;
  const int n_episodes = agent_cfg.episodes;
  for (int episode = 1; episode <= n_episodes; ++episode) {
    const RewardWeights weights = annealed_weights(episode, n_episodes, env_cfg);
    env.set_weights(weights);
    FeatureVector f = env.reset();

    Trajectory traj;
    std::vector<StepRecord> steps;
    std::vector<double> lambda_eff;
    double std_sum = 0.0;
    while (!env.done()) {
      const PolicyEval e = evaluate_policy(result.policy, f, agent_cfg);
      const RawAction z = sample_raw_action(e, action_rng);
      const GaussianStats g = log_prob_and_entropy(result.policy, f, z, agent_cfg);
      const int t = env.state().t;
      const double spot = env.state().spot;
      const StepResult r = env.step(squash(z, env_cfg.bounds));

      traj.features.push_back(f);
      traj.raw_actions.push_back(z);
      traj.log_probs.push_back(g.log_prob);
      traj.values.push_back(e.value);
      traj.rewards.push_back(r.reward);
      for (int i = 0; i < kActionDim; ++i) std_sum += std::exp(e.log_std(i));

      StepRecord rec;
      rec.episode = episode;
      rec.t = t;
      rec.spot = spot;
      rec.reward = r.reward;
      rec.pnl_quote = r.breakdown.pnl_quote;
      rec.pnl_hedge = r.breakdown.pnl_hedge;
      rec.bf = r.breakdown.bf;
      rec.cal = r.breakdown.cal;
      rec.shape = r.breakdown.shape;
      rec.cvar = r.breakdown.cvar_est;
      rec.action = r.action;
      steps.push_back(rec);
      lambda_eff.push_back(r.breakdown.lambda_eff);
      f = r.features;
    }

    // The episode ends the task, so nothing is bootstrapped past the last step.
    GaeResult adv = gae(traj.rewards, traj.values, 0.0, agent_cfg.gamma, agent_cfg.gae_lambda);
    traj.returns = adv.returns;
    traj.advantages = std::move(adv.advantages);
    normalize_advantages(traj.advantages);
    ppo_update(result.policy, traj, agent_cfg, adam, ppo_rng);

    EpisodeRecord rec = summarize(episode, weights, steps, lambda_eff, std_sum);
    if (on_episode) on_episode(rec);
    result.episodes.push_back(rec);
    result.steps.insert(result.steps.end(), steps.begin(), steps.end());
  }
  return result;
}

}  // namespace essvi_mm

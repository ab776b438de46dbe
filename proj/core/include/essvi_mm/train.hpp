#pragma once

// Warm-start followed by episodic PPO with annealed structural weights.

#include <cstdint>
#include <functional>
#include <vector>

#include "essvi_mm/agent.hpp"
#include "essvi_mm/env.hpp"

namespace essvi_mm {

struct StepRecord {
  int episode = 0;
  int t = 0;
  double spot = 0.0;
  double reward = 0.0;
  double pnl_quote = 0.0;
  double pnl_hedge = 0.0;
  double bf = 0.0;
  double cal = 0.0;
  double shape = 0.0;
  double cvar = 0.0;
  Action action;
};

struct EpisodeRecord {
  int episode = 0;
  double reward_sum = 0.0;
  double pnl_raw = 0.0;
  double pnl_adj = 0.0;  // P&L net of shape and arbitrage penalties
  double bf_mean = 0.0;
  double cal_mean = 0.0;
  double shape_mean = 0.0;
  double cvar_mean = 0.0;
  double var5_steps = 0.0;   // 5% quantile of per-step P&L
  double cvar5_steps = 0.0;  // mean of the worst 5% of per-step P&L
  double alpha_mean = 0.0;
  double hedge_mean = 0.0;
  double act_std = 0.0;  // mean over steps and heads of the policy std
  RewardWeights weights;
};

struct TrainResult {
  PolicyParams policy;
  WarmStartReport warm;
  std::vector<EpisodeRecord> episodes;
  std::vector<StepRecord> steps;
};

// Independent, reproducible random streams derived from the run seed.
enum class Stream : std::uint64_t {
  kPolicyInit = 1,
  kWarmStart = 2,
  kEnv = 3,
  kActions = 4,
  kPpo = 5,
};

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream);

// Called after each finished episode.
using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

TrainResult train(const EnvConfig& env_cfg, const AgentConfig& agent_cfg, std::uint64_t seed,
                  const EpisodeCallback& on_episode = {});

}  // namespace essvi_mm

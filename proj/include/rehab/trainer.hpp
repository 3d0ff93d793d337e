#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

#include "rehab/policy.hpp"
#include "rehab/ppo.hpp"
#include "rehab/session_env.hpp"

namespace rehab {

inline constexpr int kCheckpointVersion = 1;

// Learned parameters plus how they were produced.
struct PolicyCheckpoint {
  int version = kCheckpointVersion;
  ActorCritic net;
  TrainingConfig config;
  long timesteps = 0;
  double average_return = 0.0;  // trailing (up to) 500 training episodes
};

// Builds training sessions: a fixed behaviour model, reward weights, and the
// profile distribution episodes are drawn from.
struct EnvFactory {
  PatientModelConfig model;
  RewardWeights weights;
  ProfileSampler sampler;

  SessionEnv make_env() const { return SessionEnv(model, weights); }
};

struct EpisodeLog {
  long episode = 0;
  double episode_return = 0.0;
  double mean_pe = 0.0;
  double mean_abs_rep_diff = 0.0;  // |instructed - baseline|
};

inline EpisodeLog summarize(long episode, const EpisodeTranscript& t) {
  EpisodeLog log{episode, t.episode_return, 0.0, 0.0};
  for (const auto& s : t.steps) {
    log.mean_pe += s.outcome.pe_score;
    log.mean_abs_rep_diff += std::abs(s.outcome.instructed_reps - s.outcome.baseline_reps);
  }
  if (!t.steps.empty()) {
    log.mean_pe /= t.steps.size();
    log.mean_abs_rep_diff /= t.steps.size();
  }
  return log;
}

inline void write_training_log_csv(std::ostream& os, const std::vector<EpisodeLog>& log) {
  os << "episode,return,mean_pe,mean_abs_rep_diff\n";
  for (const auto& e : log) {
    os << e.episode << ',' << fixed(e.episode_return) << ',' << fixed(e.mean_pe) << ','
       << fixed(e.mean_abs_rep_diff) << '\n';
  }
}

// Mean return over the last `window` episodes (or all, if fewer).
inline double trailing_mean_return(const std::vector<EpisodeLog>& log, std::size_t window = 500) {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  double sum = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) sum += log[i].episode_return;
  return sum / n;
}

inline double leading_mean_return(const std::vector<EpisodeLog>& log, std::size_t window = 500) {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += log[i].episode_return;
  return sum / n;
}

struct TrainResult {
  PolicyCheckpoint checkpoint;
  std::vector<EpisodeLog> log;
  std::vector<UpdateDiagnostics> updates;
};

struct TrainOptions {
  int workers = 1;
  // Called after each update with (timesteps so far, trailing mean return).
  std::function<void(long, double)> on_update;
};

// Collect-then-update PPO. Runs floor(total_timesteps / 18) full sessions in
// rollouts of horizon / 18 sessions. Every episode draws its profile and
// action noise from streams keyed by (seed, episode index), so results do
// not depend on the worker count.
inline TrainResult train(const EnvFactory& factory, const TrainingConfig& cfg,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  factory.model.validate();

  Rng init_rng = make_rng({cfg.seed, 0});
  Rng update_rng = make_rng({cfg.seed, 3});
  TrainResult out;
  ActorCritic net = ActorCritic::create(cfg.hidden, init_rng);
  Optimizer opt(net);

  const long total_episodes = cfg.total_timesteps / kSetsPerSession;
  const long per_rollout = cfg.horizon / kSetsPerSession;
  out.log.reserve(static_cast<std::size_t>(total_episodes));

  for (long first = 0; first < total_episodes; first += per_rollout) {
    const long count = std::min(per_rollout, total_episodes - first);
    const auto snapshot = std::make_shared<const ActorCritic>(net);
    std::vector<EpisodeTranscript> transcripts(static_cast<std::size_t>(count));
    std::vector<Rollout> parts(static_cast<std::size_t>(count));

    parallel_for(static_cast<std::size_t>(count), opts.workers, [&](std::size_t k) {
      const auto episode = static_cast<std::uint64_t>(first) + k;
      Rng profile_rng = make_rng({cfg.seed, 1, episode});
      Rng action_rng = make_rng({cfg.seed, 2, episode});
      SessionEnv env = factory.make_env();
      Observation obs = env.reset(factory.sampler(profile_rng));
      Rollout& part = parts[k];
      while (!env.done()) {
        const ActResult a = act(*snapshot, obs, ActMode::Sample, &action_rng);
        const StepResult res = env.step(a.action);
        part.features.push_back(featurize(obs));
        part.actions.push_back(a.action.index);
        part.log_probs.push_back(a.log_prob);
        part.values.push_back(a.value);
        part.rewards.push_back(res.reward.total);
        part.terminals.push_back(res.terminal());
        if (res.next) obs = *res.next;
      }
      transcripts[k] = env.transcript();
    });

    Rollout rollout;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Rollout& p = parts[k];
      rollout.features.insert(rollout.features.end(), p.features.begin(), p.features.end());
      rollout.actions.insert(rollout.actions.end(), p.actions.begin(), p.actions.end());
      rollout.log_probs.insert(rollout.log_probs.end(), p.log_probs.begin(), p.log_probs.end());
      rollout.values.insert(rollout.values.end(), p.values.begin(), p.values.end());
      rollout.rewards.insert(rollout.rewards.end(), p.rewards.begin(), p.rewards.end());
      rollout.terminals.insert(rollout.terminals.end(), p.terminals.begin(), p.terminals.end());
      out.log.push_back(summarize(first + static_cast<long>(k), transcripts[k]));
    }

    const double lr_scale =
        cfg.anneal_lr ? 1.0 - static_cast<double>(first) / static_cast<double>(total_episodes) : 1.0;
    out.updates.push_back(update(net, opt, rollout, cfg, update_rng, lr_scale));
    if (opts.on_update) {
      opts.on_update((first + count) * kSetsPerSession, trailing_mean_return(out.log));
    }
  }

  out.checkpoint.net = std::move(net);
  out.checkpoint.config = cfg;
  out.checkpoint.timesteps = total_episodes * kSetsPerSession;
  out.checkpoint.average_return = trailing_mean_return(out.log);
  return out;
}

}  // namespace rehab

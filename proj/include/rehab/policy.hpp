#pragma once

#include <functional>
#include <memory>

#include "rehab/ppo.hpp"
#include "rehab/session_env.hpp"

namespace rehab {

// Chooses the adjustment for the upcoming set. The environment is passed so
// scripted policies can read the goal (and, for the oracle, the patient).
using InstructorPolicy = std::function<Action(const Observation&, const SessionEnv&, Rng&)>;

namespace detail {

inline int upcoming_goal(const SessionEnv& env) {
  const auto& p = env.profile();
  return p.plan().goal(p.completed_sets() + 1);
}

}  // namespace detail

// Instructs the patient's true baseline (or the closest grid action to it).
inline InstructorPolicy oracle_policy() {
  return [](const Observation&, const SessionEnv& env, Rng&) {
    const auto& p = env.profile();
    const int set = p.completed_sets() + 1;
    return nearest_action(p.plan().goal(set), p.baseline_reps(set));
  };
}

// Always asks for the same rep count, like the fixed data-collection protocol.
inline InstructorPolicy fixed_reps_policy(int reps) {
  if (reps < 1) throw ConfigError("fixed policy reps must be >= 1");
  return [reps](const Observation&, const SessionEnv& env, Rng&) {
    return nearest_action(detail::upcoming_goal(env), reps);
  };
}

inline InstructorPolicy network_policy(std::shared_ptr<const ActorCritic> net, ActMode mode) {
  return [net = std::move(net), mode](const Observation& obs, const SessionEnv&, Rng& rng) {
    return act(*net, obs, mode, &rng).action;
  };
}

inline EpisodeTranscript run_episode(SessionEnv& env, const ProfileSpec& spec,
                                     const InstructorPolicy& policy, Rng& rng) {
  Observation obs = env.reset(spec);
  while (!env.done()) {
    const auto res = env.step(policy(obs, env, rng));
    if (res.next) obs = *res.next;
  }
  return env.transcript();
}

}  // namespace rehab

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rehab/errors.hpp"
#include "rehab/mlp.hpp"
#include "rehab/session_env.hpp"
#include "rehab/util.hpp"

namespace rehab {

inline constexpr int kFeatureSize = 1 + 3 + kNumRepBins;

// [normalised set, one-hot tolerance (low, average, high), one-hot rep bin]
inline std::array<double, kFeatureSize> featurize(const Observation& obs) {
  std::array<double, kFeatureSize> f{};
  f[0] = (obs.set_number - 1) / double(kSetsPerSession - 1);
  f[1 + static_cast<int>(obs.tolerance)] = 1.0;
  f[4 + obs.avg_reps_bin] = 1.0;
  return f;
}

inline Matrix featurize_column(const Observation& obs) {
  const auto f = featurize(obs);
  return Eigen::Map<const Vector>(f.data(), kFeatureSize);
}

// Separate actor (logits) and critic (state value) trunks.
struct ActorCritic {
  Mlp actor;
  Mlp critic;

  ActorCritic() = default;
  ActorCritic(int input_size, const std::vector<int>& hidden, int num_actions) {
    std::vector<int> a{input_size};
    a.insert(a.end(), hidden.begin(), hidden.end());
    std::vector<int> c = a;
    a.push_back(num_actions);
    c.push_back(1);
    actor = Mlp(a);
    critic = Mlp(c);
  }

  static ActorCritic create(const std::vector<int>& hidden, Rng& rng, int input_size = kFeatureSize,
                            int num_actions = kNumActions) {
    ActorCritic ac(input_size, hidden, num_actions);
    ac.actor.initialize(rng, 0.01);
    ac.critic.initialize(rng, 1.0);
    return ac;
  }

  int num_actions() const { return actor.output_size(); }
  bool finite() const { return actor.finite() && critic.finite(); }
};

// Column-wise log-softmax.
inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

enum class ActMode { Sample, Greedy };

struct ActResult {
  Action action;
  double log_prob = 0.0;
  double value = 0.0;
  Vector probs;
};

// Greedy ties go to the lowest action index.
inline ActResult act(const ActorCritic& net, const Observation& obs, ActMode mode, Rng* rng) {
  const Matrix x = featurize_column(obs);
  const Matrix logits = net.actor.forward(x);
  if (!logits.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite logits for observation (set " << obs.set_number << ", tolerance "
        << name(obs.tolerance) << ", bin " << obs.avg_reps_bin << ")";
    throw TrainingFault(msg.str());
  }
  const Vector logp = log_softmax(logits).col(0);
  ActResult res;
  res.probs = logp.array().exp();
  int chosen = 0;
  if (mode == ActMode::Greedy) {
    for (int i = 1; i < logp.size(); ++i) {
      if (logits(i, 0) > logits(chosen, 0)) chosen = i;
    }
  } else {
    if (rng == nullptr) throw ConfigError("sample mode needs a random generator");
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(*rng);
    double acc = 0.0;
    chosen = static_cast<int>(logp.size()) - 1;
    for (int i = 0; i < logp.size(); ++i) {
      acc += res.probs[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
  }
  res.action = Action{chosen};
  res.log_prob = logp[chosen];
  res.value = net.critic.forward(x)(0, 0);
  return res;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Generalised advantage estimates (unnormalised) and value targets. A terminal
// flag at t stops bootstrapping from t+1; the value after the final step is
// bootstrap_value.
inline GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                             const std::vector<bool>& terminals, double gamma, double lambda,
                             double bootstrap_value = 0.0) {
  if (rewards.size() != values.size() || rewards.size() != terminals.size()) {
    throw ShapeError("compute_gae: rewards, values and terminals must have equal length");
  }
  const std::size_t n = rewards.size();
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    const double live = terminals[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

// Mean 0, std 1 (population std floored at 1e-8).
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / adv.size()), 1e-8);
  for (double& a : adv) a = (a - mean) / sd;
}

// d/d(ratio) of min(ratio * A, clip(ratio, 1-eps, 1+eps) * A). Zero wherever
// the clipped branch is the active minimum.
inline double surrogate_ratio_grad(double ratio, double advantage, double clip_eps) {
  if (advantage >= 0.0 && ratio > 1.0 + clip_eps) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip_eps) return 0.0;
  return advantage;
}

inline double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

struct LossCoefficients {
  double clip_eps = 0.2;
  double entropy = 0.01;
  double value = 0.5;
};

struct MiniBatch {
  Matrix features;  // feature x sample
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct LossTerms {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
};

struct Gradients {
  Vector actor;
  Vector critic;
};

// total = -mean(clipped surrogate) - c_ent * mean(entropy) + c_v * mean((V - R)^2)
inline LossTerms ppo_loss(const ActorCritic& net, const MiniBatch& batch, const LossCoefficients& c,
                          Gradients* grads = nullptr) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (batch.features.cols() != n || batch.old_log_probs.size() != batch.size() ||
      batch.advantages.size() != batch.size() || batch.returns.size() != batch.size()) {
    throw ShapeError("ppo_loss: minibatch fields have inconsistent lengths");
  }
  if (n == 0) throw ShapeError("ppo_loss: empty minibatch");
  Mlp::Cache actor_cache;
  Mlp::Cache critic_cache;
  const Matrix logits = net.actor.forward(batch.features, &actor_cache);
  const Matrix values = net.critic.forward(batch.features, &critic_cache);
  const Matrix logp = log_softmax(logits);
  const Matrix probs = logp.array().exp();

  LossTerms t;
  Matrix d_logits = Matrix::Zero(logits.rows(), n);
  Matrix d_values(1, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int a = batch.actions[j];
    const double log_ratio = logp(a, j) - batch.old_log_probs[j];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[j];
    t.policy -= clipped_surrogate(ratio, adv, c.clip_eps) * inv_n;
    t.mean_ratio += ratio * inv_n;
    t.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    t.max_ratio_deviation = std::max(t.max_ratio_deviation, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > c.clip_eps) t.clip_fraction += inv_n;

    const double ent = -(probs.col(j).array() * logp.col(j).array()).sum();
    t.entropy += ent * inv_n;
    const double err = values(0, j) - batch.returns[j];
    t.value += err * err * inv_n;

    if (grads) {
      // policy term: -g * ratio * (onehot(a) - p)
      const double g = surrogate_ratio_grad(ratio, adv, c.clip_eps) * ratio * inv_n;
      d_logits.col(j) = g * probs.col(j);
      d_logits(a, j) -= g;
      // entropy term: c_ent * p * (log p + H)
      d_logits.col(j).array() +=
          c.entropy * inv_n * probs.col(j).array() * (logp.col(j).array() + ent);
      d_values(0, j) = c.value * 2.0 * err * inv_n;
    }
  }
  t.total = t.policy - c.entropy * t.entropy + c.value * t.value;
  if (grads) {
    grads->actor = net.actor.backward(actor_cache, d_logits);
    grads->critic = net.critic.backward(critic_cache, d_values);
  }
  return t;
}

// Defaults are tuned for the 18-step session task: short credit horizon
// (gamma, lambda 0.9), a larger step size and little entropy pressure.
// Generic PPO defaults (lr 3e-4, gamma 0.99, lambda 0.95, entropy 0.01,
// minibatch 256) plateau near a return of 10 at 100k steps.
struct TrainingConfig {
  long total_timesteps = 100000;
  int horizon = 2304;  // steps per rollout; a multiple of 18
  int minibatch = 512;
  int epochs = 4;
  double learning_rate = 3e-3;
  double gamma = 0.9;
  double gae_lambda = 0.9;
  double clip_eps = 0.2;
  double entropy_coef = 0.001;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  bool anneal_lr = false;  // decay linearly to zero over the run
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 1;

  LossCoefficients loss() const { return {clip_eps, entropy_coef, value_coef}; }

  void validate() const {
    const auto bad = [](const std::string& field, const std::string& why) {
      return ConfigError("train." + field + ": " + why);
    };
    if (total_timesteps < kSetsPerSession) {
      throw bad("timesteps", "must be >= 18 (one full session)");
    }
    if (horizon < kSetsPerSession || horizon % kSetsPerSession != 0) {
      throw bad("horizon", "must be a positive multiple of 18");
    }
    if (minibatch < 1) throw bad("minibatch", "must be >= 1");
    if (epochs < 1) throw bad("epochs", "must be >= 1");
    if (!(learning_rate > 0.0)) throw bad("lr", "must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw bad("gamma", "must lie in (0, 1]");
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw bad("lambda", "must lie in (0, 1]");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw bad("clip", "must lie in (0, 1)");
    if (!(entropy_coef >= 0.0)) throw bad("entropy-coef", "must be >= 0");
    if (!(value_coef > 0.0)) throw bad("value-coef", "must be > 0");
    if (!(max_grad_norm > 0.0)) throw bad("max-grad-norm", "must be > 0");
    if (hidden.empty()) throw bad("hidden", "needs at least one hidden layer");
    for (int h : hidden) {
      if (h < 1) throw bad("hidden", "layer sizes must be >= 1");
    }
  }
};

// One collected rollout, flattened across episodes in collection order.
struct Rollout {
  std::vector<std::array<double, kFeatureSize>> features;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<bool> terminals;

  std::size_t size() const { return actions.size(); }
};

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double first_ratio_deviation = 0.0;  // first epoch, first minibatch
  int minibatches = 0;
};

// Optimiser state that persists across updates.
struct Optimizer {
  Adam actor;
  Adam critic;

  explicit Optimizer(const ActorCritic& net)
      : actor(net.actor.num_params()), critic(net.critic.num_params()) {}
};

namespace detail {

inline std::string dump(const LossTerms& t) {
  std::ostringstream os;
  os << "policy=" << t.policy << " value=" << t.value << " entropy=" << t.entropy
     << " mean_ratio=" << t.mean_ratio << " clip_fraction=" << t.clip_fraction;
  return os.str();
}

}  // namespace detail

// Clipped-surrogate PPO over a collected rollout: several epochs of shuffled
// minibatches, global gradient-norm clipping, Adam.
inline UpdateDiagnostics update(ActorCritic& net, Optimizer& opt, const Rollout& rollout,
                                const TrainingConfig& cfg, Rng& rng, double lr_scale = 1.0) {
  if (rollout.size() == 0) throw ShapeError("update: empty rollout");
  GaeResult gae = compute_gae(rollout.rewards, rollout.values, rollout.terminals, cfg.gamma,
                              cfg.gae_lambda);
  normalize_advantages(gae.advantages);

  const std::size_t n = rollout.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto coeffs = cfg.loss();
  UpdateDiagnostics diag;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.minibatch));
      MiniBatch mb;
      mb.features.resize(kFeatureSize, static_cast<Eigen::Index>(end - start));
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        mb.features.col(static_cast<Eigen::Index>(k - start)) =
            Eigen::Map<const Vector>(rollout.features[i].data(), kFeatureSize);
        mb.actions.push_back(rollout.actions[i]);
        mb.old_log_probs.push_back(rollout.log_probs[i]);
        mb.advantages.push_back(gae.advantages[i]);
        mb.returns.push_back(gae.returns[i]);
      }
      Gradients g;
      const LossTerms t = ppo_loss(net, mb, coeffs, &g);
      if (!std::isfinite(t.total) || !g.actor.allFinite() || !g.critic.allFinite()) {
        throw TrainingFault("non-finite PPO loss or gradient (epoch " + std::to_string(epoch) +
                            ", minibatch at " + std::to_string(start) + "): " + detail::dump(t));
      }
      const double norm = std::sqrt(g.actor.squaredNorm() + g.critic.squaredNorm());
      if (norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / norm;
        g.actor *= s;
        g.critic *= s;
      }
      const double lr = cfg.learning_rate * lr_scale;
      opt.actor.step(net.actor.params(), g.actor, lr);
      opt.critic.step(net.critic.params(), g.critic, lr);
      if (!net.finite()) {
        throw TrainingFault("non-finite parameters after update: " + detail::dump(t));
      }
      if (diag.minibatches == 0) diag.first_ratio_deviation = t.max_ratio_deviation;
      ++diag.minibatches;
      diag.policy_loss += t.policy;
      diag.value_loss += t.value;
      diag.entropy += t.entropy;
      diag.mean_ratio += t.mean_ratio;
      diag.clip_fraction += t.clip_fraction;
      diag.approx_kl += t.approx_kl;
    }
  }
  const double m = diag.minibatches;
  diag.policy_loss /= m;
  diag.value_loss /= m;
  diag.entropy /= m;
  diag.mean_ratio /= m;
  diag.clip_fraction /= m;
  diag.approx_kl /= m;
  return diag;
}

}  // namespace rehab

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rehab/errors.hpp"
#include "rehab/patient_model.hpp"
#include "rehab/plan.hpp"
#include "rehab/util.hpp"

namespace rehab {

inline constexpr int kNumActions = 15;
inline constexpr int kNumRepBins = 12;
// Bin for "100-109.9%": the assumption before any set has been observed.
inline constexpr int kDefaultRepBin = 7;
inline constexpr int kNumObservations = kSetsPerSession * 3 * kNumRepBins;

// Discretised session state seen by the instructor.
struct Observation {
  int set_number = 1;
  Tolerance tolerance = Tolerance::Average;
  // 0 -> 30-39.9% of goal, ..., 11 -> 140-149.9%.
  int avg_reps_bin = kDefaultRepBin;

  // Dense index in [0, 648).
  int index() const {
    return ((set_number - 1) * 3 + static_cast<int>(tolerance)) * kNumRepBins + avg_reps_bin;
  }

  static Observation from_index(int index) {
    Observation o;
    o.avg_reps_bin = index % kNumRepBins;
    o.tolerance = static_cast<Tolerance>((index / kNumRepBins) % 3);
    o.set_number = index / (kNumRepBins * 3) + 1;
    return o;
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

inline int rep_bin_lower_pct(int bin) { return 30 + 10 * bin; }

// Percentage adjustment of the current goal: index 0 -> -70%, 7 -> 0%, 14 -> +70%.
struct Action {
  int index = 7;

  int percent() const { return -70 + 10 * index; }

  static Action from_percent(int pct) {
    if (pct < -70 || pct > 70 || pct % 10 != 0) {
      throw RangeError("action percent must be a multiple of 10 in [-70, 70], got " +
                       std::to_string(pct));
    }
    return Action{(pct + 70) / 10};
  }

  friend bool operator==(const Action&, const Action&) = default;
};

// round-half-up(goal * (1 + pct/100)), at least one rep. Integer arithmetic
// keeps decoding exact for every goal.
inline int decode_instructed(int goal, Action action) {
  if (action.index < 0 || action.index >= kNumActions) {
    throw RangeError("action index " + std::to_string(action.index) + " outside 0..14");
  }
  const std::int64_t scaled = std::int64_t(goal) * (100 + action.percent());
  const std::int64_t reps = (scaled + 50) / 100;
  return static_cast<int>(std::max<std::int64_t>(reps, 1));
}

// Action whose decoded reps are closest to the target; lower index on ties.
inline Action nearest_action(int goal, int target_reps) {
  Action best{0};
  int best_err = -1;
  for (int i = 0; i < kNumActions; ++i) {
    const int err = std::abs(decode_instructed(goal, Action{i}) - target_reps);
    if (best_err < 0 || err < best_err) {
      best_err = err;
      best = Action{i};
    }
  }
  return best;
}

struct RewardWeights {
  double reps = 0.8;
  double feedback = 0.2;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct RewardBreakdown {
  double r_reps = 0.0;
  double r_feedback = 0.0;
  double alpha = 3.0;
  double total = 0.0;
  RewardWeights weights;
};

// Penalty width around the ideal PE of 3. [2, 3) is treated like the
// moderate band.
inline double feedback_alpha(double pe) {
  if (pe < 2.0) return 2.0;
  if (pe > 8.0) return 2.0;
  return 3.0;
}

inline RewardBreakdown reward(int achieved, int baseline, double pe, RewardWeights w = {}) {
  if (baseline < 1) throw RangeError("baseline reps must be >= 1");
  RewardBreakdown r;
  r.weights = w;
  const double ratio = static_cast<double>(achieved) / baseline;
  r.r_reps = ratio * ratio;
  r.alpha = feedback_alpha(pe);
  r.r_feedback = 1.0 - (pe - 3.0) * (pe - 3.0) / r.alpha;
  r.total = std::clamp(w.reps * r.r_reps + w.feedback * r.r_feedback, -1.0, 1.0);
  return r;
}

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

// Bin of the mean achieved/goal percentage over the last (up to) two sets.
// Computed as an exact fraction so values on bin edges land in the upper bin.
inline int rep_bin(std::span<const SetOutcome> history, const ExercisePlan& plan) {
  if (history.empty()) return kDefaultRepBin;
  const auto window = history.subspan(history.size() >= 2 ? history.size() - 2 : 0);
  std::int64_t den = 1;
  for (const auto& o : window) den *= plan.goal(o.set_number);
  std::int64_t num = 0;
  for (const auto& o : window) num += 100LL * o.achieved_reps * (den / plan.goal(o.set_number));
  const std::int64_t n = static_cast<std::int64_t>(window.size());
  // mean% = num / (n * den); bin = floor((mean% - 30) / 10)
  const std::int64_t bin = detail::floor_div(num - 30 * n * den, 10 * n * den);
  return static_cast<int>(std::clamp<std::int64_t>(bin, 0, kNumRepBins - 1));
}

inline constexpr std::size_t kWarmupSets = 2;

// The agent sees the default bin until `warmup_sets` sets are complete. With
// the default of two, sets 1 and 2 are planned without performance feedback;
// warmup_sets = 1 bins a single completed set directly.
inline Observation encode_observation(std::span<const SetOutcome> history,
                                      const PatientProfile& profile, int set_number,
                                      std::size_t warmup_sets = kWarmupSets) {
  if (static_cast<int>(history.size()) != set_number - 1) {
    throw SequencingError("history of " + std::to_string(history.size()) +
                          " sets does not precede set " + std::to_string(set_number));
  }
  const int bin = history.size() < warmup_sets ? kDefaultRepBin : rep_bin(history, profile.plan());
  return Observation{set_number, profile.tolerance(), bin};
}

// What reset() needs to build a patient.
struct ProfileSpec {
  Pattern pattern = Pattern::Linear;
  Tolerance tolerance = Tolerance::Average;
  ExercisePlan plan;
  std::uint64_t seed = 0;
};

struct TranscriptStep {
  Observation observation;
  Action action;
  int goal = 0;
  SetOutcome outcome;
  RewardBreakdown reward;
};

struct EpisodeTranscript {
  ProfileSpec profile;
  std::vector<TranscriptStep> steps;
  double episode_return = 0.0;

  bool complete() const { return steps.size() == static_cast<std::size_t>(kSetsPerSession); }
};

inline void write_transcript_csv(std::ostream& os, const EpisodeTranscript& t) {
  os << "set,goal,action_pct,instructed,baseline,achieved,pe,r_reps,r_feedback,total\n";
  for (const auto& s : t.steps) {
    os << s.outcome.set_number << ',' << s.goal << ',' << s.action.percent() << ','
       << s.outcome.instructed_reps << ',' << s.outcome.baseline_reps << ','
       << s.outcome.achieved_reps << ',' << fixed(s.outcome.pe_score) << ','
       << fixed(s.reward.r_reps) << ',' << fixed(s.reward.r_feedback) << ','
       << fixed(s.reward.total) << '\n';
  }
}

struct StepResult {
  std::optional<Observation> next;  // empty once set 18 is done
  RewardBreakdown reward;
  SetOutcome outcome;

  bool terminal() const { return !next.has_value(); }
};

// One 18-set exercise session against a simulated patient.
class SessionEnv {
 public:
  explicit SessionEnv(PatientModelConfig model = {}, RewardWeights weights = {})
      : model_(std::move(model)), weights_(weights) {
    model_.validate();
  }

  Observation reset(const ProfileSpec& spec) {
    profile_.emplace(spec.plan, spec.tolerance, spec.pattern, spec.seed, model_);
    transcript_ = EpisodeTranscript{spec, {}, 0.0};
    transcript_.steps.reserve(kSetsPerSession);
    current_ = encode_observation({}, *profile_, 1);
    return current_;
  }

  StepResult step(Action action) {
    if (!profile_) throw SequencingError("step() called before reset()");
    if (done()) throw SequencingError("step() called after the session finished");
    const int set = profile_->completed_sets() + 1;
    const int goal = profile_->plan().goal(set);
    const int instructed = decode_instructed(goal, action);

    StepResult res;
    res.outcome = profile_->respond(set, instructed);
    res.reward = reward(res.outcome.achieved_reps, res.outcome.baseline_reps,
                        res.outcome.pe_score, weights_);
    transcript_.steps.push_back({current_, action, goal, res.outcome, res.reward});
    transcript_.episode_return += res.reward.total;
    if (!done()) {
      current_ = encode_observation(profile_->tracker(), *profile_, set + 1);
      res.next = current_;
    }
    return res;
  }

  bool done() const { return profile_ && profile_->completed_sets() == kSetsPerSession; }
  const Observation& observation() const { return current_; }
  const PatientProfile& profile() const {
    if (!profile_) throw SequencingError("no active session");
    return *profile_;
  }
  const EpisodeTranscript& transcript() const { return transcript_; }
  const PatientModelConfig& model_config() const { return model_; }
  const RewardWeights& weights() const { return weights_; }

 private:
  PatientModelConfig model_;
  RewardWeights weights_;
  std::optional<PatientProfile> profile_;
  Observation current_;
  EpisodeTranscript transcript_;
};

// Training distribution: uniform tolerance and pattern; a constant goal in
// [4, 12], or (10% of the time) an independent goal in [4, 12] per block.
struct ProfileSampler {
  int min_goal = 4;
  int max_goal = 12;
  double block_plan_fraction = 0.1;

  ProfileSpec operator()(Rng& rng) const {
    ProfileSpec spec;
    spec.tolerance = kAllTolerances[std::uniform_int_distribution<int>(0, 2)(rng)];
    spec.pattern = kAllPatterns[std::uniform_int_distribution<int>(0, 5)(rng)];
    std::uniform_int_distribution<int> goal(min_goal, max_goal);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < block_plan_fraction) {
      std::array<int, kSetsPerSession> goals;
      for (int block = 0; block < kSetsPerSession / 3; ++block) {
        const int g = goal(rng);
        for (int s = 0; s < 3; ++s) goals[block * 3 + s] = g;
      }
      spec.plan = ExercisePlan(goals);
    } else {
      spec.plan = ExercisePlan::constant(goal(rng));
    }
    spec.seed = rng();
    return spec;
  }
};

}  // namespace rehab

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rehab/errors.hpp"
#include "rehab/plan.hpp"
#include "rehab/util.hpp"

namespace rehab {

// Exertion-tolerance groups from clustering session data. Index order is the
// one used in observations and feature vectors.
enum class Tolerance : int { Low = 0, Average = 1, High = 2 };

inline constexpr std::array<Tolerance, 3> kAllTolerances{Tolerance::Low, Tolerance::Average,
                                                          Tolerance::High};

enum class Pattern : int {
  StrugglingDay = 0,
  DrasticDecline = 1,
  SlowDecline = 2,
  Linear = 3,
  GoodDay = 4,
  LinearIncrease = 5,
};

inline constexpr std::array<Pattern, 6> kAllPatterns{
    Pattern::StrugglingDay, Pattern::DrasticDecline, Pattern::SlowDecline,
    Pattern::Linear,        Pattern::GoodDay,        Pattern::LinearIncrease};

inline std::string_view name(Tolerance t) {
  switch (t) {
    case Tolerance::Low: return "low";
    case Tolerance::Average: return "average";
    case Tolerance::High: return "high";
  }
  return "?";
}

inline std::string_view name(Pattern p) {
  switch (p) {
    case Pattern::StrugglingDay: return "struggling_day";
    case Pattern::DrasticDecline: return "drastic_decline";
    case Pattern::SlowDecline: return "slow_decline";
    case Pattern::Linear: return "linear";
    case Pattern::GoodDay: return "good_day";
    case Pattern::LinearIncrease: return "linear_increase";
  }
  return "?";
}

inline std::optional<Tolerance> parse_tolerance(std::string_view text) {
  for (Tolerance t : kAllTolerances) {
    if (text == name(t)) return t;
  }
  return std::nullopt;
}

inline std::optional<Pattern> parse_pattern(std::string_view text) {
  for (Pattern p : kAllPatterns) {
    if (text == name(p)) return p;
  }
  return std::nullopt;
}

// Borg scores reported after a 1-rep under- or over-instruction.
struct PeAnchors {
  double under = 1.8;
  double over = 5.5;

  friend bool operator==(const PeAnchors&, const PeAnchors&) = default;
};

// Cluster averages: High (1.3, 4.4), Average (1.8, 5.5), Low (2.4, 6.0).
inline constexpr PeAnchors default_anchors(Tolerance t) {
  switch (t) {
    case Tolerance::Low: return {2.4, 6.0};
    case Tolerance::Average: return {1.8, 5.5};
    case Tolerance::High: return {1.3, 4.4};
  }
  return {};
}

inline void validate(const PeAnchors& a, std::string_view where) {
  const auto bad = [&](const std::string& why) {
    return ConfigError(std::string(where) + ": " + why);
  };
  if (!(a.under >= 0.0 && a.under <= 10.0) || !(a.over >= 0.0 && a.over <= 10.0)) {
    throw bad("PE anchors must lie in [0, 10]");
  }
  if (!(a.under < 3.0 && 3.0 < a.over)) throw bad("PE anchors must satisfy under < 3 < over");
}

// Daily-performance multiplier on the goal reps. A ramp interpolates start ->
// end linearly over sets 1..18; a step holds start before a drop set drawn
// uniformly from [drop_first, drop_last] at profile creation, then end.
struct PatternParams {
  enum class Shape { Ramp, Step };
  Shape shape = Shape::Ramp;
  double start = 1.0;
  double end = 1.0;
  int drop_first = 6;
  int drop_last = 12;
  double noise_sigma = 0.5;

  friend bool operator==(const PatternParams&, const PatternParams&) = default;
};

inline PatternParams default_pattern_params(Pattern p) {
  using S = PatternParams::Shape;
  switch (p) {
    case Pattern::StrugglingDay: return {S::Ramp, 0.7, 0.7};
    case Pattern::DrasticDecline: return {S::Step, 1.0, 0.5, 6, 12};
    case Pattern::SlowDecline: return {S::Ramp, 1.0, 0.6};
    case Pattern::Linear: return {S::Ramp, 1.0, 1.0};
    case Pattern::GoodDay: return {S::Ramp, 1.15, 1.15};
    case Pattern::LinearIncrease: return {S::Ramp, 0.7, 1.1};
  }
  return {};
}

inline void validate(const PatternParams& p, std::string_view where) {
  const auto bad = [&](const std::string& why) {
    return ConfigError(std::string(where) + ": " + why);
  };
  if (!(p.start > 0.0) || !(p.end > 0.0) || !std::isfinite(p.start) || !std::isfinite(p.end)) {
    throw bad("multiplier levels must be finite and > 0");
  }
  if (!(p.noise_sigma >= 0.0) || !std::isfinite(p.noise_sigma)) {
    throw bad("noise sigma must be finite and >= 0");
  }
  if (p.shape == PatternParams::Shape::Step &&
      (p.drop_first < 1 || p.drop_last > kSetsPerSession || p.drop_first > p.drop_last)) {
    throw bad("drop set range must lie within 1..18");
  }
}

// Multiplier for a 1-based set; drop_set only matters for step shapes.
inline double multiplier(const PatternParams& p, int set_number, int drop_set) {
  if (set_number < 1 || set_number > kSetsPerSession) {
    throw RangeError("set number " + std::to_string(set_number) + " outside 1..18");
  }
  if (p.shape == PatternParams::Shape::Step) return set_number < drop_set ? p.start : p.end;
  return p.start + (p.end - p.start) * (set_number - 1) / double(kSetsPerSession - 1);
}

// All tunables of the behaviour model. Defaults reproduce the cluster anchors
// and the calibrated pattern shapes.
struct PatientModelConfig {
  std::array<PeAnchors, 3> anchors{default_anchors(Tolerance::Low),
                                   default_anchors(Tolerance::Average),
                                   default_anchors(Tolerance::High)};
  std::array<PatternParams, 6> patterns{
      default_pattern_params(Pattern::StrugglingDay), default_pattern_params(Pattern::DrasticDecline),
      default_pattern_params(Pattern::SlowDecline),   default_pattern_params(Pattern::Linear),
      default_pattern_params(Pattern::GoodDay),       default_pattern_params(Pattern::LinearIncrease)};

  const PeAnchors& anchors_for(Tolerance t) const { return anchors[static_cast<int>(t)]; }
  PeAnchors& anchors_for(Tolerance t) { return anchors[static_cast<int>(t)]; }
  const PatternParams& params_for(Pattern p) const { return patterns[static_cast<int>(p)]; }
  PatternParams& params_for(Pattern p) { return patterns[static_cast<int>(p)]; }

  void set_noise(double sigma) {
    for (auto& p : patterns) p.noise_sigma = sigma;
  }

  void validate() const {
    for (Tolerance t : kAllTolerances) rehab::validate(anchors_for(t), "anchors." + std::string(name(t)));
    for (Pattern p : kAllPatterns) rehab::validate(params_for(p), "pattern." + std::string(name(p)));
  }

  friend bool operator==(const PatientModelConfig&, const PatientModelConfig&) = default;
};

// Response to one set.
struct SetOutcome {
  int set_number = 0;
  int instructed_reps = 0;
  int baseline_reps = 0;
  int achieved_reps = 0;
  double pe_score = 0.0;

  friend bool operator==(const SetOutcome&, const SetOutcome&) = default;
};

// The patient never exceeds what they can do today, never does more than
// instructed, and always manages at least one rep.
inline int achieved_reps(int instructed, int baseline) {
  if (baseline < 1) return 1;
  return instructed >= baseline ? baseline : instructed;
}

// Perceived exertion for a (possibly fractional) difference instructed - baseline.
// Exactly 3.0 at zero, the tolerance anchor at |d| = 1, linear to the scale end
// (0 or 10) at |d| = 5 and saturated beyond. Between 0 and 1 it interpolates
// from 3.0 to the anchor; integer rep counts never land there.
inline double pe_from_difference(const PeAnchors& anchors, double d) {
  if (d == 0.0) return 3.0;
  const bool over = d > 0.0;
  const double mag = std::abs(d);
  const double anchor = over ? anchors.over : anchors.under;
  const double extreme = over ? 10.0 : 0.0;
  if (mag < 1.0) return 3.0 + (anchor - 3.0) * mag;
  if (mag > 5.0) return extreme;
  return anchor + (extreme - anchor) * (mag - 1.0) / 4.0;
}

inline double pe_score(const PeAnchors& anchors, int instructed, int baseline) {
  return pe_from_difference(anchors, static_cast<double>(instructed - baseline));
}

inline double pe_score(Tolerance t, int instructed, int baseline) {
  return pe_score(default_anchors(t), instructed, baseline);
}

// Static attributes plus the live performance tracker of one simulated patient.
// Noise for every set and the drop set are drawn once at construction, so
// baselines are a pure function of (fields, seed).
class PatientProfile {
 public:
  PatientProfile(ExercisePlan plan, Tolerance tolerance, Pattern pattern, std::uint64_t seed,
                 const PatientModelConfig& config = {})
      : plan_(plan),
        tolerance_(tolerance),
        pattern_(pattern),
        seed_(seed),
        anchors_(config.anchors_for(tolerance)),
        params_(config.params_for(pattern)) {
    validate(anchors_, "anchors." + std::string(name(tolerance)));
    validate(params_, "pattern." + std::string(name(pattern)));
    Rng rng = make_rng({seed, 0x70617469656e74ULL});
    if (params_.shape == PatternParams::Shape::Step) {
      drop_set_ = std::uniform_int_distribution<int>(params_.drop_first, params_.drop_last)(rng);
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double& e : noise_) e = params_.noise_sigma * noise(rng);
    tracker_.reserve(kSetsPerSession);
  }

  const ExercisePlan& plan() const { return plan_; }
  Tolerance tolerance() const { return tolerance_; }
  Pattern pattern() const { return pattern_; }
  std::uint64_t seed() const { return seed_; }
  const PeAnchors& anchors() const { return anchors_; }
  const PatternParams& pattern_params() const { return params_; }
  int drop_set() const { return drop_set_; }
  const std::vector<SetOutcome>& tracker() const { return tracker_; }
  int completed_sets() const { return static_cast<int>(tracker_.size()); }

  double multiplier(int set_number) const { return rehab::multiplier(params_, set_number, drop_set_); }

  // Reps the patient can manage this set given their day.
  int baseline_reps(int set_number) const {
    const double expected = plan_.goal(set_number) * multiplier(set_number);
    const auto reps = round_half_up(expected + noise_[set_number - 1]);
    return static_cast<int>(std::max<std::int64_t>(reps, 1));
  }

  SetOutcome respond(int set_number, int instructed_reps) {
    if (completed_sets() == kSetsPerSession) {
      throw SequencingError("set " + std::to_string(set_number) + " requested after the session finished");
    }
    if (set_number != completed_sets() + 1) {
      throw SequencingError("set " + std::to_string(set_number) + " requested but " +
                            std::to_string(completed_sets()) + " sets completed");
    }
    if (instructed_reps < 1) {
      throw RangeError("instructed reps must be >= 1, got " + std::to_string(instructed_reps));
    }
    SetOutcome out;
    out.set_number = set_number;
    out.instructed_reps = instructed_reps;
    out.baseline_reps = baseline_reps(set_number);
    out.achieved_reps = achieved_reps(instructed_reps, out.baseline_reps);
    out.pe_score = pe_score(anchors_, instructed_reps, out.baseline_reps);
    tracker_.push_back(out);
    return out;
  }

 private:
  ExercisePlan plan_;
  Tolerance tolerance_;
  Pattern pattern_;
  std::uint64_t seed_;
  PeAnchors anchors_;
  PatternParams params_;
  int drop_set_ = kSetsPerSession + 1;
  std::array<double, kSetsPerSession> noise_{};
  std::vector<SetOutcome> tracker_;
};

}  // namespace rehab

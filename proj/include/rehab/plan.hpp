#pragma once

#include <array>
#include <charconv>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rehab/errors.hpp"

namespace rehab {

// A session is 2 phases x 3 exercise blocks x 3 sets.
inline constexpr int kSetsPerSession = 18;

// Goal repetitions for each of the 18 sets, in session order.
class ExercisePlan {
 public:
  // 10 reps for every set.
  ExercisePlan() { goals_.fill(10); }

  explicit ExercisePlan(std::span<const int> goals) {
    if (goals.size() != static_cast<std::size_t>(kSetsPerSession)) {
      throw ConfigError("exercise plan must have exactly 18 goals, got " +
                        std::to_string(goals.size()));
    }
    for (std::size_t i = 0; i < goals.size(); ++i) {
      if (goals[i] < 1) {
        throw ConfigError("exercise plan goal for set " + std::to_string(i + 1) +
                          " must be >= 1, got " + std::to_string(goals[i]));
      }
      goals_[i] = goals[i];
    }
  }

  static ExercisePlan constant(int reps) {
    std::array<int, kSetsPerSession> g;
    g.fill(reps);
    return ExercisePlan(g);
  }

  // set_number is 1-based.
  int goal(int set_number) const {
    if (set_number < 1 || set_number > kSetsPerSession) {
      throw RangeError("set number " + std::to_string(set_number) + " outside 1..18");
    }
    return goals_[set_number - 1];
  }

  const std::array<int, kSetsPerSession>& goals() const { return goals_; }

  friend bool operator==(const ExercisePlan&, const ExercisePlan&) = default;

 private:
  std::array<int, kSetsPerSession> goals_{};
};

namespace detail {

inline int parse_int(std::string_view text, std::string_view what, std::string_view whole) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  int value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError("plan '" + std::string(whole) + "': bad " + std::string(what) + " '" +
                      std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

// Accepts "Nx18", "Nx18;A-B=M[;C=K...]" or an explicit list of 18 integers
// separated by commas or spaces.
inline ExercisePlan parse_plan(std::string_view text) {
  const std::string whole(text);
  const auto x = text.find('x');
  if (x == std::string_view::npos) {
    std::vector<int> goals;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto end = text.find_first_of(", ", pos);
      const auto token = text.substr(pos, end == std::string_view::npos ? end : end - pos);
      if (!token.empty()) goals.push_back(detail::parse_int(token, "goal", whole));
      if (end == std::string_view::npos) break;
      pos = end + 1;
    }
    return ExercisePlan(goals);
  }

  const auto first_semi = text.find(';');
  const auto head = text.substr(0, first_semi);
  const int base = detail::parse_int(head.substr(0, x), "goal", whole);
  const int count = detail::parse_int(head.substr(x + 1), "set count", whole);
  if (count != kSetsPerSession) {
    throw ConfigError("plan '" + whole + "': sessions have 18 sets, not " + std::to_string(count));
  }
  std::array<int, kSetsPerSession> goals;
  goals.fill(base);

  std::size_t pos = first_semi;
  while (pos != std::string_view::npos) {
    const auto next = text.find(';', pos + 1);
    const auto seg = text.substr(pos + 1, next == std::string_view::npos ? next : next - pos - 1);
    pos = next;
    const auto eq = seg.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("plan '" + whole + "': override '" + std::string(seg) + "' lacks '='");
    }
    const auto range = seg.substr(0, eq);
    const int reps = detail::parse_int(seg.substr(eq + 1), "goal", whole);
    const auto dash = range.find('-');
    const int lo = detail::parse_int(range.substr(0, dash), "set", whole);
    const int hi = dash == std::string_view::npos
                       ? lo
                       : detail::parse_int(range.substr(dash + 1), "set", whole);
    if (lo < 1 || hi > kSetsPerSession || lo > hi) {
      throw ConfigError("plan '" + whole + "': set range " + std::string(range) +
                        " outside 1..18");
    }
    for (int s = lo; s <= hi; ++s) goals[s - 1] = reps;
  }
  return ExercisePlan(goals);
}

// Canonical shorthand: most common goal as the base, contiguous runs of other
// values as overrides. parse_plan(to_string(p)) == p.
inline std::string to_string(const ExercisePlan& plan) {
  const auto& g = plan.goals();
  std::map<int, int> counts;
  for (int v : g) ++counts[v];
  int base = g[0];
  int best = 0;
  for (auto [v, c] : counts) {
    if (c > best) {
      best = c;
      base = v;
    }
  }
  std::string out = std::to_string(base) + "x18";
  int s = 0;
  while (s < kSetsPerSession) {
    if (g[s] == base) {
      ++s;
      continue;
    }
    int e = s;
    while (e + 1 < kSetsPerSession && g[e + 1] == g[s]) ++e;
    out += ';' + std::to_string(s + 1);
    if (e > s) out += '-' + std::to_string(e + 1);
    out += '=' + std::to_string(g[s]);
    s = e + 1;
  }
  return out;
}

}  // namespace rehab

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rehab/checkpoint.hpp"
#include "rehab/errors.hpp"
#include "rehab/policy.hpp"
#include "rehab/session_env.hpp"
#include "rehab/trainer.hpp"
#include "rehab/util.hpp"

namespace rehab {

struct EvalSpec {
  std::filesystem::path checkpoint;
  std::vector<Pattern> patterns{kAllPatterns.begin(), kAllPatterns.end()};
  std::vector<Tolerance> tolerances{kAllTolerances.begin(), kAllTolerances.end()};
  std::vector<ExercisePlan> plans{ExercisePlan::constant(10)};
  int episodes = 500;
  std::uint64_t seed = 1;
  ActMode mode = ActMode::Greedy;
  PatientModelConfig model;
  RewardWeights weights;
  int workers = 1;

  void validate() const {
    if (episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
    if (patterns.empty() || tolerances.empty() || plans.empty()) {
      throw ConfigError("eval: profile grid is empty");
    }
    model.validate();
  }
};

struct CellKey {
  Pattern pattern;
  Tolerance tolerance;
  ExercisePlan plan;

  std::string label() const {
    return std::string(name(pattern)) + '|' + std::string(name(tolerance)) + '|' + to_string(plan);
  }

  // Safe for file names.
  std::string slug() const {
    std::string s = std::string(name(pattern)) + '_' + std::string(name(tolerance)) + '_' +
                    to_string(plan);
    for (char& c : s) {
      if (c == ';') c = '_';
      if (c == '=') c = '-';
    }
    return s;
  }
};

struct CellReport {
  CellKey key;
  int episodes = 0;
  double mean_rep_diff = 0.0;  // instructed - baseline, over all sets
  double mean_pe = 0.0;
  double mean_return = 0.0;
  double sd_return = 0.0;
  std::array<int, kSetsPerSession> goal{};
  std::array<double, kSetsPerSession> mean_instructed{};
  std::array<double, kSetsPerSession> mean_baseline{};
  std::array<double, kSetsPerSession> mean_pe_per_set{};

  // Mean instructed reps over sets [first, last] (1-based, inclusive).
  double mean_instructed_over(int first, int last) const {
    double s = 0.0;
    for (int i = first; i <= last; ++i) s += mean_instructed[i - 1];
    return s / (last - first + 1);
  }
};

struct EvalReport {
  std::vector<CellReport> cells;  // grid order: plan, pattern, tolerance

  const CellReport* find(Pattern p, Tolerance t, const ExercisePlan& plan) const {
    for (const auto& c : cells) {
      if (c.key.pattern == p && c.key.tolerance == t && c.key.plan == plan) return &c;
    }
    return nullptr;
  }

  double grand_mean_pe() const {
    double s = 0.0;
    for (const auto& c : cells) s += c.mean_pe;
    return cells.empty() ? 0.0 : s / cells.size();
  }
};

inline CellReport evaluate_cell(const CellKey& key, const InstructorPolicy& policy,
                                const EvalSpec& spec) {
  const std::uint64_t stream = fnv1a(key.label());
  CellReport cell;
  cell.key = key;
  cell.episodes = spec.episodes;
  cell.goal = key.plan.goals();
  SessionEnv env(spec.model, spec.weights);
  double sum_ret = 0.0;
  double sum_ret2 = 0.0;
  double sum_diff = 0.0;
  double sum_pe = 0.0;
  for (int e = 0; e < spec.episodes; ++e) {
    Rng profile_rng = make_rng({spec.seed, stream, static_cast<std::uint64_t>(e), 0});
    Rng action_rng = make_rng({spec.seed, stream, static_cast<std::uint64_t>(e), 1});
    const ProfileSpec ps{key.pattern, key.tolerance, key.plan, profile_rng()};
    const EpisodeTranscript t = run_episode(env, ps, policy, action_rng);
    sum_ret += t.episode_return;
    sum_ret2 += t.episode_return * t.episode_return;
    for (const auto& s : t.steps) {
      const int i = s.outcome.set_number - 1;
      cell.mean_instructed[i] += s.outcome.instructed_reps;
      cell.mean_baseline[i] += s.outcome.baseline_reps;
      cell.mean_pe_per_set[i] += s.outcome.pe_score;
      sum_diff += s.outcome.instructed_reps - s.outcome.baseline_reps;
      sum_pe += s.outcome.pe_score;
    }
  }
  const double n = spec.episodes;
  for (int i = 0; i < kSetsPerSession; ++i) {
    cell.mean_instructed[i] /= n;
    cell.mean_baseline[i] /= n;
    cell.mean_pe_per_set[i] /= n;
  }
  cell.mean_return = sum_ret / n;
  cell.sd_return = std::sqrt(std::max(0.0, sum_ret2 / n - cell.mean_return * cell.mean_return));
  cell.mean_rep_diff = sum_diff / (n * kSetsPerSession);
  cell.mean_pe = sum_pe / (n * kSetsPerSession);
  return cell;
}

// Cells are independent and seeded from their own key, so the report does not
// depend on worker count or completion order.
inline EvalReport evaluate(const EvalSpec& spec, const InstructorPolicy& policy) {
  spec.validate();
  std::vector<CellKey> keys;
  for (const auto& plan : spec.plans) {
    for (Pattern p : spec.patterns) {
      for (Tolerance t : spec.tolerances) keys.push_back({p, t, plan});
    }
  }
  EvalReport report;
  report.cells.resize(keys.size());
  parallel_for(keys.size(), spec.workers,
               [&](std::size_t i) { report.cells[i] = evaluate_cell(keys[i], policy, spec); });
  return report;
}

inline EvalReport evaluate(const EvalSpec& spec) {
  spec.validate();
  auto net = std::make_shared<const ActorCritic>(load_checkpoint(spec.checkpoint).net);
  if (net->actor.input_size() != kFeatureSize || net->num_actions() != kNumActions) {
    throw VersionError("checkpoint network shape does not match the session environment");
  }
  return evaluate(spec, network_policy(std::move(net), spec.mode));
}

inline void write_summary_csv(std::ostream& os, const EvalReport& report) {
  os << "pattern,tolerance,plan,episodes,mean_rep_diff,mean_pe,mean_return\n";
  for (const auto& c : report.cells) {
    os << name(c.key.pattern) << ',' << name(c.key.tolerance) << ',' << to_string(c.key.plan)
       << ',' << c.episodes << ',' << fixed(c.mean_rep_diff) << ',' << fixed(c.mean_pe) << ','
       << fixed(c.mean_return) << '\n';
  }
}

inline void write_curve_csv(std::ostream& os, const CellReport& c) {
  os << "set,goal,mean_instructed,mean_baseline,mean_pe\n";
  for (int i = 0; i < kSetsPerSession; ++i) {
    os << i + 1 << ',' << c.goal[i] << ',' << fixed(c.mean_instructed[i]) << ','
       << fixed(c.mean_baseline[i]) << ',' << fixed(c.mean_pe_per_set[i]) << '\n';
  }
}

// Line chart: goal, instructed and baseline reps on the left axis; PE (0-10)
// on the right axis.
inline std::string render_chart_svg(const CellReport& c) {
  constexpr double W = 720, H = 420, L = 60, R = 60, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  double max_reps = 1.0;
  for (int i = 0; i < kSetsPerSession; ++i) {
    max_reps = std::max({max_reps, double(c.goal[i]), c.mean_instructed[i], c.mean_baseline[i]});
  }
  max_reps = std::ceil(max_reps * 1.15);
  const auto x = [&](int set) { return L + pw * (set - 1) / double(kSetsPerSession - 1); };
  const auto y_reps = [&](double v) { return T + ph * (1.0 - v / max_reps); };
  const auto y_pe = [&](double v) { return T + ph * (1.0 - v / 10.0); };
  const auto line = [&](auto values, auto ymap, const char* colour, const char* dash) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"";
    if (dash[0]) os << " stroke-dasharray=\"" << dash << "\"";
    os << " points=\"";
    for (int i = 0; i < kSetsPerSession; ++i) {
      os << fixed(x(i + 1), 1) << ',' << fixed(ymap(values(i)), 1) << ' ';
    }
    os << "\"/>\n";
    return os.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << L << "\" y=\"22\" font-size=\"14\">" << name(c.key.pattern) << " / "
      << name(c.key.tolerance) << " / " << to_string(c.key.plan) << " (" << c.episodes
      << " episodes)</text>\n";
  svg << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int set = 1; set <= kSetsPerSession; ++set) {
    svg << "<text x=\"" << fixed(x(set), 1) << "\" y=\"" << H - B + 18
        << "\" text-anchor=\"middle\">" << set << "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double v = max_reps * k / 5.0;
    svg << "<text x=\"" << L - 8 << "\" y=\"" << fixed(y_reps(v) + 4, 1)
        << "\" text-anchor=\"end\">" << fixed(v, 1) << "</text>\n";
    svg << "<text x=\"" << W - R + 8 << "\" y=\"" << fixed(y_pe(2.0 * k) + 4, 1) << "\">"
        << 2 * k << "</text>\n";
  }
  svg << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">set</text>\n";
  svg << "<text x=\"14\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 14 " << T + ph / 2
      << ")\" text-anchor=\"middle\">reps</text>\n";
  svg << "<text x=\"" << W - 14 << "\" y=\"" << T + ph / 2 << "\" transform=\"rotate(90 "
      << W - 14 << ' ' << T + ph / 2 << ")\" text-anchor=\"middle\">PE</text>\n";
  svg << line([&](int i) { return double(c.goal[i]); }, y_reps, "#999999", "2,3");
  svg << line([&](int i) { return c.mean_baseline[i]; }, y_reps, "#1f77b4", "6,4");
  svg << line([&](int i) { return c.mean_instructed[i]; }, y_reps, "#d62728", "");
  svg << line([&](int i) { return c.mean_pe_per_set[i]; }, y_pe, "#2ca02c", "");
  const char* names[] = {"goal", "baseline", "instructed", "PE (right axis)"};
  const char* colours[] = {"#999999", "#1f77b4", "#d62728", "#2ca02c"};
  for (int k = 0; k < 4; ++k) {
    const double lx = L + 10 + 150 * k;
    svg << "<line x1=\"" << lx << "\" y1=\"" << T + 12 << "\" x2=\"" << lx + 20 << "\" y2=\""
        << T + 12 << "\" stroke=\"" << colours[k] << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << lx + 25 << "\" y=\"" << T + 16 << "\">" << names[k] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

struct ExportedFiles {
  std::filesystem::path summary;
  std::vector<std::filesystem::path> curves;
  std::vector<std::filesystem::path> charts;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << content;
  if (!out) throw FileError("failed writing " + path.string());
}

}  // namespace detail

// summary.csv, curves/<cell>.csv and charts/<cell>.svg under out_dir.
inline ExportedFiles export_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "curves", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "charts", ec);
  if (ec) throw FileError("cannot create " + out_dir.string() + ": " + ec.message());

  ExportedFiles files;
  files.summary = out_dir / "summary.csv";
  std::ostringstream summary;
  write_summary_csv(summary, report);
  detail::write_file(files.summary, summary.str());
  for (const auto& c : report.cells) {
    std::ostringstream curve;
    write_curve_csv(curve, c);
    files.curves.push_back(out_dir / "curves" / (c.key.slug() + ".csv"));
    detail::write_file(files.curves.back(), curve.str());
    files.charts.push_back(out_dir / "charts" / (c.key.slug() + ".svg"));
    detail::write_file(files.charts.back(), render_chart_svg(c));
  }
  return files;
}

}  // namespace rehab

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rehab/errors.hpp"
#include "rehab/model_config.hpp"
#include "rehab/patient_model.hpp"
#include "rehab/util.hpp"

namespace rehab {

enum class Condition { Under, Over, Optimal };

inline std::string_view name(Condition c) {
  switch (c) {
    case Condition::Under: return "under";
    case Condition::Over: return "over";
    case Condition::Optimal: return "optimal";
  }
  return "?";
}

// One session (or one participant, the tool does not care) summarised.
struct SessionSummary {
  std::string id;
  Condition condition = Condition::Optimal;
  double avg_reps_pct = 0.0;  // achieved as % of instructed
  double avg_pe = 0.0;

  friend bool operator==(const SessionSummary&, const SessionSummary&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(std::string_view(line).substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

}  // namespace detail

// Reads `id,condition,avg_reps_pct,avg_pe` (columns in any order, extra
// columns ignored). Every bad row is reported with its line number.
inline std::vector<SessionSummary> ingest(std::istream& in, const std::string& source = "<input>") {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw ValidationError(source + ": empty file, expected a header row");
  const auto column = [&](const char* col) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) {
      throw ValidationError(source + ": line " + std::to_string(line_no) + ": missing column '" +
                            col + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("id"), c_cond = column("condition"),
                    c_reps = column("avg_reps_pct"), c_pe = column("avg_pe");
  const std::size_t needed = std::max({c_id, c_cond, c_reps, c_pe}) + 1;

  std::vector<SessionSummary> rows;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    const auto fail = [&](const std::string& why) {
      problems.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    if (f.size() < needed) {
      fail("expected at least " + std::to_string(needed) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    SessionSummary s;
    s.id = f[c_id];
    bool ok = true;
    if (s.id.empty()) {
      fail("empty id");
      ok = false;
    }
    if (f[c_cond] == "under") {
      s.condition = Condition::Under;
    } else if (f[c_cond] == "over") {
      s.condition = Condition::Over;
    } else if (f[c_cond] == "optimal") {
      s.condition = Condition::Optimal;
    } else {
      fail("condition '" + f[c_cond] + "' is not one of under, over, optimal");
      ok = false;
    }
    const auto reps = detail::parse_double(f[c_reps]);
    const auto pe = detail::parse_double(f[c_pe]);
    if (!reps) {
      fail("avg_reps_pct '" + f[c_reps] + "' is not a number");
      ok = false;
    } else if (*reps < 0.0) {
      fail("avg_reps_pct must be >= 0");
      ok = false;
    }
    if (!pe) {
      fail("avg_pe '" + f[c_pe] + "' is not a number");
      ok = false;
    } else if (*pe < 0.0 || *pe > 10.0) {
      fail("avg_pe " + f[c_pe] + " outside [0, 10]");
      ok = false;
    }
    if (!ok) continue;
    s.avg_reps_pct = *reps;
    s.avg_pe = *pe;
    rows.push_back(std::move(s));
  }
  if (!problems.empty()) {
    std::string msg = source + ": " + std::to_string(problems.size()) + " invalid row(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return rows;
}

inline std::vector<SessionSummary> ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  return ingest(in, path.string());
}

using Point2 = std::array<double, 2>;

struct KMeansResult {
  std::vector<Point2> centroids;  // in the input units
  std::vector<int> assignment;
  std::vector<double> wcss_history;  // standardised units, one entry per Lloyd iteration
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double sq_dist(const Point2& a, const Point2& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
}

inline double wcss(const std::vector<Point2>& pts, const std::vector<Point2>& centroids,
                   const std::vector<int>& assign) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += sq_dist(pts[i], centroids[assign[i]]);
  return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding on z-scored features. Points are
// processed in sorted order, so the result does not depend on input order.
// Stops after max_iter iterations or when no centroid moves more than tol.
inline KMeansResult kmeans(const std::vector<Point2>& input, int k, std::uint64_t seed,
                           int max_iter = 300, double tol = 1e-6) {
  if (k < 1) throw InputError("k must be >= 1");
  if (static_cast<int>(input.size()) < k) {
    throw InputError("k-means needs at least k=" + std::to_string(k) + " points, got " +
                     std::to_string(input.size()));
  }
  const std::size_t n = input.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return input[a] < input[b]; });
  {
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || input[order[i]] != input[order[i - 1]]) ++distinct;
    }
    if (static_cast<int>(distinct) < k) {
      throw InputError("degenerate input: only " + std::to_string(distinct) +
                       " distinct point(s) for k=" + std::to_string(k));
    }
  }

  Point2 mean{0.0, 0.0}, sd{0.0, 0.0};
  for (std::size_t i : order) {
    mean[0] += input[i][0] / n;
    mean[1] += input[i][1] / n;
  }
  for (std::size_t i : order) {
    const auto& p = input[i];
    sd[0] += (p[0] - mean[0]) * (p[0] - mean[0]) / n;
    sd[1] += (p[1] - mean[1]) * (p[1] - mean[1]) / n;
  }
  for (double& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;
  std::vector<Point2> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = input[order[i]];
    pts[i] = {(p[0] - mean[0]) / sd[0], (p[1] - mean[1]) / sd[1]};
  }

  Rng rng = make_rng({seed, 0x6b6d65616e73ULL});
  std::vector<Point2> centroids;
  centroids.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) d2[i] = std::min(d2[i], detail::sq_dist(pts[i], c));
      total += d2[i];
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      if (u < d2[i]) break;
      u -= d2[i];
    }
    centroids.push_back(pts[pick]);
  }

  KMeansResult res;
  std::vector<int> assign(n, 0);
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (detail::sq_dist(pts[i], centroids[c]) < detail::sq_dist(pts[i], centroids[best])) best = c;
      }
      assign[i] = best;
    }
    // Empty clusters take the point farthest from its centroid.
    std::vector<int> sizes(k, 0);
    for (int a : assign) ++sizes[a];
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = detail::sq_dist(pts[i], centroids[assign[i]]);
        if (sizes[assign[i]] > 1 && d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --sizes[assign[far]];
      assign[far] = c;
      ++sizes[c];
      centroids[c] = pts[far];
    }
    std::vector<Point2> next(k, Point2{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
      next[assign[i]][0] += pts[i][0] / sizes[assign[i]];
      next[assign[i]][1] += pts[i][1] / sizes[assign[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(detail::sq_dist(next[c], centroids[c])));
    centroids = std::move(next);
    res.wcss_history.push_back(detail::wcss(pts, centroids, assign));
    if (shift < tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, max_iter);

  res.assignment.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) res.assignment[order[i]] = assign[i];
  for (const auto& c : centroids) {
    res.centroids.push_back({c[0] * sd[0] + mean[0], c[1] * sd[1] + mean[1]});
  }
  return res;
}

// How under- and over-exertion rows are clustered.
//   PerCondition: each condition separately with k clusters. Over clusters are
//     ranked by mean reps% (descending), under clusters by mean PE (ascending);
//     rank 0 -> High performer.
//   Joint: all under/over rows together, ranked by the over-condition mean
//     reps% of each cluster.
enum class ClusterMode { PerCondition, Joint };

struct ConditionStats {
  int count = 0;
  double mean_reps_pct = 0.0;
  double mean_pe = 0.0;
};

struct Cluster {
  Tolerance label = Tolerance::Average;
  std::optional<Condition> scope;  // set in PerCondition mode
  Point2 centroid{};                // reps%, PE
  std::vector<std::size_t> members;  // indices into the ingested rows
  ConditionStats under;
  ConditionStats over;
};

struct ClusterModel {
  int k = 3;
  ClusterMode mode = ClusterMode::PerCondition;
  std::vector<Cluster> clusters;
  std::vector<int> assignment;  // per input row; -1 for rows not clustered (optimal)
  std::vector<std::vector<double>> wcss_histories;
};

namespace detail {

inline std::string_view name(ClusterMode m) {
  return m == ClusterMode::Joint ? "joint" : "per_condition";
}

inline void accumulate(ConditionStats& s, const SessionSummary& row) {
  s.mean_reps_pct = (s.mean_reps_pct * s.count + row.avg_reps_pct) / (s.count + 1);
  s.mean_pe = (s.mean_pe * s.count + row.avg_pe) / (s.count + 1);
  ++s.count;
}

// Runs k-means on the selected rows and appends labelled clusters.
inline void cluster_rows(const std::vector<SessionSummary>& rows,
                         const std::vector<std::size_t>& selected, int k, std::uint64_t seed,
                         std::optional<Condition> scope, ClusterModel& model) {
  std::vector<Point2> pts;
  for (auto i : selected) pts.push_back({rows[i].avg_reps_pct, rows[i].avg_pe});
  const KMeansResult km = kmeans(pts, k, seed);
  model.wcss_histories.push_back(km.wcss_history);

  std::vector<Cluster> found(k);
  for (int c = 0; c < k; ++c) {
    found[c].scope = scope;
    found[c].centroid = km.centroids[c];
  }
  for (std::size_t j = 0; j < selected.size(); ++j) {
    Cluster& c = found[km.assignment[j]];
    const auto& row = rows[selected[j]];
    c.members.push_back(selected[j]);
    accumulate(row.condition == Condition::Under ? c.under : c.over, row);
  }

  // Rank: a higher rank key means a more tolerant group.
  const auto key = [&](const Cluster& c) {
    if (scope == Condition::Under) return -c.under.mean_pe;
    if (c.over.count > 0) return c.over.mean_reps_pct;
    return c.centroid[0] - 1e9;  // clusters with no over rows rank last
  };
  std::vector<int> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
    const double ka = key(found[a]), kb = key(found[b]);
    if (ka != kb) return ka > kb;
    return found[a].centroid < found[b].centroid;
  });
  const std::size_t base = model.clusters.size();
  std::vector<int> index_of(k);
  for (int r = 0; r < k; ++r) {
    Cluster c = found[rank[r]];
    // rank 0 -> High, last -> Low; extra middle ranks share Average.
    c.label = r == 0 ? Tolerance::High : (r == k - 1 ? Tolerance::Low : Tolerance::Average);
    index_of[rank[r]] = static_cast<int>(base) + r;
    model.clusters.push_back(std::move(c));
  }
  for (std::size_t j = 0; j < selected.size(); ++j) {
    model.assignment[selected[j]] = index_of[km.assignment[j]];
  }
}

}  // namespace detail

inline ClusterModel cluster_sessions(const std::vector<SessionSummary>& rows, int k,
                                     std::uint64_t seed,
                                     ClusterMode mode = ClusterMode::PerCondition) {
  ClusterModel model;
  model.k = k;
  model.mode = mode;
  model.assignment.assign(rows.size(), -1);
  std::vector<std::size_t> under, over, both;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].condition == Condition::Under) under.push_back(i);
    if (rows[i].condition == Condition::Over) over.push_back(i);
    if (rows[i].condition != Condition::Optimal) both.push_back(i);
  }
  if (mode == ClusterMode::Joint) {
    detail::cluster_rows(rows, both, k, seed, std::nullopt, model);
  } else {
    for (auto [cond, sel] : {std::pair{Condition::Under, &under}, std::pair{Condition::Over, &over}}) {
      if (static_cast<int>(sel->size()) < k) {
        throw InputError(std::string(name(cond)) + " condition has " + std::to_string(sel->size()) +
                         " row(s); k-means needs at least k=" + std::to_string(k));
      }
      detail::cluster_rows(rows, *sel, k, seed, cond, model);
    }
  }
  return model;
}

// Under/over PE anchors per tolerance group, from the per-cluster condition
// means. Clusters sharing a label are pooled.
inline std::array<PeAnchors, 3> derive_anchors(const ClusterModel& model) {
  std::array<ConditionStats, 3> under{}, over{};
  const auto pool = [](ConditionStats& into, const ConditionStats& s) {
    if (s.count == 0) return;
    const int n = into.count + s.count;
    into.mean_pe = (into.mean_pe * into.count + s.mean_pe * s.count) / n;
    into.mean_reps_pct = (into.mean_reps_pct * into.count + s.mean_reps_pct * s.count) / n;
    into.count = n;
  };
  for (const auto& c : model.clusters) {
    const int t = static_cast<int>(c.label);
    pool(under[t], c.under);
    pool(over[t], c.over);
  }
  std::array<PeAnchors, 3> out{};
  for (Tolerance t : kAllTolerances) {
    const int i = static_cast<int>(t);
    if (under[i].count == 0 || over[i].count == 0) {
      throw InputError("incomplete data: " + std::string(name(t)) + " performer group has no " +
                       (under[i].count == 0 ? "under" : "over") + "-exertion sessions");
    }
    out[i] = {under[i].mean_pe, over[i].mean_pe};
  }
  return out;
}

inline void write_cluster_report_csv(std::ostream& os, const ClusterModel& m) {
  os << "cluster,scope,label,size,centroid_reps_pct,centroid_pe,under_n,under_mean_reps_pct,"
        "under_mean_pe,over_n,over_mean_reps_pct,over_mean_pe\n";
  for (std::size_t i = 0; i < m.clusters.size(); ++i) {
    const auto& c = m.clusters[i];
    os << i << ',' << (c.scope ? name(*c.scope) : std::string_view("all")) << ','
       << name(c.label) << ',' << c.members.size() << ',' << fixed(c.centroid[0]) << ','
       << fixed(c.centroid[1]) << ',' << c.under.count << ',' << fixed(c.under.mean_reps_pct) << ','
       << fixed(c.under.mean_pe) << ',' << c.over.count << ',' << fixed(c.over.mean_reps_pct) << ','
       << fixed(c.over.mean_pe) << '\n';
  }
}

inline void write_assignments_csv(std::ostream& os, const std::vector<SessionSummary>& rows,
                                  const ClusterModel& m) {
  os << "id,condition,cluster,label\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << rows[i].id << ',' << name(rows[i].condition) << ',';
    if (m.assignment[i] < 0) {
      os << ",\n";
    } else {
      os << m.assignment[i] << ',' << name(m.clusters[m.assignment[i]].label) << '\n';
    }
  }
}

// Published per-group, per-condition averages, one row each.
inline std::vector<SessionSummary> group_means_fixture() {
  return {{"high_under", Condition::Under, 106.3, 1.3}, {"high_over", Condition::Over, 86.9, 4.4},
          {"avg_under", Condition::Under, 115.9, 1.8},  {"avg_over", Condition::Over, 52.9, 5.5},
          {"low_under", Condition::Under, 102.4, 2.4},  {"low_over", Condition::Over, 17.8, 6.0}};
}

struct LabelledSummary {
  SessionSummary summary;
  Tolerance truth;
};

// Gaussian blobs around each group's table means for one condition.
inline std::vector<LabelledSummary> synthetic_blobs(Condition condition, int per_group,
                                                    double sigma_reps, double sigma_pe,
                                                    std::uint64_t seed) {
  Rng rng = make_rng({seed, 0x626c6f6273ULL});
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<LabelledSummary> out;
  for (const auto& row : group_means_fixture()) {
    if (row.condition != condition) continue;
    const Tolerance truth = row.id.starts_with("high") ? Tolerance::High
                            : row.id.starts_with("avg") ? Tolerance::Average
                                                        : Tolerance::Low;
    for (int i = 0; i < per_group; ++i) {
      SessionSummary s{row.id + "_" + std::to_string(i), condition,
                       std::max(0.0, row.avg_reps_pct + sigma_reps * z(rng)),
                       std::clamp(row.avg_pe + sigma_pe * z(rng), 0.0, 10.0)};
      out.push_back({std::move(s), truth});
    }
  }
  return out;
}

}  // namespace rehab

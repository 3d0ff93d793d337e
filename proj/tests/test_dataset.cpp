#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "rehab/dataset.hpp"

using namespace rehab;

namespace {

std::vector<SessionSummary> parse(const std::string& text) {
  std::istringstream in(text);
  return ingest(in, "mem.csv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

double label_accuracy(const std::vector<LabelledSummary>& data, const ClusterModel& m) {
  int hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    hit += m.clusters[m.assignment[i]].label == data[i].truth;
  }
  return double(hit) / data.size();
}

}  // namespace

TEST(Ingest, Examples) {
  const auto rows = parse("id,condition,avg_reps_pct,avg_pe\ns1,over,86.9,4.4\ns2,under,106.3,1.3\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (SessionSummary{"s1", Condition::Over, 86.9, 4.4}));
  EXPECT_EQ(rows[1], (SessionSummary{"s2", Condition::Under, 106.3, 1.3}));
}

TEST(Ingest, ColumnOrderAndExtras) {
  const auto rows = parse("avg_pe,note,id,avg_reps_pct,condition\r\n3.0,x,a,100,optimal\r\n\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], (SessionSummary{"a", Condition::Optimal, 100.0, 3.0}));
}

TEST(Ingest, ReportsEveryBadRowWithLineNumbers) {
  const auto msg = error_of(
      "id,condition,avg_reps_pct,avg_pe\n"
      "ok,over,50,5\n"
      "s3,over,80,12\n"
      "s4,sideways,80,4\n"
      "s5,under,abc,1\n"
      "s6,under,-1,1\n"
      "s7,under\n");
  EXPECT_NE(msg.find("5 invalid row(s)"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 3: avg_pe 12 outside [0, 10]"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 4: condition"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 5: avg_reps_pct 'abc'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 6: avg_reps_pct must be >= 0"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 7: expected"), std::string::npos) << msg;
}

TEST(Ingest, MissingColumnAndFile) {
  EXPECT_NE(error_of("id,condition,avg_pe\na,over,3\n").find("missing column 'avg_reps_pct'"),
            std::string::npos);
  EXPECT_FALSE(error_of("").empty());
  EXPECT_THROW(ingest(std::filesystem::path("/nonexistent/sessions.csv")), FileError);
}

TEST(KMeans, ExactFit) {
  const std::vector<Point2> pts{{0.0, 0.0}, {10.0, 1.0}, {3.0, 7.0}};
  const auto r = kmeans(pts, 3, 1);
  std::set<int> used(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(used.size(), 3u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(r.centroids[r.assignment[i]][0], pts[i][0], 1e-9);
    EXPECT_NEAR(r.centroids[r.assignment[i]][1], pts[i][1], 1e-9);
  }
  EXPECT_TRUE(r.converged);
}

TEST(KMeans, DegenerateInputs) {
  EXPECT_THROW(kmeans({{1.0, 1.0}, {2.0, 2.0}}, 3, 1), InputError);
  EXPECT_THROW(kmeans({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}, 3, 1), InputError);
  // two distinct locations cannot fill three clusters either
  EXPECT_THROW(kmeans({{1.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}}, 3, 1), InputError);
  EXPECT_THROW(kmeans({{1.0, 1.0}}, 0, 1), InputError);
}

TEST(KMeans, WcssNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Point2> pts;
    for (int i = 0; i < 90; ++i) pts.push_back({n(rng) * 20 + (i % 3) * 15, n(rng) * 2});
    const auto r = kmeans(pts, 3, seed);
    ASSERT_FALSE(r.wcss_history.empty());
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) {
      EXPECT_LE(r.wcss_history[i], r.wcss_history[i - 1] + 1e-12) << seed << ' ' << i;
    }
    EXPECT_LE(r.iterations, 300);
  }
}

TEST(KMeans, DeterministicAndOrderFree) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Point2> pts;
  for (int i = 0; i < 60; ++i) pts.push_back({n(rng) * 10, n(rng)});
  const auto a = kmeans(pts, 3, 9);
  const auto b = kmeans(pts, 3, 9);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);

  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Point2> shuffled;
  for (auto i : perm) shuffled.push_back(pts[i]);
  const auto c = kmeans(shuffled, 3, 9);
  EXPECT_EQ(c.centroids, a.centroids);
  for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_EQ(c.assignment[j], a.assignment[perm[j]]);
}

TEST(Clustering, GroupMeansRoundTrip) {
  const auto model = cluster_sessions(group_means_fixture(), 3, 1);
  const auto a = derive_anchors(model);
  EXPECT_EQ(a[0].under, 2.4);
  EXPECT_EQ(a[0].over, 6.0);
  EXPECT_EQ(a[1].under, 1.8);
  EXPECT_EQ(a[1].over, 5.5);
  EXPECT_EQ(a[2].under, 1.3);
  EXPECT_EQ(a[2].over, 4.4);
  for (Tolerance t : kAllTolerances) EXPECT_EQ(a[static_cast<int>(t)], default_anchors(t));
}

TEST(Clustering, PeShiftMovesAnchors) {
  auto rows = group_means_fixture();
  for (auto& r : rows) r.avg_pe += 1.0;
  const auto a = derive_anchors(cluster_sessions(rows, 3, 1));
  for (Tolerance t : kAllTolerances) {
    EXPECT_DOUBLE_EQ(a[static_cast<int>(t)].under, default_anchors(t).under + 1.0);
    EXPECT_DOUBLE_EQ(a[static_cast<int>(t)].over, default_anchors(t).over + 1.0);
  }
}

TEST(Clustering, TightBlobsPerfect) {
  for (Condition cond : {Condition::Over, Condition::Under}) {
    const auto data = synthetic_blobs(cond, 20, 0.01, 0.01, 4);
    std::vector<SessionSummary> rows;
    for (const auto& d : data) rows.push_back(d.summary);
    for (const auto& t : synthetic_blobs(cond == Condition::Over ? Condition::Under : Condition::Over, 5, 0.01, 0.01, 5)) {
      rows.push_back(t.summary);
    }
    const auto model = cluster_sessions(rows, 3, 7);
    EXPECT_EQ(label_accuracy(data, model), 1.0) << name(cond);
  }
}

TEST(Clustering, SeparatedBlobsAcrossSeeds) {
  // Inter-centroid distances are at least ten blob sigmas on each condition.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto over = synthetic_blobs(Condition::Over, 30, 2.0, 0.05, seed);
    const auto under = synthetic_blobs(Condition::Under, 30, 0.3, 0.05, seed + 100);
    std::vector<LabelledSummary> all = over;
    all.insert(all.end(), under.begin(), under.end());
    std::vector<SessionSummary> rows;
    for (const auto& d : all) rows.push_back(d.summary);
    const auto model = cluster_sessions(rows, 3, seed);
    EXPECT_GE(label_accuracy(all, model), 0.95) << seed;
  }
}

TEST(Clustering, LabelsIgnoreRowOrder) {
  auto data = synthetic_blobs(Condition::Over, 15, 3.0, 0.2, 8);
  const auto under = synthetic_blobs(Condition::Under, 15, 1.0, 0.1, 9);
  data.insert(data.end(), under.begin(), under.end());
  std::vector<SessionSummary> rows;
  for (const auto& d : data) rows.push_back(d.summary);
  const auto base = cluster_sessions(rows, 3, 2);
  std::map<std::string, Tolerance> want;
  for (std::size_t i = 0; i < rows.size(); ++i) want[rows[i].id] = base.clusters[base.assignment[i]].label;

  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto m = cluster_sessions(rows, 3, 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ASSERT_EQ(m.clusters[m.assignment[i]].label, want[rows[i].id]) << rows[i].id;
    }
    const auto got = derive_anchors(m), ref = derive_anchors(base);
    for (int t = 0; t < 3; ++t) {
      EXPECT_NEAR(got[t].under, ref[t].under, 1e-12);
      EXPECT_NEAR(got[t].over, ref[t].over, 1e-12);
    }
  }
}

TEST(Clustering, JointMode) {
  const auto model = cluster_sessions(group_means_fixture(), 3, 1, ClusterMode::Joint);
  EXPECT_EQ(model.clusters.size(), 3u);
  for (int a : model.assignment) EXPECT_GE(a, 0);
}

TEST(Clustering, OptimalRowsAreNotClustered) {
  auto rows = group_means_fixture();
  rows.push_back({"opt", Condition::Optimal, 100.0, 3.0});
  const auto m = cluster_sessions(rows, 3, 1);
  EXPECT_EQ(m.assignment.back(), -1);
}

TEST(Clustering, TooFewRows) {
  std::vector<SessionSummary> rows{{"a", Condition::Over, 50, 5}, {"b", Condition::Under, 100, 2}};
  EXPECT_THROW(cluster_sessions(rows, 3, 1), InputError);
}

TEST(Clustering, MissingConditionIsIncomplete) {
  ClusterModel m;
  for (Tolerance t : kAllTolerances) {
    Cluster c;
    c.label = t;
    c.over = {1, 50.0, 5.0};
    m.clusters.push_back(c);
  }
  try {
    derive_anchors(m);
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("incomplete data"), std::string::npos);
  }
}

TEST(Fragment, RoundTripsIntoModelConfig) {
  const auto a = derive_anchors(cluster_sessions(group_means_fixture(), 3, 1));
  PatientModelConfig cfg;
  cfg.anchors_for(Tolerance::Low) = {0.5, 9.0};
  apply_anchors_fragment(anchors_fragment(a), cfg);
  EXPECT_EQ(cfg, PatientModelConfig{});
  EXPECT_THROW(apply_anchors_fragment(nlohmann::json{{"anchors", 1}}, cfg), ConfigError);
}

TEST(Reports, Deterministic) {
  const auto rows = group_means_fixture();
  std::ostringstream a, b, c;
  write_cluster_report_csv(a, cluster_sessions(rows, 3, 5));
  write_cluster_report_csv(b, cluster_sessions(rows, 3, 5));
  EXPECT_EQ(a.str(), b.str());
  write_assignments_csv(c, rows, cluster_sessions(rows, 3, 5));
  EXPECT_NE(c.str().find("high_over,over,"), std::string::npos);
}

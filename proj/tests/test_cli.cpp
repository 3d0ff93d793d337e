#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr together
};

Run rehab(const std::string& args) {
  const std::string cmd = std::string("\"") + REHAB_CLI_PATH + "\" " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rehab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string at(const std::string& name) const { return "\"" + (dir_ / name).string() + "\""; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

constexpr const char* kSmallTrain = "--timesteps 720 --horizon 288 --minibatch 64 --hidden 16,16";

}  // namespace

TEST_F(Cli, NoCommandIsUsageError) {
  EXPECT_EQ(rehab("").code, 2);
  EXPECT_EQ(rehab("frobnicate").code, 2);
  EXPECT_EQ(rehab("--help").code, 0);
  EXPECT_EQ(rehab("train --help").code, 0);
}

TEST_F(Cli, TrainZeroTimestepsIsUsageError) {
  const auto r = rehab("train --timesteps 0 --out " + at("t"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("train.timesteps"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainWritesArtifactsAndRerunsIdentically) {
  ASSERT_EQ(rehab(std::string("train ") + kSmallTrain + " --seed 4 --out " + at("a")).code, 0);
  for (const char* f : {"policy.ckpt", "train_log.csv", "config.toml"}) {
    EXPECT_TRUE(fs::exists(path("a") / f)) << f;
  }
  const auto again = rehab("train --config " + at("a/config.toml") + " --workers 2 --out " + at("b"));
  ASSERT_EQ(again.code, 0) << again.out;
  EXPECT_EQ(slurp(path("a/policy.ckpt")), slurp(path("b/policy.ckpt")));
  EXPECT_EQ(slurp(path("a/train_log.csv")), slurp(path("b/train_log.csv")));

  // A flag wins over the file.
  ASSERT_EQ(rehab("train --config " + at("a/config.toml") + " --seed 5 --out " + at("c")).code, 0);
  EXPECT_NE(slurp(path("a/policy.ckpt")), slurp(path("c/policy.ckpt")));
  EXPECT_NE(slurp(path("c/config.toml")).find("seed=5"), std::string::npos);
}

TEST_F(Cli, EvalMissingCheckpointIsFileError) {
  const auto r = rehab("eval " + at("missing.ckpt") + " --out " + at("e"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("missing.ckpt"), std::string::npos);
}

TEST_F(Cli, EvalCorruptCheckpoint) {
  std::ofstream(path("junk.ckpt")) << "not a checkpoint";
  EXPECT_EQ(rehab("eval " + at("junk.ckpt") + " --out " + at("e")).code, 3);
}

TEST_F(Cli, EvalWritesReportAndRerunsIdentically) {
  ASSERT_EQ(rehab(std::string("train ") + kSmallTrain + " --out " + at("a")).code, 0);
  const auto r = rehab("eval " + at("a/policy.ckpt") +
                       " --patterns linear_increase --plan 10x18 --plan \"7x18;7-9=9\" --episodes 10"
                       " --mode sample --out " + at("e1"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string summary = slurp(path("e1/summary.csv"));
  EXPECT_NE(summary.find("linear_increase,high,7x18;7-9=9,10,"), std::string::npos) << summary;
  EXPECT_TRUE(fs::exists(path("e1/curves/linear_increase_low_7x18_7-9-9.csv")));
  EXPECT_TRUE(fs::exists(path("e1/charts/linear_increase_low_10x18.svg")));

  ASSERT_EQ(rehab("eval --config " + at("e1/config.toml") + " --workers 3 --out " + at("e2")).code, 0);
  EXPECT_EQ(summary, slurp(path("e2/summary.csv")));
  for (const auto& f : fs::directory_iterator(path("e1/curves"))) {
    EXPECT_EQ(slurp(f.path()), slurp(path("e2/curves") / f.path().filename())) << f.path();
  }
}

TEST_F(Cli, EvalScriptedPolicies) {
  const auto r = rehab("eval oracle --patterns good_day --tolerances low --episodes 5 --noise 0 --out " + at("o"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(path("o/summary.csv")).find("good_day,low,10x18,5,0.000000,3.000000,18.000000"),
            std::string::npos);
  EXPECT_EQ(rehab("eval fixed-0 --out " + at("f")).code, 2);
}

TEST_F(Cli, UnknownNamesListValidValues) {
  const auto r = rehab("simulate --pattern sideways --out " + at("s"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("struggling_day"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("linear_increase"), std::string::npos) << r.out;
  const auto t = rehab("simulate --tolerance medium --out " + at("s"));
  EXPECT_EQ(t.code, 2);
  EXPECT_NE(t.out.find("average"), std::string::npos) << t.out;
  EXPECT_EQ(rehab("eval oracle --patterns linear,nope --out " + at("e")).code, 2);
  EXPECT_EQ(rehab("simulate --plan 10x17 --out " + at("s")).code, 2);
}

TEST_F(Cli, SimulateOracleTranscript) {
  const auto r = rehab("simulate --pattern struggling_day --tolerance low --policy oracle --noise 0 --out " +
                       at("s"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(slurp(path("s/transcript.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "set,goal,action_pct,instructed,baseline,achieved,pe,r_reps,r_feedback,total");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    // struggling day: 0.7 x 10 = 7 reps every set, instructed exactly
    EXPECT_EQ(line, std::to_string(rows) + ",10,-30,7,7,7,3.000000,1.000000,1.000000,1.000000");
  }
  EXPECT_EQ(rows, 18);
  EXPECT_NE(r.out.find("return 18.0000"), std::string::npos);
}

TEST_F(Cli, SimulateFixedSix) {
  ASSERT_EQ(rehab("simulate --policy fixed-6 --plan 8x18 --out " + at("s")).code, 0);
  std::istringstream in(slurp(path("s/transcript.csv")));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string set, goal, pct, instructed;
    std::getline(f, set, ',');
    std::getline(f, goal, ',');
    std::getline(f, pct, ',');
    std::getline(f, instructed, ',');
    EXPECT_EQ(instructed, "6") << line;
  }
}

TEST_F(Cli, ModelFragmentOverrides) {
  std::ofstream(path("m.json")) << R"({"patterns": {"linear": {"noise_sigma": 0}}})";
  const auto r = rehab("simulate --model " + at("m.json") + " --out " + at("s"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("return 18.0000"), std::string::npos) << r.out;
  std::ofstream(path("bad.json")) << R"({"anchors": {"low": {"under": 4}}})";
  EXPECT_EQ(rehab("simulate --model " + at("bad.json") + " --out " + at("s")).code, 2);
  EXPECT_EQ(rehab("simulate --model " + at("none.json") + " --out " + at("s")).code, 3);
  EXPECT_EQ(rehab("simulate --noise -1 --out " + at("s")).code, 2);
}

TEST_F(Cli, ClusterTwoRowsIsInputError) {
  std::ofstream(path("two.csv")) << "id,condition,avg_reps_pct,avg_pe\na,under,100,2\nb,over,50,5\n";
  const auto r = rehab("cluster " + at("two.csv") + " --k 3 --out " + at("c"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.out.find("k=3"), std::string::npos) << r.out;
}

TEST_F(Cli, ClusterBadRowsReportLineNumbers) {
  std::ofstream(path("bad.csv")) << "id,condition,avg_reps_pct,avg_pe\na,sideways,100,2\nb,over,x,5\n";
  const auto r = rehab("cluster " + at("bad.csv") + " --out " + at("c"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.out.find("line 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
  EXPECT_EQ(rehab("cluster " + at("absent.csv") + " --out " + at("c")).code, 3);
}

TEST_F(Cli, ClusterGroupMeansAnchorsAndDeterminism) {
  std::ofstream(path("means.csv")) << "id,condition,avg_reps_pct,avg_pe\n"
                                   "high_under,under,106.3,1.3\nhigh_over,over,86.9,4.4\n"
                                   "avg_under,under,115.9,1.8\navg_over,over,52.9,5.5\n"
                                   "low_under,under,102.4,2.4\nlow_over,over,17.8,6.0\n";
  ASSERT_EQ(rehab("cluster " + at("means.csv") + " --seed 7 --out " + at("c1")).code, 0);
  ASSERT_EQ(rehab("cluster " + at("means.csv") + " --seed 7 --out " + at("c2")).code, 0);
  EXPECT_EQ(slurp(path("c1/cluster_report.csv")), slurp(path("c2/cluster_report.csv")));
  EXPECT_EQ(slurp(path("c1/assignments.csv")), slurp(path("c2/assignments.csv")));

  // The written fragment feeds straight back into the patient model.
  const auto r = rehab("simulate --model " + at("c1/anchors.json") + " --out " + at("s"));
  EXPECT_EQ(r.code, 0) << r.out;
  const std::string anchors = slurp(path("c1/anchors.json"));
  for (const char* v : {"1.3", "1.8", "2.4", "4.4", "5.5", "6.0"}) {
    EXPECT_NE(anchors.find(v), std::string::npos) << v;
  }
}

TEST_F(Cli, RunsDirEnvironmentDefault) {
  const std::string cmd =
      "REHAB_RUNS_DIR=" + at("root") + " \"" + REHAB_CLI_PATH + "\" simulate >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(path("root/simulate/transcript.csv")));
  EXPECT_TRUE(fs::exists(path("root/simulate/config.toml")));
}

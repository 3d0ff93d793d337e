#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rehab/eval.hpp"

using namespace rehab;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rehab_eval_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

EvalSpec small_spec() {
  EvalSpec s;
  s.episodes = 20;
  s.seed = 3;
  return s;
}

}  // namespace

TEST(Evaluate, OracleCeiling) {
  EvalSpec s = small_spec();
  s.model.set_noise(0.0);
  s.plans = {ExercisePlan::constant(10), parse_plan("7x18;7-9=9")};
  const auto rep = evaluate(s, oracle_policy());
  ASSERT_EQ(rep.cells.size(), 2u * 6 * 3);
  for (const auto& c : rep.cells) {
    EXPECT_EQ(c.mean_rep_diff, 0.0) << c.key.label();
    EXPECT_EQ(c.mean_pe, 3.0) << c.key.label();
    EXPECT_DOUBLE_EQ(c.mean_return, 18.0) << c.key.label();
    EXPECT_NEAR(c.sd_return, 0.0, 1e-9);
  }
  EXPECT_EQ(rep.grand_mean_pe(), 3.0);
}

TEST(Evaluate, FixedPolicyInstructsConstantReps) {
  EvalSpec s = small_spec();
  s.patterns = {Pattern::Linear};
  s.tolerances = {Tolerance::Low};
  const auto rep = evaluate(s, fixed_reps_policy(6));
  for (double v : rep.cells[0].mean_instructed) EXPECT_EQ(v, 6.0);
}

TEST(Evaluate, GridOrderAndLookup) {
  EvalSpec s = small_spec();
  s.patterns = {Pattern::GoodDay, Pattern::StrugglingDay};
  s.tolerances = {Tolerance::High, Tolerance::Low};
  const auto rep = evaluate(s, oracle_policy());
  ASSERT_EQ(rep.cells.size(), 4u);
  EXPECT_EQ(rep.cells[0].key.label(), "good_day|high|10x18");
  EXPECT_EQ(rep.cells[3].key.label(), "struggling_day|low|10x18");
  EXPECT_EQ(rep.find(Pattern::StrugglingDay, Tolerance::High, ExercisePlan::constant(10)), &rep.cells[2]);
  EXPECT_EQ(rep.find(Pattern::Linear, Tolerance::High, ExercisePlan::constant(10)), nullptr);
}

TEST(Evaluate, DeterministicAndWorkerIndependent) {
  Rng init(2);
  auto net = std::make_shared<const ActorCritic>(ActorCritic::create({16}, init));
  EvalSpec s = small_spec();
  s.mode = ActMode::Sample;
  const auto a = evaluate(s, network_policy(net, s.mode));
  s.workers = 3;
  const auto b = evaluate(s, network_policy(net, s.mode));
  std::ostringstream sa, sb;
  write_summary_csv(sa, a);
  write_summary_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    std::ostringstream ca, cb;
    write_curve_csv(ca, a.cells[i]);
    write_curve_csv(cb, b.cells[i]);
    EXPECT_EQ(ca.str(), cb.str());
  }
}

TEST(Evaluate, SpecValidation) {
  EvalSpec s = small_spec();
  s.episodes = 0;
  EXPECT_THROW(evaluate(s, oracle_policy()), ConfigError);
  s = small_spec();
  s.patterns.clear();
  EXPECT_THROW(evaluate(s, oracle_policy()), ConfigError);
}

TEST(Evaluate, CheckpointErrors) {
  EvalSpec s = small_spec();
  s.checkpoint = "/nonexistent/policy.ckpt";
  EXPECT_THROW(evaluate(s), FileError);

  const auto dir = temp_dir("shape");
  fs::create_directories(dir);
  Rng init(1);
  PolicyCheckpoint ck;
  ck.net = ActorCritic(5, {4}, kNumActions);
  ck.net.actor.initialize(init, 1.0);
  save_checkpoint(dir / "odd.ckpt", ck);
  s.checkpoint = dir / "odd.ckpt";
  EXPECT_THROW(evaluate(s), VersionError);
}

TEST(Export, SingleCell) {
  EvalSpec s = small_spec();
  s.patterns = {Pattern::Linear};
  s.tolerances = {Tolerance::Average};
  const auto rep = evaluate(s, oracle_policy());
  const auto dir = temp_dir("single") / "nested" / "out";
  const auto files = export_report(rep, dir);
  EXPECT_TRUE(fs::exists(dir));
  const auto summary = lines(slurp(files.summary));
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0], "pattern,tolerance,plan,episodes,mean_rep_diff,mean_pe,mean_return");
  EXPECT_EQ(summary[1].rfind("linear,average,10x18,20,", 0), 0u);
  ASSERT_EQ(files.curves.size(), 1u);
  ASSERT_EQ(files.charts.size(), 1u);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "curves"), fs::directory_iterator{}), 1);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "charts"), fs::directory_iterator{}), 1);
  const auto curve = lines(slurp(files.curves[0]));
  ASSERT_EQ(curve.size(), 19u);
  EXPECT_EQ(curve[0], "set,goal,mean_instructed,mean_baseline,mean_pe");
  const auto svg = slurp(files.charts[0]);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Export, ComplexPlanGoalJump) {
  EvalSpec s = small_spec();
  s.patterns = {Pattern::Linear};
  s.tolerances = {Tolerance::Low};
  s.plans = {parse_plan("7x18;7-9=9")};
  const auto files = export_report(evaluate(s, oracle_policy()), temp_dir("complex"));
  const auto curve = lines(slurp(files.curves[0]));
  EXPECT_EQ(curve[6].rfind("6,7,", 0), 0u);
  EXPECT_EQ(curve[7].rfind("7,9,", 0), 0u);
  EXPECT_EQ(curve[9].rfind("9,9,", 0), 0u);
  EXPECT_EQ(curve[10].rfind("10,7,", 0), 0u);
  EXPECT_EQ(files.curves[0].filename(), "linear_low_7x18_7-9-9.csv");
}

TEST(Export, IoFailureNamesPath) {
  EvalSpec s = small_spec();
  s.patterns = {Pattern::Linear};
  s.tolerances = {Tolerance::Low};
  const auto rep = evaluate(s, oracle_policy());
  const auto blocker = temp_dir("blocked");
  fs::create_directories(blocker.parent_path());
  std::ofstream(blocker) << "a file, not a directory";
  try {
    export_report(rep, blocker / "out");
    FAIL() << "expected a file error";
  } catch (const FileError& e) {
    EXPECT_NE(std::string(e.what()).find(blocker.string()), std::string::npos);
  }
  fs::remove(blocker);
}

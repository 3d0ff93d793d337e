// rehab: train, evaluate, replay and cluster from the command line.
//
// Every command takes --config <file.toml>; flags given on the command line
// win over the file. The effective configuration is written to
// <out>/config.toml, and `rehab <cmd> --config <out>/config.toml` reruns it.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rehab/checkpoint.hpp"
#include "rehab/dataset.hpp"
#include "rehab/eval.hpp"
#include "rehab/model_config.hpp"
#include "rehab/trainer.hpp"

namespace fs = std::filesystem;
using namespace rehab;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kFile = 3,
  kInput = 4,
  kTrainingFault = 5,
  kVersion = 6,
};

constexpr const char* kUsageText =
    "usage: rehab <command> [options]\n"
    "\n"
    "commands:\n"
    "  train      learn an instructor policy with PPO\n"
    "  eval       evaluate a policy over a pattern x tolerance x plan grid\n"
    "  simulate   run and print one session\n"
    "  cluster    derive tolerance groups and PE anchors from session summaries\n"
    "\n"
    "Run `rehab <command> --help` for options. Output goes to --out, by default\n"
    "$REHAB_RUNS_DIR/<command> (REHAB_RUNS_DIR defaults to ./runs).\n";

// Thrown once CLI11 has already reported (help text or a parse error).
struct ExitNow {
  int code;
};

void parse(CLI::App& app, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    throw ExitNow{app.exit(e) == 0 ? kOk : kUsage};
  }
}

std::string default_out(const std::string& command) {
  const char* root = std::getenv("REHAB_RUNS_DIR");
  return (fs::path(root && *root ? root : "runs") / command).string();
}

std::vector<std::string> names_of(auto all) {
  std::vector<std::string> out;
  for (auto v : all) out.emplace_back(name(v));
  return out;
}

// Options shared by the commands that build a patient model.
struct ModelFlags {
  std::string noise;  // empty: keep per-pattern sigmas (an echoed config must say so too)
  std::string model_file;

  void add(CLI::App& app) {
    app.add_option("--noise", noise, "Baseline noise sigma in reps, all patterns");
    app.add_option("--model", model_file, "JSON fragment overriding anchors and pattern shapes");
  }

  // --noise applies after the fragment so the flag wins.
  PatientModelConfig build() const {
    PatientModelConfig cfg;
    if (!model_file.empty()) apply_model_fragment(read_json_file(model_file), cfg);
    if (!noise.empty()) {
      double sigma = 0.0;
      const auto res = std::from_chars(noise.data(), noise.data() + noise.size(), sigma);
      if (res.ec != std::errc{} || res.ptr != noise.data() + noise.size() || !(sigma >= 0.0)) {
        throw ConfigError("noise: '" + noise + "' is not a number >= 0");
      }
      cfg.set_noise(sigma);
    }
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("failed writing " + path.string());
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw FileError("cannot create " + out + ": " + ec.message());
  return out;
}

// A list option left at its default echoes as a quoted string; recording the
// default as if given makes it a proper TOML array.
void echo_list_default(CLI::Option* opt, const std::vector<std::string>& values) {
  if (opt->count() == 0) opt->add_result(values);
}

void echo_config(const CLI::App& app, const fs::path& dir) {
  write_text(dir / "config.toml", app.config_to_str(true, false));
}

// "oracle", "fixed-N", or a checkpoint path.
struct PolicyChoice {
  std::optional<InstructorPolicy> scripted;
  fs::path checkpoint;
};

PolicyChoice parse_policy(const std::string& text) {
  if (text == "oracle") return {oracle_policy(), {}};
  if (text.starts_with("fixed-")) {
    const std::string n = text.substr(6);
    int reps = 0;
    const auto res = std::from_chars(n.data(), n.data() + n.size(), reps);
    if (res.ec != std::errc{} || res.ptr != n.data() + n.size() || reps < 1) {
      throw ConfigError("policy: '" + text + "' is not fixed-N with N >= 1");
    }
    return {fixed_reps_policy(reps), {}};
  }
  return {std::nullopt, text};
}

std::shared_ptr<const ActorCritic> load_policy_net(const fs::path& path) {
  auto net = std::make_shared<const ActorCritic>(load_checkpoint(path).net);
  if (net->actor.input_size() != kFeatureSize || net->num_actions() != kNumActions) {
    throw VersionError(path.string() + ": network shape does not match the session environment");
  }
  return net;
}

ActMode parse_mode(const std::string& m) { return m == "sample" ? ActMode::Sample : ActMode::Greedy; }

// ---------------------------------------------------------------------------

int cmd_train(int argc, char** argv) {
  CLI::App app("Train an instructor policy with PPO", "rehab train");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; command-line flags win");

  TrainingConfig cfg;
  std::string out = default_out("train");
  int workers = 1;
  ModelFlags model;
  app.add_option("--timesteps", cfg.total_timesteps, "Environment steps (18 per session)");
  app.add_option("--horizon", cfg.horizon, "Steps per rollout, a multiple of 18");
  app.add_option("--minibatch", cfg.minibatch, "Minibatch size");
  app.add_option("--epochs", cfg.epochs, "Epochs per update");
  app.add_option("--lr", cfg.learning_rate, "Adam step size");
  app.add_flag("--anneal-lr", cfg.anneal_lr, "Decay the step size linearly to zero");
  app.add_option("--gamma", cfg.gamma, "Discount");
  app.add_option("--lambda", cfg.gae_lambda, "GAE lambda");
  app.add_option("--clip", cfg.clip_eps, "Surrogate clip ratio");
  app.add_option("--entropy-coef", cfg.entropy_coef, "Entropy bonus weight");
  app.add_option("--value-coef", cfg.value_coef, "Value loss weight");
  app.add_option("--max-grad-norm", cfg.max_grad_norm, "Global gradient norm clip");
  auto* hidden = app.add_option("--hidden", cfg.hidden, "Hidden layer widths, e.g. 64,64")->delimiter(',');
  app.add_option("--seed", cfg.seed, "Run seed");
  model.add(app);
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", workers, "Rollout threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->configurable(false);
  parse(app, argc, argv);

  EnvFactory factory;
  factory.model = model.build();
  cfg.validate();
  const fs::path dir = prepare_out(out);
  std::vector<std::string> widths;
  for (int h : cfg.hidden) widths.push_back(std::to_string(h));
  echo_list_default(hidden, widths);
  echo_config(app, dir);

  TrainOptions opts;
  opts.workers = workers;
  const long total = cfg.total_timesteps / kSetsPerSession * kSetsPerSession;
  opts.on_update = [total](long steps, double trailing) {
    std::cerr << "steps " << steps << "/" << total << "  trailing return " << fixed(trailing, 3) << '\n';
  };
  const TrainResult r = train(factory, cfg, opts);

  save_checkpoint(dir / "policy.ckpt", r.checkpoint);
  std::ostringstream log;
  write_training_log_csv(log, r.log);
  write_text(dir / "train_log.csv", log.str());

  char sum[32];
  std::snprintf(sum, sizeof sum, "%016llx",
                static_cast<unsigned long long>(checksum_of(serialize(r.checkpoint))));
  std::cout << "episodes " << r.log.size() << "\n"
            << "trailing-500 mean return " << fixed(trailing_mean_return(r.log), 4) << "\n"
            << "checkpoint " << (dir / "policy.ckpt").string() << " checksum " << sum << "\n";
  return kOk;
}

int cmd_eval(int argc, char** argv) {
  CLI::App app("Evaluate a policy over a profile grid", "rehab eval");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; command-line flags win");

  std::string policy;
  std::vector<std::string> patterns = names_of(kAllPatterns);
  std::vector<std::string> tolerances = names_of(kAllTolerances);
  std::vector<std::string> plans{"10x18"};
  EvalSpec spec;
  std::string mode = "greedy";
  std::string out = default_out("eval");
  ModelFlags model;
  app.add_option("policy,--policy", policy, "Checkpoint path, oracle, or fixed-N")->required();
  auto* patterns_opt = app.add_option("--patterns", patterns, "Comma-separated pattern names")
      ->delimiter(',')
      ->check(CLI::IsMember(names_of(kAllPatterns)));
  auto* tolerances_opt = app.add_option("--tolerances", tolerances, "Comma-separated tolerance names")
      ->delimiter(',')
      ->check(CLI::IsMember(names_of(kAllTolerances)));
  auto* plans_opt = app.add_option("--plan", plans, "Plan, repeatable: 10x18, \"7x18;7-9=9\" or 18 goals");
  app.add_option("--episodes", spec.episodes, "Episodes per cell")->check(CLI::PositiveNumber);
  app.add_option("--mode", mode, "Action selection")->check(CLI::IsMember({"greedy", "sample"}));
  app.add_option("--seed", spec.seed, "Evaluation seed");
  model.add(app);
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", spec.workers, "Cell threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->configurable(false);
  parse(app, argc, argv);

  spec.patterns.clear();
  for (const auto& p : patterns) spec.patterns.push_back(*parse_pattern(p));
  spec.tolerances.clear();
  for (const auto& t : tolerances) spec.tolerances.push_back(*parse_tolerance(t));
  spec.plans.clear();
  for (const auto& p : plans) spec.plans.push_back(parse_plan(p));
  spec.mode = parse_mode(mode);
  spec.model = model.build();
  spec.validate();

  const PolicyChoice choice = parse_policy(policy);
  const InstructorPolicy pol =
      choice.scripted ? *choice.scripted : network_policy(load_policy_net(choice.checkpoint), spec.mode);
  const EvalReport rep = evaluate(spec, pol);

  const fs::path dir = prepare_out(out);
  echo_list_default(patterns_opt, patterns);
  echo_list_default(tolerances_opt, tolerances);
  echo_list_default(plans_opt, plans);
  echo_config(app, dir);
  export_report(rep, dir);
  write_summary_csv(std::cout, rep);
  std::cout << "grand mean PE " << fixed(rep.grand_mean_pe(), 4) << "\n";
  return kOk;
}

int cmd_simulate(int argc, char** argv) {
  CLI::App app("Run one session and print its transcript", "rehab simulate");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; command-line flags win");

  std::string pattern = "linear";
  std::string tolerance = "average";
  std::string plan = "10x18";
  std::string policy = "oracle";
  std::string mode = "greedy";
  std::uint64_t seed = 1;
  std::string out = default_out("simulate");
  ModelFlags model;
  app.add_option("--pattern", pattern, "Performance pattern")->check(CLI::IsMember(names_of(kAllPatterns)));
  app.add_option("--tolerance", tolerance, "Tolerance group")->check(CLI::IsMember(names_of(kAllTolerances)));
  app.add_option("--plan", plan, "Plan: 10x18, \"7x18;7-9=9\" or 18 goals");
  app.add_option("--policy", policy, "Checkpoint path, oracle, or fixed-N");
  app.add_option("--mode", mode, "Action selection")->check(CLI::IsMember({"greedy", "sample"}));
  app.add_option("--seed", seed, "Patient seed");
  model.add(app);
  app.add_option("--out", out, "Output directory");
  parse(app, argc, argv);

  ProfileSpec ps;
  ps.pattern = *parse_pattern(pattern);
  ps.tolerance = *parse_tolerance(tolerance);
  ps.plan = parse_plan(plan);
  ps.seed = seed;
  const PolicyChoice choice = parse_policy(policy);
  const InstructorPolicy pol = choice.scripted
                                   ? *choice.scripted
                                   : network_policy(load_policy_net(choice.checkpoint), parse_mode(mode));

  SessionEnv env(model.build());
  Rng rng = make_rng({seed, 0x73696dULL});
  const EpisodeTranscript t = run_episode(env, ps, pol, rng);

  const fs::path dir = prepare_out(out);
  echo_config(app, dir);
  std::ostringstream csv;
  write_transcript_csv(csv, t);
  write_text(dir / "transcript.csv", csv.str());
  std::cout << csv.str() << "return " << fixed(t.episode_return, 4) << "\n";
  return kOk;
}

int cmd_cluster(int argc, char** argv) {
  CLI::App app("Cluster session summaries into tolerance groups", "rehab cluster");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; command-line flags win");

  std::string csv;
  int k = 3;
  std::uint64_t seed = 1;
  std::string mode = "per_condition";
  std::string out = default_out("cluster");
  app.add_option("csv,--csv", csv, "CSV with id,condition,avg_reps_pct,avg_pe")->required();
  app.add_option("--k", k, "Clusters")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "k-means++ seed");
  app.add_option("--mode", mode, "Cluster each condition separately or both together")
      ->check(CLI::IsMember({"per_condition", "joint"}));
  app.add_option("--out", out, "Output directory");
  parse(app, argc, argv);

  const auto rows = ingest(fs::path(csv));
  const auto m = cluster_sessions(rows, k, seed, mode == "joint" ? ClusterMode::Joint : ClusterMode::PerCondition);

  const fs::path dir = prepare_out(out);
  echo_config(app, dir);
  std::ostringstream report, assign;
  write_cluster_report_csv(report, m);
  write_assignments_csv(assign, rows, m);
  write_text(dir / "cluster_report.csv", report.str());
  write_text(dir / "assignments.csv", assign.str());
  std::cout << report.str();
  // Anchors last: an incomplete grouping still leaves the report behind.
  const auto anchors = derive_anchors(m);
  write_text(dir / "anchors.json", anchors_fragment(anchors).dump(2) + "\n");
  for (Tolerance t : kAllTolerances) {
    const auto& a = anchors[static_cast<int>(t)];
    std::cout << "anchors " << name(t) << " under " << fixed(a.under, 4) << " over " << fixed(a.over, 4)
              << "\n";
  }
  return kOk;
}

int run(const std::string& command, int argc, char** argv) {
  if (command == "train") return cmd_train(argc, argv);
  if (command == "eval") return cmd_eval(argc, argv);
  if (command == "simulate") return cmd_simulate(argc, argv);
  if (command == "cluster") return cmd_cluster(argc, argv);
  std::cerr << "rehab: unknown command '" << command << "'\n\n" << kUsageText;
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsageText;
    return kUsage;
  }
  const std::string command = argv[1];
  if (command == "-h" || command == "--help") {
    std::cout << kUsageText;
    return kOk;
  }
  // Each command parses everything after its own name.
  const int sub_argc = argc - 1;
  char** sub_argv = argv + 1;
  try {
    return run(command, sub_argc, sub_argv);
  } catch (const ExitNow& e) {
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "rehab " << command << ": usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "rehab " << command << ": usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FileError& e) {
    std::cerr << "rehab " << command << ": file error: " << e.what() << "\n";
    return kFile;
  } catch (const VersionError& e) {
    std::cerr << "rehab " << command << ": version error: " << e.what() << "\n";
    return kVersion;
  } catch (const TrainingFault& e) {
    std::cerr << "rehab " << command << ": training fault: " << e.what() << "\n";
    return kTrainingFault;
  } catch (const Error& e) {
    // InputError, ValidationError and the remaining data problems.
    std::cerr << "rehab " << command << ": invalid input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "rehab " << command << ": internal error: " << e.what() << "\n";
    return kInternal;
  }
}

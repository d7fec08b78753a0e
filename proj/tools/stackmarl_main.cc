// Copyright 2026 The stackmarl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: equilibrium solving, training, pruning, evaluation
// and experiment sweeps.
//
// Exit codes: 0 success, 1 error, 2 a trend assertion failed (--assert).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stackmarl/baselines.h"
#include "stackmarl/harness.h"

namespace stackmarl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kAssertionFailed = 2;

struct GlobalOptions {
  std::optional<uint64_t> seed;
  std::string out_dir = ".";
  int workers = 1;
  bool assert_trends = false;
};

json VectorJson(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json MatrixJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) rows.push_back(VectorJson(m.row(r)));
  return rows;
}

std::string OutPath(const GlobalOptions& g, const std::string& file) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / file).string();
}

void WriteJson(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int SolveEq(const GlobalOptions&, const std::string& config_path,
            int grid_points) {
  const RunConfig config = LoadRunConfig(config_path);
  const GameInstance game = config.BuildGame();
  const EquilibriumResult eq = SolveEquilibrium(game, config.solver);
  json out = {{"converged", eq.converged},
              {"iterations", eq.iterations},
              {"residual", eq.residual},
              {"prices", VectorJson(eq.prices)},
              {"bandwidths", MatrixJson(eq.bandwidths)},
              {"leader_utilities", eq.leader_utilities},
              {"follower_utilities", eq.follower_utilities},
              {"latency_feasible", eq.latency_feasible}};
  if (grid_points > 1) {
    const DeviationReport dev =
        ScanDeviations(game, eq.prices, eq.bandwidths, grid_points);
    out["deviation_scan"] = {{"grid_points", grid_points},
                             {"max_leader_gain", dev.max_leader_gain},
                             {"max_follower_gain", dev.max_follower_gain}};
  }
  std::cout << out.dump(2) << "\n";
  return eq.converged ? 0 : 1;
}

int Certify(const GlobalOptions& g, const std::string& config_path,
            int samples) {
  const RunConfig config = LoadRunConfig(config_path);
  const CertificateReport r =
      CertifyStandardFunction(config.BuildGame(), samples, g.seed.value_or(0));
  const json out = {{"samples", r.samples},
                    {"degenerate", r.degenerate},
                    {"positivity", {r.positivity_pass, r.positivity_fail}},
                    {"monotonicity", {r.monotonicity_pass, r.monotonicity_fail}},
                    {"scalability", {r.scalability_pass, r.scalability_fail}},
                    {"counterexamples", r.counterexamples},
                    {"passed", r.passed()}};
  std::cout << out.dump(2) << "\n";
  return g.assert_trends && !r.passed() ? kAssertionFailed : 0;
}

int TrainCommand(const GlobalOptions& g, const std::string& config_path) {
  const RunConfig config = LoadRunConfig(config_path);
  const uint64_t seed = g.seed.value_or(config.train.seed);
  TrainedPopulation pop = TrainPopulation(config, config.BuildGame(),
                                          config.architecture, seed);
  const std::string ckpt = OutPath(g, "population.json");
  SavePopulation(ckpt, config, seed, pop.agents);
  {
    std::ofstream csv(OutPath(g, "training.csv"));
    pop.report.WriteCsv(csv);
  }
  std::vector<MetricsRow> rows;
  const std::string population =
      PopulationLabel(config.num_rsus, config.num_avs);
  for (const EpisodeRecord& e : pop.report.episodes) {
    rows.push_back({"train", population, seed, e.episode, population,
                    std::string("total_reward.") +
                        (config.architecture == Architecture::kBiLstm
                             ? "mablppo"
                             : "mappo"),
                    e.total_reward});
  }
  {
    std::ofstream metrics(OutPath(g, "metrics.csv"));
    WriteMetricsRows(rows, metrics);
  }
  const json out = {
      {"checkpoint", ckpt},
      {"episodes", pop.report.episodes.size()},
      {"updates", pop.report.updates},
      {"final_mean_total_reward", pop.report.FinalMeanTotalReward(100)}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int PruneCommand(const GlobalOptions& g, const std::string& checkpoint,
                 std::optional<double> density, std::optional<double> tops) {
  LoadedPopulation pop = LoadPopulation(checkpoint);
  const RunConfig& config = pop.config;
  const double q = density ? *density : TierDensity(*tops, config.tiers);
  const int leaders = config.num_rsus;
  std::vector<double> densities(pop.agents.size(), 1.0);
  for (size_t a = leaders; a < densities.size(); ++a) densities[a] = q;
  StackelbergEnv env(config.BuildGame(), config.env);
  TrainConfig train = config.train;
  train.seed = g.seed.value_or(pop.seed);
  const std::vector<PruneReport> reports =
      PruneAndFinetune(env, pop.agents, train, config.prune, densities);
  const std::string out_ckpt = OutPath(g, "pruned.json");
  SavePopulation(out_ckpt, config, pop.seed, pop.agents);
  json out = PruneReportsToJson(reports);
  WriteJson(OutPath(g, "prune_report.json"), out);
  std::cout << json{{"density", q}, {"checkpoint", out_ckpt}, {"agents", out}}
                   .dump(2)
            << "\n";
  return 0;
}

int EvaluateCommand(const GlobalOptions& g,
                    const std::vector<std::string>& checkpoints, int episodes) {
  json out = json::array();
  for (const std::string& path : checkpoints) {
    LoadedPopulation pop = LoadPopulation(path);
    StackelbergEnv env(pop.config.BuildGame(), pop.config.env);
    const uint64_t seed = g.seed.value_or(pop.config.prune.eval_seed);
    auto analytic = MakeAnalyticPolicies(env);
    const EvaluationResult trained =
        Evaluate(AsPolicies(pop.agents), env, episodes, seed);
    const EvaluationResult exact =
        Evaluate(Borrow(analytic), env, episodes, seed);
    auto describe = [](const EvaluationResult& r) {
      return json{{"total_reward", r.total_reward},
                  {"mean_rsu_utility", r.mean_leader_utility},
                  {"mean_av_utility", r.mean_follower_utility},
                  {"agent_utilities", r.agent_utilities}};
    };
    out.push_back({{"checkpoint", path},
                   {"trained", describe(trained)},
                   {"analytic", describe(exact)}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int ReportAndAssert(const GlobalOptions& g,
                    const std::vector<std::string>& metrics, int tail) {
  const ComparisonReport report = CompareReport(metrics, tail);
  report.Print(std::cout);
  return g.assert_trends && !report.all_passed() ? kAssertionFailed : 0;
}

int ExperimentCommand(const GlobalOptions& g, const std::string& spec_path) {
  ExperimentSpec spec = LoadExperimentSpec(spec_path);
  if (g.seed) spec.seeds = {*g.seed};
  const ExperimentResult result = RunExperiment(spec, g.out_dir, g.workers);
  int failed_points = 0;
  for (const PointResult& p : result.points) {
    if (!p.error.empty()) {
      ++failed_points;
      std::cerr << "point " << p.label << " failed: " << p.error << "\n";
    }
  }
  std::cout << "metrics: " << result.metrics_path << "\n";
  const int code = ReportAndAssert(g, {result.metrics_path},
                                   spec.tail_episodes);
  if (code != 0) return code;
  return failed_points == 0 ? 0 : 1;
}

int Main(int argc, char** argv) {
  CLI::App app{"Stackelberg bandwidth-market solver and multi-agent trainer"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed override for the command");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");
  app.add_option("--workers", g.workers, "Parallel sweep points")
      ->check(CLI::PositiveNumber);
  app.add_flag("--assert", g.assert_trends,
               "Exit with status 2 when a trend check fails");

  std::string config_path;
  int grid_points = 1001;
  auto* solve = app.add_subcommand("solve-eq", "Solve the market equilibrium");
  solve->add_option("config", config_path, "Run configuration (INI)")
      ->required()
      ->check(CLI::ExistingFile);
  solve->add_option("--grid", grid_points,
                    "Deviation-scan grid points (0 disables the scan)");

  int samples = 1000;
  auto* certify = app.add_subcommand(
      "certify", "Check positivity, monotonicity and scalability of the "
                 "leader response");
  certify->add_option("config", config_path)->required()->check(
      CLI::ExistingFile);
  certify->add_option("--samples", samples)->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train a population");
  train->add_option("config", config_path)->required()->check(
      CLI::ExistingFile);

  std::string checkpoint;
  std::optional<double> density, tops;
  auto* prune = app.add_subcommand(
      "prune", "Prune and fine-tune the AV actors of a checkpoint");
  prune->add_option("checkpoint", checkpoint)->required()->check(
      CLI::ExistingFile);
  auto* density_opt = prune->add_option("--density", density,
                                        "Kept fraction of prunable weights")
                          ->check(CLI::Range(0.0, 1.0));
  auto* tops_opt =
      prune->add_option("--tops", tops, "Device TOPS; selects the tier density");
  density_opt->excludes(tops_opt);
  tops_opt->excludes(density_opt);

  std::vector<std::string> checkpoints;
  int episodes = 5;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Deterministic evaluation of checkpoints");
  evaluate->add_option("checkpoints", checkpoints)->required()->check(
      CLI::ExistingFile);
  evaluate->add_option("--episodes", episodes)->check(CLI::PositiveNumber);

  std::string spec_path;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment sweep");
  experiment->add_option("spec", spec_path)->required()->check(
      CLI::ExistingFile);

  std::vector<std::string> metrics;
  int tail = 100;
  auto* compare = app.add_subcommand(
      "compare", "Summarise metrics files and run the trend checks");
  compare->add_option("metrics", metrics)->required()->check(
      CLI::ExistingFile);
  compare->add_option("--tail", tail, "Episodes averaged at the end of curves")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*prune && !density && !tops) {
    std::cerr << "prune: one of --density or --tops is required\n";
    return 1;
  }

  try {
    if (*solve) return SolveEq(g, config_path, grid_points);
    if (*certify) return Certify(g, config_path, samples);
    if (*train) return TrainCommand(g, config_path);
    if (*prune) return PruneCommand(g, checkpoint, density, tops);
    if (*evaluate) return EvaluateCommand(g, checkpoints, episodes);
    if (*experiment) return ExperimentCommand(g, spec_path);
    if (*compare) return ReportAndAssert(g, metrics, tail);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace stackmarl

int main(int argc, char** argv) { return stackmarl::Main(argc, argv); }

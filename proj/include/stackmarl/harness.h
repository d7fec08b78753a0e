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

#ifndef STACKMARL_HARNESS_H_
#define STACKMARL_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stackmarl/env.h"
#include "stackmarl/game_core.h"
#include "stackmarl/instances.h"
#include "stackmarl/marl.h"
#include "stackmarl/pruning.h"

// Configuration files, experiment orchestration and metric export.
//
// Configurations are INI files with the sections [game], [channel],
// [solver], [env], [train], [nn], [prune] and [experiment]; every key is
// optional and defaults to the library default. Lists are comma-separated.
namespace stackmarl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // [game]: the deterministic market of the given size unless sampler_seed
  // is set, in which case an instance is drawn from InstanceSampler.
  int num_rsus = 3;
  int num_avs = 5;
  std::optional<uint64_t> sampler_seed;
  std::optional<double> marginal_beta;
  std::optional<double> max_bandwidth;
  std::optional<ChannelParams> channel;  // [channel], when present
  SolverOptions solver;
  EnvConfig env;
  TrainConfig train;
  NetConfig net;
  Architecture architecture = Architecture::kBiLstm;
  PruneConfig prune;
  TierTable tiers;

  // Builds and validates the game instance with num_rsus x num_avs players.
  GameInstance BuildGame() const;
  GameInstance BuildGame(int rsus, int avs) const;
};

enum class ExperimentKind { kRewardCurves, kDensity, kPopulation };

struct ExperimentSpec {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::kRewardCurves;
  RunConfig base;
  std::vector<uint64_t> seeds = {0};
  // Population sweeps: RSU counts at the base AV count, and AV counts at the
  // base RSU count.
  std::vector<int> rsu_counts;
  std::vector<int> av_counts;
  // Density sweep (follower actors).
  std::vector<double> densities;
  // Episodes averaged at the end of a curve for summaries.
  int tail_episodes = 100;
  // Deterministic evaluation episodes for population points.
  int eval_episodes = 5;

  // Throws ConfigError: no seeds, bad sizes, densities outside (0, 1].
  void Validate() const;
};

RunConfig ParseRunConfig(std::istream& in);
RunConfig LoadRunConfig(const std::string& path);
ExperimentSpec ParseExperimentSpec(std::istream& in);
ExperimentSpec LoadExperimentSpec(const std::string& path);
// INI rendering that ParseRunConfig reads back to the same configuration.
std::string RunConfigToIni(const RunConfig& config);

const char* ArchitectureName(Architecture arch);
Architecture ParseArchitecture(const std::string& name);

// Metrics -------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;

// One long-format observation. episode is -1 for run-level summaries.
struct MetricsRow {
  std::string experiment;
  std::string point;       // sweep point label, e.g. "R3V5" or "q0.72"
  uint64_t seed = 0;
  int episode = -1;
  std::string population;  // "R<num_rsus>V<num_avs>"
  std::string metric;
  double value = 0.0;
};

// The single CSV schema shared by every writer and reader.
std::string MetricsHeader();
void WriteMetricsRows(const std::vector<MetricsRow>& rows, std::ostream& out);
// Throws ConfigError on a header other than MetricsHeader() or a malformed
// row.
std::vector<MetricsRow> ReadMetrics(std::istream& in);
std::vector<MetricsRow> ReadMetricsFile(const std::string& path);

std::string PopulationLabel(int num_rsus, int num_avs);

// Runs ---------------------------------------------------------------------

// Summed scaled reward of every episode, episode e seeded base_seed + e.
std::vector<double> EpisodeTotals(StackelbergEnv& env,
                                  std::vector<AgentPolicy*> policies,
                                  int episodes, uint64_t base_seed,
                                  bool deterministic);

struct TrainedPopulation {
  std::vector<std::unique_ptr<PpoAgent>> agents;
  TrainingReport report;
};

// Trains a fresh population on `game` with every seed of the run (agent
// initialisation, environment and trainer) derived from `seed`.
TrainedPopulation TrainPopulation(const RunConfig& config,
                                  const GameInstance& game,
                                  Architecture arch, uint64_t seed);

std::vector<std::unique_ptr<PpoAgent>> ClonePopulation(
    const std::vector<std::unique_ptr<PpoAgent>>& agents);

// Checkpoint of a population: actor and critic of every agent (named
// agent<a>.actor / agent<a>.critic), masks included, and the configuration
// text and seed as metadata.
void SavePopulation(const std::string& path, const RunConfig& config,
                    uint64_t seed,
                    const std::vector<std::unique_ptr<PpoAgent>>& agents);

struct LoadedPopulation {
  RunConfig config;
  uint64_t seed = 0;
  std::vector<std::unique_ptr<PpoAgent>> agents;
};
LoadedPopulation LoadPopulation(const std::string& path);

// Experiments ---------------------------------------------------------------

struct PointResult {
  std::string label;
  std::string path;   // per-point CSV
  std::string error;  // empty on success
};

struct ExperimentResult {
  std::string metrics_path;  // merged CSV
  std::vector<PointResult> points;
};

// Executes every sweep point (up to `workers` at a time) and writes
// <out_dir>/<name>/<point>.csv plus the merged <out_dir>/<name>.csv, points
// in sweep order. A failing point is recorded and the run continues.
//   reward curves: per seed, training curves of the BiLSTM and MLP
//     populations and per-episode totals of random and analytic play
//     (metrics total_reward.{mablppo,mappo,random,analytic});
//   density: per seed and density, a trained population whose followers are
//     pruned and fine-tuned (dense_reward, pruned_reward, finetuned_reward,
//     achieved_density);
//   population: per seed and market size, mean RSU and AV utilities of the
//     analytic equilibrium and of trained policies
//     (mean_{rsu,av}_utility.{analytic,trained}).
ExperimentResult RunExperiment(const ExperimentSpec& spec,
                               const std::string& out_dir, int workers = 1);

// Reports ------------------------------------------------------------------

struct SummaryEntry {
  std::string experiment;
  std::string point;
  std::string population;
  std::string metric;
  int seeds = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
};

struct TrendCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ComparisonReport {
  std::vector<SummaryEntry> summary;
  std::vector<TrendCheck> checks;

  bool all_passed() const;
  void Print(std::ostream& out) const;
};

// Aggregates per-seed values over seeds: curves are first reduced to the
// mean of their last tail_episodes episodes. Adds the trend checks that the
// present metrics allow:
//   reward ordering per seed: mablppo >= mappo > random, mablppo >= 1.2 x
//     random (all seeds);
//   analytic curves constant over episodes;
//   density retention: finetuned / dense >= 0.9, 0.75, 0.5 at densities
//     0.9, 0.72, 0.33;
//   population: mean RSU utility non-increasing in RSU count and
//     non-decreasing in AV count, exactly for the analytic policy and on a
//     majority of seeds for trained policies.
// Throws ConfigError when a file has a different schema.
ComparisonReport CompareReport(const std::vector<std::string>& paths,
                               int tail_episodes = 100);
ComparisonReport CompareRows(const std::vector<MetricsRow>& rows,
                             int tail_episodes = 100);

}  // namespace stackmarl

#endif  // STACKMARL_HARNESS_H_

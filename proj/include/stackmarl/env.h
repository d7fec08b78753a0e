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

#ifndef STACKMARL_ENV_H_
#define STACKMARL_ENV_H_

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stackmarl/game_core.h"

// The bandwidth market as a partially observable multi-agent environment.
//
// One timestep is a two-phase turn: every RSU commits a price, then every AV
// observes the committed prices and buys bandwidth. Agents see the last L
// rounds of (bandwidth matrix, price vector); rounds before the episode
// start are zeros.
//
// Agent indexing: leaders are agents 0..R-1, followers R..R+V-1.
namespace stackmarl {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvConfig {
  int history_window = 4;    // L
  int episode_length = 50;   // T
  uint64_t seed = 0;
  double reward_scale = 0.1;
  // Redraw AV importances and deadlines at every reset.
  bool resample_tasks = false;

  void Validate() const;
};

enum class AgentKind { kLeader, kFollower };

struct Observation {
  AgentKind kind = AgentKind::kLeader;
  int index = 0;  // RSU index for leaders, AV index for followers
  // Oldest first; exactly L entries. For followers, the AV's own column of
  // every bandwidth matrix is zero.
  std::vector<std::pair<BandwidthMatrix, PriceVector>> window;
  // Followers only: the prices committed in the current round.
  std::optional<PriceVector> current_prices;
};

// Flat encoding: for each window entry, oldest first, the bandwidth matrix
// row-major (R*V values) then the price vector (R values); followers append
// the current prices (R values).
int EncodedStepSize(int num_rsus, int num_avs);
int EncodedSize(AgentKind kind, int num_rsus, int num_avs, int window);
Eigen::VectorXd Encode(const Observation& obs);
Observation Decode(const Eigen::VectorXd& encoded, AgentKind kind, int index,
                   int num_rsus, int num_avs, int window);

struct StepOutcome {
  std::vector<double> leader_rewards;    // scaled by reward_scale
  std::vector<double> follower_rewards;  // scaled by reward_scale
  std::vector<double> leader_utilities;  // unscaled
  std::vector<double> follower_utilities;
  PriceVector prices;           // applied (clamped) prices
  BandwidthMatrix bandwidths;   // applied (clamped) purchases
  std::vector<Observation> next_leader_observations;
  bool done = false;
};

// Per-step rewards before scaling: the leader and follower utilities of the
// round. Kept in one place so the reward definition can be swapped.
std::pair<std::vector<double>, std::vector<double>> RoundUtilities(
    const GameInstance& game, const PriceVector& prices,
    const BandwidthMatrix& bandwidths);

class StackelbergEnv {
 public:
  StackelbergEnv(GameInstance game, EnvConfig config);

  // Starts a new episode and returns the leader observations. With a seed
  // the environment random stream is restarted from it first.
  std::vector<Observation> Reset(std::optional<uint64_t> seed = std::nullopt);

  // Phase one: applies the leaders' prices (clamped to [c_r, p^max]) and
  // returns the follower observations, which include those prices.
  std::vector<Observation> CommitPrices(const PriceVector& prices);

  // Phase two: applies the purchases (clamped to [0, b^max]), pays out the
  // round's rewards and advances the clock.
  StepOutcome Step(const BandwidthMatrix& bandwidths);

  // Both phases at once.
  StepOutcome Step(const PriceVector& prices,
                   const BandwidthMatrix& bandwidths);

  const GameInstance& game() const { return game_; }
  const GameInstance& base_game() const { return base_game_; }
  const EnvConfig& config() const { return config_; }
  int time() const { return t_; }
  int num_agents() const { return game_.num_rsus() + game_.num_avs(); }
  // Number of individual action components clamped since construction.
  int64_t clamp_count() const { return clamp_count_; }

  Observation LeaderObservation(int rsu) const;
  Observation FollowerObservation(int av) const;

 private:
  GameInstance base_game_;
  GameInstance game_;
  EnvConfig config_;
  std::mt19937_64 rng_;
  std::deque<std::pair<BandwidthMatrix, PriceVector>> history_;
  std::optional<PriceVector> committed_;
  int t_ = 0;
  bool started_ = false;
  int64_t clamp_count_ = 0;
};

// Rollout ------------------------------------------------------------------

struct PolicyOutput {
  Eigen::VectorXd action;  // in the agent's action bounds
  Eigen::VectorXd raw;     // pre-squash sample (empty for non-Gaussian policies)
  double log_prob = 0.0;
  double value = 0.0;
};

// Anything that maps an encoded observation to an action. Leaders output one
// price; followers output one purchase per RSU.
class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;
  virtual PolicyOutput Act(const Eigen::VectorXd& observation,
                           std::mt19937_64& rng, bool deterministic) = 0;
};

// Aligned per-step records of one agent.
struct TrajectoryBuffer {
  std::vector<Eigen::VectorXd> observations;
  std::vector<Eigen::VectorXd> actions;
  std::vector<Eigen::VectorXd> raw_actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;
  std::vector<int> episodes;
  std::vector<int> steps;
  // Filled by the advantage estimator.
  std::vector<double> advantages;
  std::vector<double> returns;

  size_t size() const { return rewards.size(); }
  void Clear();
  // Throws EnvError when the per-step arrays disagree in length.
  void CheckAligned() const;
};

// Runs one time slot: leaders act, prices are committed, followers act and
// the environment steps. Records into buffers when non-null (one per agent,
// leaders first). Throws EnvError on a non-finite action.
StepOutcome PlaySlot(StackelbergEnv& env,
                     const std::vector<Observation>& leader_obs,
                     std::vector<AgentPolicy*>& policies, std::mt19937_64& rng,
                     bool deterministic, int episode,
                     std::vector<TrajectoryBuffer>* buffers);

// Plays whole episodes; episode e resets the environment with seed
// base_seed + e and draws actions from a stream seeded the same way.
std::vector<TrajectoryBuffer> Rollout(StackelbergEnv& env,
                                      std::vector<AgentPolicy*>& policies,
                                      int episodes, uint64_t base_seed,
                                      bool deterministic);

// One row per agent-step:
// agent,kind,index,episode,step,reward,value,log_prob,done,action,observation
// where action and observation are space-separated number lists.
void WriteTrajectoryCsv(const std::vector<TrajectoryBuffer>& buffers,
                        int num_rsus, std::ostream& out);

}  // namespace stackmarl

#endif  // STACKMARL_ENV_H_

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

#ifndef STACKMARL_MARL_H_
#define STACKMARL_MARL_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stackmarl/env.h"
#include "stackmarl/nn.h"

// Multi-agent PPO: one actor and one critic per agent, trained
// independently on that agent's own observations and rewards.
namespace stackmarl {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double clip_eps = 0.2;
  double discount_gamma = 0.9;
  double gae_lambda = 0.9;
  // Time slots per update, counted over the whole run; must be a multiple of
  // the episode length so that every batch ends on an episode boundary.
  int batch_size = 50;
  int epochs_per_batch = 4;
  int minibatch_size = 10;
  int episodes = 300;
  double entropy_coef = 1e-3;
  double actor_learning_rate = nn::kActorLearningRate;
  double critic_learning_rate = nn::kCriticLearningRate;
  // Leader actor step sizes are multiplied by this factor, so that leaders
  // can adapt on a slower timescale than the followers answering them.
  double leader_lr_scale = 1.0;
  double max_grad_norm = 1.0;
  bool normalize_advantages = true;
  // Any loss above this aborts training.
  double divergence_threshold = 1e6;
  uint64_t seed = 0;

  void Validate() const;
};

// Network sizes shared by every agent of a run.
struct NetConfig {
  int hidden_dim = 32;
  std::vector<int> mlp_widths = {64, 64};
  double init_log_std = -0.5;
};

enum class Architecture { kBiLstm, kMlp };

// Advantage estimation ------------------------------------------------------

// r + gamma * V(s') - V(s).
double TdError(double reward, double value, double next_value, double gamma);

// Fills advantages (lambda-weighted sums of TD errors) and returns
// (advantage + value). The value after a step flagged done is 0; the value
// after the last stored step is taken as 0 as well. Throws EnvError on
// misaligned arrays.
void ComputeAdvantages(TrajectoryBuffer& buffer, double gamma, double lambda);

// Losses --------------------------------------------------------------------

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double ClippedSurrogate(double ratio, double advantage, double eps);

struct ActorLossResult {
  double loss = 0.0;       // -mean surrogate - entropy_coef * entropy
  double surrogate = 0.0;  // mean clipped surrogate
  double entropy = 0.0;
  int used = 0;
  int excluded = 0;  // samples dropped for a non-finite ratio
};

// Clipped PPO actor loss over the selected samples. raw_actions and
// log_probs are those recorded at collection time; inputs are network
// inputs. Gradient is accumulated into grad when non-null.
ActorLossResult PpoActorLoss(const nn::Network& actor, const nn::Vec& params,
                             const nn::ActionBounds& bounds,
                             const std::vector<nn::Vec>& inputs,
                             const std::vector<nn::Vec>& raw_actions,
                             const std::vector<double>& log_probs,
                             const std::vector<double>& advantages,
                             const std::vector<int>& indices, double clip_eps,
                             double entropy_coef, nn::Vec* grad);

// Mean squared error between critic outputs and returns.
double CriticLoss(const nn::Network& critic, const nn::Vec& params,
                  const std::vector<nn::Vec>& inputs,
                  const std::vector<double>& returns,
                  const std::vector<int>& indices, nn::Vec* grad);

// Agents --------------------------------------------------------------------

// Actor, frozen actor snapshot, critic and optimiser state of one agent.
// Acts through the squashed Gaussian head; deterministic acting returns the
// squashed mean.
class PpoAgent : public AgentPolicy {
 public:
  PpoAgent(AgentKind kind, int index, nn::NetSpec actor_spec,
           nn::NetSpec critic_spec, nn::ActionBounds bounds,
           nn::Vec input_scale, uint64_t seed, double init_log_std);

  PolicyOutput Act(const Eigen::VectorXd& observation, std::mt19937_64& rng,
                   bool deterministic) override;

  // Observation rescaled to roughly unit range.
  nn::Vec NetworkInput(const Eigen::VectorXd& observation) const;
  // Squashed mean action of the current actor.
  nn::Vec MeanAction(const Eigen::VectorXd& observation) const;
  double Value(const Eigen::VectorXd& observation) const;

  // Installs a keep-mask over the actor parameters and zeroes the rest.
  // An empty mask removes masking.
  void SetMask(std::vector<uint8_t> mask);
  const std::vector<uint8_t>& mask() const { return mask_; }
  // True when every masked-out actor parameter is exactly zero.
  bool MaskRespected() const;

  AgentKind kind() const { return kind_; }
  int index() const { return index_; }
  const nn::Network& actor() const { return actor_; }
  const nn::Network& critic() const { return critic_; }
  const nn::ActionBounds& bounds() const { return bounds_; }
  const nn::Vec& input_scale() const { return input_scale_; }

  nn::Vec actor_params;
  nn::Vec actor_old_params;
  nn::Vec critic_params;
  nn::AdamState actor_adam;
  nn::AdamState critic_adam;
  // Frozen agents act but are not updated.
  bool trainable = true;

 private:
  AgentKind kind_;
  int index_;
  nn::Network actor_;
  nn::Network critic_;
  nn::ActionBounds bounds_;
  nn::Vec input_scale_;
  std::vector<uint8_t> mask_;
};

// Builds one agent per player of the environment's game, leaders first.
// Agent a is initialised from seed * 1000003 + a.
std::vector<std::unique_ptr<PpoAgent>> MakePpoAgents(
    const StackelbergEnv& env, Architecture arch, const NetConfig& net,
    uint64_t seed);

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  int excluded = 0;
};

// PPO update of one agent from its buffer (advantages must be computed).
// Gradients of masked parameters are zeroed before the optimiser step.
UpdateStats UpdateAgent(PpoAgent& agent, const TrajectoryBuffer& buffer,
                        const TrainConfig& cfg, std::mt19937_64& rng);

// Training ------------------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  std::vector<double> agent_rewards;  // summed scaled rewards per agent
  double total_reward = 0.0;
  // Losses of the last update in the episode, NaN when none ran.
  std::vector<double> actor_losses;
  std::vector<double> critic_losses;
};

struct TrainingReport {
  std::vector<EpisodeRecord> episodes;
  int updates = 0;
  int excluded_samples = 0;
  // Largest number of samples held by one agent buffer at any time.
  size_t max_buffer_size = 0;
  // Set when mask checks ran after every update.
  int mask_checks = 0;

  // Mean total reward of the last n episodes (all when fewer).
  double FinalMeanTotalReward(int n) const;
  // Columns: episode,agent,reward,actor_loss,critic_loss.
  void WriteCsv(std::ostream& out) const;
};

// Algorithm loop: every episode resets the environment with seed
// cfg.seed + episode; each time slot the leaders act, then the followers,
// and every agent stores its transition. Whenever the global slot counter
// is a multiple of batch_size, advantages are computed, every trainable
// learner is updated and all buffers are cleared. policies[a] acts for agent
// a; learners[a] is the same object when agent a learns, else nullptr.
// Throws TrainingDiverged when a loss exceeds the threshold and
// std::logic_error when a masked weight becomes non-zero.
TrainingReport Train(StackelbergEnv& env, std::vector<AgentPolicy*> policies,
                     std::vector<PpoAgent*> learners, const TrainConfig& cfg);

// Convenience overload: every agent is a learner.
TrainingReport Train(StackelbergEnv& env,
                     const std::vector<std::unique_ptr<PpoAgent>>& agents,
                     const TrainConfig& cfg);

// Evaluation ----------------------------------------------------------------

struct EvaluationResult {
  // Mean per-step utility (unscaled) of every agent, leaders first.
  std::vector<double> agent_utilities;
  double mean_leader_utility = 0.0;
  double mean_follower_utility = 0.0;
  // Mean over episodes of the summed scaled rewards of all agents.
  double total_reward = 0.0;
};

// Deterministic play for the given number of episodes; episode e uses seed
// base_seed + e.
EvaluationResult Evaluate(std::vector<AgentPolicy*> policies,
                          StackelbergEnv& env, int episodes,
                          uint64_t base_seed);

std::vector<AgentPolicy*> AsPolicies(
    const std::vector<std::unique_ptr<PpoAgent>>& agents);

}  // namespace stackmarl

#endif  // STACKMARL_MARL_H_

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

#ifndef STACKMARL_PRUNING_H_
#define STACKMARL_PRUNING_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "stackmarl/env.h"
#include "stackmarl/marl.h"
#include "stackmarl/nn.h"

// Path-exclusion pruning of actor networks.
//
// A network's input-to-output paths p carry the weight product v_p(theta).
// Two companion passes of the same architecture score the weights:
//   h^k(theta^2): squared weights, zero biases, all-ones input, every unit
//                 linear (all paths active), i.e. sum_p v_p(theta)^2;
//   g^k(x^2):     unit weights, zero biases, squared input, each unit gated
//                 by its activation pattern on x in the trained network,
//                 i.e. sum_p a_p(x) x_s^2.
// With R = sum_n sum_k g^k(x_n^2) h^k(theta^2), the saliency of weight i is
// theta_i^2 * dR/d(theta_i^2). Rectified layers give the exact path sums;
// LSTM chains are handled as gated-linear units whose frozen gate values
// play the role of the activation indicators, and whose squared-weight
// companion keeps the multiplicative gate structure.
namespace stackmarl {

struct PruneDataset {
  std::vector<Eigen::VectorXd> observations;  // raw encoded observations
  std::vector<Eigen::VectorXd> actions;       // deterministic policy actions

  size_t size() const { return observations.size(); }
};

// Plays deterministic episodes (episode e seeded base_seed + e) until n
// observations of agent `agent` are collected, labelling each with the
// action that agent took.
PruneDataset BuildPruneDataset(StackelbergEnv& env,
                               std::vector<AgentPolicy*> policies, int agent,
                               int n, uint64_t seed);

// Which parameters may be pruned: weight matrices only (never biases or the
// log-std). With mlp_only the recurrent weights are kept as well.
std::vector<uint8_t> PrunableParameters(const nn::Network& net,
                                        bool mlp_only);

// g^k(x^2, 1, a(x)) for one network input; tape is the trained network's
// forward pass on x in standard mode.
nn::Vec ActivationCompanion(const nn::Network& net, const nn::Vec& input,
                            const nn::Tape& tape);

// h^k(1, theta^2, 1).
nn::Vec ParameterCompanion(const nn::Network& net, const nn::Vec& params);

struct SaliencyResult {
  nn::Vec scores;       // one per parameter; zero where not prunable
  nn::Vec path_weight;  // G_k = sum_n g^k(x_n^2), one per output
  double objective = 0.0;  // R
};

// PX saliency over network inputs. Recurrent networks need
// gate_approximation; without it, and on an empty dataset, throws
// std::invalid_argument.
SaliencyResult PxSaliency(const nn::Network& net, const nn::Vec& params,
                          const std::vector<nn::Vec>& inputs,
                          const std::vector<uint8_t>& prunable,
                          bool gate_approximation = true);

struct PruneMask {
  std::vector<uint8_t> bits;  // one per parameter, 1 = keep
  int prunable = 0;           // m
  int kept = 0;               // kept prunable parameters
  double density() const {
    return prunable == 0 ? 1.0 : static_cast<double>(kept) / prunable;
  }
};

// Keeps the ceil(density * m) highest-scoring prunable parameters, ties to
// the lower index; non-prunable parameters are always kept. Requires
// 0 < density <= 1.
PruneMask ExtractMask(const nn::Vec& scores,
                      const std::vector<uint8_t>& prunable, double density);
PruneMask ExtractMask(const nn::Vec& scores, double density);

// Compute-capability tiers: breakpoints C_1 < ... < C_K split (0, inf) into
// K + 1 tiers, lowest first, each with an operating density.
struct TierTable {
  std::vector<double> tops_breakpoints = {20.0, 40.0};
  std::vector<double> densities = {0.33, 0.72, 0.90};

  // Breakpoints increasing and positive; one density per tier in (0, 1];
  // for three tiers the densities must sit in (0, 0.4], (0.4, 0.8] and
  // (0.8, 1].
  void Validate() const;
};

double TierDensity(double tops, const TierTable& table);

struct PruneConfig {
  int dataset_size = 256;
  uint64_t dataset_seed = 7;
  bool mlp_only = false;
  bool gate_approximation = true;
  // Fine-tuning episodes as a fraction of the original training budget.
  double finetune_fraction = 0.2;
  int eval_episodes = 5;
  uint64_t eval_seed = 100000;
};

struct PruneReport {
  int agent = 0;
  double target_density = 1.0;
  double achieved_density = 1.0;
  int prunable = 0;
  int kept = 0;
  std::vector<int> score_histogram;  // log10 buckets, see ToJson
  double dense_reward = 0.0;
  double pruned_reward = 0.0;     // after masking, before fine-tuning
  double finetuned_reward = 0.0;  // after fine-tuning
  int finetune_episodes = 0;
  int mask_checks = 0;

  nlohmann::json ToJson() const;
};

// Prunes the actors of the agents with a density below one (densities[a]
// for agent a, leaders first), then fine-tunes only those actors with
// masked gradients for finetune_fraction * train.episodes episodes. Rewards
// are deterministic evaluations of the whole population. Returns one report
// per agent; when every density is one nothing is fine-tuned.
std::vector<PruneReport> PruneAndFinetune(
    StackelbergEnv& env, const std::vector<std::unique_ptr<PpoAgent>>& agents,
    const TrainConfig& train, const PruneConfig& config,
    const std::vector<double>& densities);

nlohmann::json PruneReportsToJson(const std::vector<PruneReport>& reports);

}  // namespace stackmarl

#endif  // STACKMARL_PRUNING_H_

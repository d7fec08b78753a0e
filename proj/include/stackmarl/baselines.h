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

#ifndef STACKMARL_BASELINES_H_
#define STACKMARL_BASELINES_H_

#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "stackmarl/env.h"
#include "stackmarl/game_core.h"

// Non-learning policies: uniform random play and the analytic equilibrium.
namespace stackmarl {

// Uniform over the agent's action box: [c_r, p^max] for leaders, [0, b^max]
// per RSU for followers. Always samples, also in deterministic mode.
class RandomPolicy : public AgentPolicy {
 public:
  RandomPolicy(const StackelbergEnv& env, AgentKind kind, int index);
  PolicyOutput Act(const Eigen::VectorXd& observation, std::mt19937_64& rng,
                   bool deterministic) override;

 private:
  const StackelbergEnv& env_;
  AgentKind kind_;
  int index_;
};

// Leaders post their equilibrium price; followers best-respond to the
// current prices found at the end of their observation. The equilibrium is
// recomputed whenever the environment's game changes (task resampling).
class AnalyticPolicy : public AgentPolicy {
 public:
  AnalyticPolicy(const StackelbergEnv& env, AgentKind kind, int index,
                 SolverOptions options = {});
  PolicyOutput Act(const Eigen::VectorXd& observation, std::mt19937_64& rng,
                   bool deterministic) override;

 private:
  const StackelbergEnv& env_;
  AgentKind kind_;
  int index_;
  SolverOptions options_;
  std::optional<GameInstance> solved_for_;
  PriceVector equilibrium_prices_;
};

// Always plays the same action.
class ConstantPolicy : public AgentPolicy {
 public:
  explicit ConstantPolicy(Eigen::VectorXd action) : action_(std::move(action)) {}
  PolicyOutput Act(const Eigen::VectorXd&, std::mt19937_64&, bool) override {
    return {action_, Eigen::VectorXd(), 0.0, 0.0};
  }

 private:
  Eigen::VectorXd action_;
};

// One policy of the given family per agent, leaders first.
std::vector<std::unique_ptr<AgentPolicy>> MakeRandomPolicies(
    const StackelbergEnv& env);
std::vector<std::unique_ptr<AgentPolicy>> MakeAnalyticPolicies(
    const StackelbergEnv& env);

std::vector<AgentPolicy*> Borrow(
    const std::vector<std::unique_ptr<AgentPolicy>>& owned);

}  // namespace stackmarl

#endif  // STACKMARL_BASELINES_H_

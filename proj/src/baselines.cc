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

#include "stackmarl/baselines.h"

namespace stackmarl {
namespace {

bool SameTasks(const GameInstance& a, const GameInstance& b) {
  if (a.avs.size() != b.avs.size()) return false;
  for (size_t v = 0; v < a.avs.size(); ++v) {
    if (a.avs[v].importance != b.avs[v].importance ||
        a.avs[v].deadline != b.avs[v].deadline ||
        a.avs[v].data_size != b.avs[v].data_size) {
      return false;
    }
  }
  return true;
}

}  // namespace

RandomPolicy::RandomPolicy(const StackelbergEnv& env, AgentKind kind,
                           int index)
    : env_(env), kind_(kind), index_(index) {}

PolicyOutput RandomPolicy::Act(const Eigen::VectorXd&, std::mt19937_64& rng,
                               bool) {
  const GameInstance& game = env_.game();
  PolicyOutput out;
  if (kind_ == AgentKind::kLeader) {
    std::uniform_real_distribution<double> price(
        game.rsus[index_].base_cost, game.rsus[index_].max_price);
    out.action = Eigen::VectorXd::Constant(1, price(rng));
  } else {
    std::uniform_real_distribution<double> amount(0.0, game.max_bandwidth);
    out.action.resize(game.num_rsus());
    for (int r = 0; r < game.num_rsus(); ++r) out.action[r] = amount(rng);
  }
  return out;
}

AnalyticPolicy::AnalyticPolicy(const StackelbergEnv& env, AgentKind kind,
                               int index, SolverOptions options)
    : env_(env), kind_(kind), index_(index), options_(std::move(options)) {}

PolicyOutput AnalyticPolicy::Act(const Eigen::VectorXd& observation,
                                 std::mt19937_64&, bool) {
  const GameInstance& game = env_.game();
  PolicyOutput out;
  if (kind_ == AgentKind::kLeader) {
    if (!solved_for_ || !SameTasks(*solved_for_, game)) {
      equilibrium_prices_ = SolveEquilibrium(game, options_).prices;
      solved_for_ = game;
    }
    out.action = Eigen::VectorXd::Constant(1, equilibrium_prices_[index_]);
  } else {
    const PriceVector prices = observation.tail(game.num_rsus());
    out.action = FollowerBestResponse(index_, prices, game);
  }
  return out;
}

std::vector<std::unique_ptr<AgentPolicy>> MakeRandomPolicies(
    const StackelbergEnv& env) {
  std::vector<std::unique_ptr<AgentPolicy>> out;
  for (int r = 0; r < env.game().num_rsus(); ++r) {
    out.push_back(std::make_unique<RandomPolicy>(env, AgentKind::kLeader, r));
  }
  for (int v = 0; v < env.game().num_avs(); ++v) {
    out.push_back(std::make_unique<RandomPolicy>(env, AgentKind::kFollower, v));
  }
  return out;
}

std::vector<std::unique_ptr<AgentPolicy>> MakeAnalyticPolicies(
    const StackelbergEnv& env) {
  std::vector<std::unique_ptr<AgentPolicy>> out;
  for (int r = 0; r < env.game().num_rsus(); ++r) {
    out.push_back(std::make_unique<AnalyticPolicy>(env, AgentKind::kLeader, r));
  }
  for (int v = 0; v < env.game().num_avs(); ++v) {
    out.push_back(
        std::make_unique<AnalyticPolicy>(env, AgentKind::kFollower, v));
  }
  return out;
}

std::vector<AgentPolicy*> Borrow(
    const std::vector<std::unique_ptr<AgentPolicy>>& owned) {
  std::vector<AgentPolicy*> out;
  for (const auto& p : owned) out.push_back(p.get());
  return out;
}

}  // namespace stackmarl

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

#include "stackmarl/instances.h"

#include <array>
#include <random>

namespace stackmarl {
namespace {

constexpr std::array<double, 8> kBaseCosts = {0.40, 0.45, 0.50, 0.42,
                                              0.48, 0.44, 0.46, 0.41};
constexpr std::array<double, 8> kImportance = {2.0, 2.5, 3.0, 1.5,
                                               2.2, 2.8, 1.8, 2.4};
constexpr std::array<double, 8> kDeadlines = {0.5, 0.6, 0.8, 0.4,
                                              0.7, 0.6, 0.5, 0.9};
constexpr std::array<double, 8> kDataSizes = {0.10, 0.12, 0.08, 0.15,
                                              0.10, 0.09, 0.11, 0.14};

}  // namespace

GameInstance DefaultGame(int num_rsus, int num_avs) {
  if (num_rsus < 1 || num_rsus > 8 || num_avs < 1 || num_avs > 8) {
    throw InvalidGameError("DefaultGame supports 1..8 RSUs and AVs");
  }
  GameInstance game;
  for (int r = 0; r < num_rsus; ++r) {
    game.rsus.push_back({kBaseCosts[r], 2.0});
  }
  for (int v = 0; v < num_avs; ++v) {
    game.avs.push_back({kDataSizes[v], kDeadlines[v], kImportance[v]});
  }
  game.distances.resize(num_rsus, num_avs);
  for (int r = 0; r < num_rsus; ++r) {
    for (int v = 0; v < num_avs; ++v) {
      game.distances(r, v) = 60.0 + 20.0 * ((3 * r + 5 * v) % 7);
    }
  }
  game.marginal_beta = 1.0;
  game.max_bandwidth = 10.0;
  return game;
}

GameInstance SampleGame(const InstanceSampler& sampler, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const int num_rsus =
      std::uniform_int_distribution<int>(sampler.min_rsus, sampler.max_rsus)(
          rng);
  const int num_avs =
      std::uniform_int_distribution<int>(sampler.min_avs, sampler.max_avs)(
          rng);
  GameInstance game;
  for (int r = 0; r < num_rsus; ++r) {
    const double cost = uniform(sampler.base_cost_lo, sampler.base_cost_hi);
    const double ratio =
        uniform(sampler.price_ratio_lo, sampler.price_ratio_hi);
    game.rsus.push_back({cost, cost * ratio});
  }
  for (int v = 0; v < num_avs; ++v) {
    TaskSpec task;
    task.data_size = uniform(sampler.data_size_lo, sampler.data_size_hi);
    task.deadline = uniform(sampler.deadline_lo, sampler.deadline_hi);
    task.importance = uniform(sampler.importance_lo, sampler.importance_hi);
    game.avs.push_back(task);
  }
  game.distances.resize(num_rsus, num_avs);
  for (int r = 0; r < num_rsus; ++r) {
    for (int v = 0; v < num_avs; ++v) {
      game.distances(r, v) = uniform(sampler.distance_lo, sampler.distance_hi);
    }
  }
  game.marginal_beta = uniform(sampler.beta_lo, sampler.beta_hi);
  game.max_bandwidth =
      uniform(sampler.max_bandwidth_lo, sampler.max_bandwidth_hi);
  game.Validate();
  return game;
}

GameInstance ResampleTasks(const GameInstance& game, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> importance(1.0, 3.0);
  std::uniform_real_distribution<double> deadline(0.5, 2.0);
  GameInstance next = game;
  for (TaskSpec& task : next.avs) {
    task.importance = importance(rng);
    task.deadline = deadline(rng);
  }
  return next;
}

}  // namespace stackmarl

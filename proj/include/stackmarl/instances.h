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

#ifndef STACKMARL_INSTANCES_H_
#define STACKMARL_INSTANCES_H_

#include <cstdint>

#include "stackmarl/game_core.h"

namespace stackmarl {

// Deterministic desk-scale market. RSU and AV parameters come from fixed
// tables, so the first k RSUs (AVs) of a larger instance are exactly the RSUs
// (AVs) of the k-sized one. Supports up to 8 RSUs and 8 AVs.
GameInstance DefaultGame(int num_rsus = 3, int num_avs = 5);

// Ranges for randomly drawn instances. Each price ceiling is drawn as a
// multiple of its base cost.
struct InstanceSampler {
  int min_rsus = 1;
  int max_rsus = 4;
  int min_avs = 1;
  int max_avs = 8;
  double base_cost_lo = 0.1;
  double base_cost_hi = 1.0;
  double price_ratio_lo = 1.5;
  double price_ratio_hi = 5.0;
  double importance_lo = 1.0;
  double importance_hi = 3.0;
  double deadline_lo = 0.3;
  double deadline_hi = 2.0;
  double data_size_lo = 0.05;
  double data_size_hi = 0.5;
  double distance_lo = 50.0;
  double distance_hi = 200.0;
  double max_bandwidth_lo = 1.0;
  double max_bandwidth_hi = 20.0;
  double beta_lo = 0.5;
  double beta_hi = 2.0;
};

GameInstance SampleGame(const InstanceSampler& sampler, uint64_t seed);

// Redraws AV importances uniformly in [1, 3] and deadlines in [0.5, 2] s,
// keeping everything else. Used by environments that resample tasks per
// episode.
GameInstance ResampleTasks(const GameInstance& game, uint64_t seed);

}  // namespace stackmarl

#endif  // STACKMARL_INSTANCES_H_

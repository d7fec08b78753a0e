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

#include "stackmarl/env.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

#include "stackmarl/instances.h"

namespace stackmarl {
namespace {

std::pair<BandwidthMatrix, PriceVector> ZeroRound(int num_rsus, int num_avs) {
  return {BandwidthMatrix::Zero(num_rsus, num_avs),
          PriceVector::Zero(num_rsus)};
}

void WriteList(std::ostream& out, const Eigen::VectorXd& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i > 0) out << ' ';
    out << values[i];
  }
}

}  // namespace

void EnvConfig::Validate() const {
  if (history_window < 1) throw EnvError("history window must be >= 1");
  if (episode_length < 1) throw EnvError("episode length must be >= 1");
  if (!std::isfinite(reward_scale)) throw EnvError("reward scale not finite");
}

int EncodedStepSize(int num_rsus, int num_avs) {
  return num_rsus * num_avs + num_rsus;
}

int EncodedSize(AgentKind kind, int num_rsus, int num_avs, int window) {
  return window * EncodedStepSize(num_rsus, num_avs) +
         (kind == AgentKind::kFollower ? num_rsus : 0);
}

Eigen::VectorXd Encode(const Observation& obs) {
  if (obs.window.empty()) throw EnvError("observation window is empty");
  const int r = static_cast<int>(obs.window.front().second.size());
  const int v = static_cast<int>(obs.window.front().first.cols());
  const int window = static_cast<int>(obs.window.size());
  Eigen::VectorXd out(EncodedSize(obs.kind, r, v, window));
  int pos = 0;
  for (const auto& [b, p] : obs.window) {
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < v; ++j) out[pos++] = b(i, j);
    }
    out.segment(pos, r) = p;
    pos += r;
  }
  if (obs.kind == AgentKind::kFollower) {
    if (!obs.current_prices) throw EnvError("follower lacks current prices");
    out.segment(pos, r) = *obs.current_prices;
  }
  return out;
}

Observation Decode(const Eigen::VectorXd& encoded, AgentKind kind, int index,
                   int num_rsus, int num_avs, int window) {
  if (encoded.size() != EncodedSize(kind, num_rsus, num_avs, window)) {
    throw EnvError("encoded observation has the wrong length");
  }
  Observation obs;
  obs.kind = kind;
  obs.index = index;
  int pos = 0;
  for (int w = 0; w < window; ++w) {
    BandwidthMatrix b(num_rsus, num_avs);
    for (int i = 0; i < num_rsus; ++i) {
      for (int j = 0; j < num_avs; ++j) b(i, j) = encoded[pos++];
    }
    PriceVector p = encoded.segment(pos, num_rsus);
    pos += num_rsus;
    obs.window.emplace_back(std::move(b), std::move(p));
  }
  if (kind == AgentKind::kFollower) {
    obs.current_prices = encoded.segment(pos, num_rsus);
  }
  return obs;
}

std::pair<std::vector<double>, std::vector<double>> RoundUtilities(
    const GameInstance& game, const PriceVector& prices,
    const BandwidthMatrix& bandwidths) {
  std::vector<double> leaders(game.num_rsus());
  std::vector<double> followers(game.num_avs());
  for (int r = 0; r < game.num_rsus(); ++r) {
    leaders[r] = LeaderUtility(r, bandwidths, prices, game);
  }
  for (int v = 0; v < game.num_avs(); ++v) {
    followers[v] = FollowerUtility(v, bandwidths, prices, game);
  }
  return {std::move(leaders), std::move(followers)};
}

StackelbergEnv::StackelbergEnv(GameInstance game, EnvConfig config)
    : base_game_(std::move(game)), config_(config), rng_(config.seed) {
  base_game_.Validate();
  config_.Validate();
  game_ = base_game_;
}

std::vector<Observation> StackelbergEnv::Reset(std::optional<uint64_t> seed) {
  if (seed) rng_.seed(*seed);
  game_ = config_.resample_tasks ? ResampleTasks(base_game_, rng_())
                                 : base_game_;
  history_.clear();
  for (int i = 0; i < config_.history_window; ++i) {
    history_.push_back(ZeroRound(game_.num_rsus(), game_.num_avs()));
  }
  committed_.reset();
  t_ = 0;
  started_ = true;
  std::vector<Observation> obs;
  for (int r = 0; r < game_.num_rsus(); ++r) {
    obs.push_back(LeaderObservation(r));
  }
  return obs;
}

Observation StackelbergEnv::LeaderObservation(int rsu) const {
  Observation obs;
  obs.kind = AgentKind::kLeader;
  obs.index = rsu;
  obs.window.assign(history_.begin(), history_.end());
  return obs;
}

Observation StackelbergEnv::FollowerObservation(int av) const {
  if (!committed_) throw EnvError("prices have not been committed");
  Observation obs;
  obs.kind = AgentKind::kFollower;
  obs.index = av;
  obs.window.assign(history_.begin(), history_.end());
  for (auto& entry : obs.window) entry.first.col(av).setZero();
  obs.current_prices = *committed_;
  return obs;
}

std::vector<Observation> StackelbergEnv::CommitPrices(
    const PriceVector& prices) {
  if (!started_) throw EnvError("Reset must be called before stepping");
  if (t_ >= config_.episode_length) throw EnvError("episode is over");
  if (prices.size() != game_.num_rsus()) {
    throw EnvError("expected one price per RSU");
  }
  if (!prices.allFinite()) throw EnvError("non-finite price");
  PriceVector applied = prices;
  for (int r = 0; r < game_.num_rsus(); ++r) {
    const double lo = game_.rsus[r].base_cost;
    const double hi = game_.rsus[r].max_price;
    if (applied[r] < lo || applied[r] > hi) {
      applied[r] = std::clamp(applied[r], lo, hi);
      ++clamp_count_;
    }
  }
  committed_ = std::move(applied);
  std::vector<Observation> obs;
  for (int v = 0; v < game_.num_avs(); ++v) {
    obs.push_back(FollowerObservation(v));
  }
  return obs;
}

StepOutcome StackelbergEnv::Step(const BandwidthMatrix& bandwidths) {
  if (!committed_) throw EnvError("prices have not been committed");
  if (bandwidths.rows() != game_.num_rsus() ||
      bandwidths.cols() != game_.num_avs()) {
    throw EnvError("bandwidth matrix must be R x V");
  }
  if (!bandwidths.allFinite()) throw EnvError("non-finite bandwidth");
  BandwidthMatrix applied = bandwidths;
  for (Eigen::Index i = 0; i < applied.size(); ++i) {
    double& b = applied.data()[i];
    if (b < 0.0 || b > game_.max_bandwidth) {
      b = std::clamp(b, 0.0, game_.max_bandwidth);
      ++clamp_count_;
    }
  }
  StepOutcome outcome;
  outcome.prices = *committed_;
  outcome.bandwidths = applied;
  std::tie(outcome.leader_utilities, outcome.follower_utilities) =
      RoundUtilities(game_, outcome.prices, applied);
  outcome.leader_rewards = outcome.leader_utilities;
  outcome.follower_rewards = outcome.follower_utilities;
  for (double& x : outcome.leader_rewards) x *= config_.reward_scale;
  for (double& x : outcome.follower_rewards) x *= config_.reward_scale;

  history_.pop_front();
  history_.emplace_back(applied, outcome.prices);
  committed_.reset();
  ++t_;
  outcome.done = t_ == config_.episode_length;
  for (int r = 0; r < game_.num_rsus(); ++r) {
    outcome.next_leader_observations.push_back(LeaderObservation(r));
  }
  return outcome;
}

StepOutcome StackelbergEnv::Step(const PriceVector& prices,
                                 const BandwidthMatrix& bandwidths) {
  CommitPrices(prices);
  return Step(bandwidths);
}

void TrajectoryBuffer::Clear() { *this = TrajectoryBuffer(); }

void TrajectoryBuffer::CheckAligned() const {
  const size_t n = rewards.size();
  if (observations.size() != n || actions.size() != n ||
      raw_actions.size() != n || log_probs.size() != n || values.size() != n ||
      dones.size() != n || episodes.size() != n || steps.size() != n) {
    throw EnvError("trajectory buffer arrays are misaligned");
  }
  if ((!advantages.empty() && advantages.size() != n) ||
      (!returns.empty() && returns.size() != n)) {
    throw EnvError("advantage arrays are misaligned");
  }
}

StepOutcome PlaySlot(StackelbergEnv& env,
                     const std::vector<Observation>& leader_obs,
                     std::vector<AgentPolicy*>& policies, std::mt19937_64& rng,
                     bool deterministic, int episode,
                     std::vector<TrajectoryBuffer>* buffers) {
  const GameInstance& game = env.game();
  const int num_rsus = game.num_rsus();
  const int num_avs = game.num_avs();
  if (static_cast<int>(policies.size()) != num_rsus + num_avs) {
    throw EnvError("need one policy per agent");
  }
  const int step = env.time();
  std::vector<Eigen::VectorXd> encoded(num_rsus + num_avs);
  std::vector<PolicyOutput> outputs(num_rsus + num_avs);

  PriceVector prices(num_rsus);
  for (int r = 0; r < num_rsus; ++r) {
    encoded[r] = Encode(leader_obs[r]);
    outputs[r] = policies[r]->Act(encoded[r], rng, deterministic);
    if (outputs[r].action.size() != 1 || !outputs[r].action.allFinite()) {
      throw EnvError("leader " + std::to_string(r) +
                     " produced a non-finite or malformed action at episode " +
                     std::to_string(episode) + " step " + std::to_string(step));
    }
    prices[r] = outputs[r].action[0];
  }
  const std::vector<Observation> follower_obs = env.CommitPrices(prices);
  BandwidthMatrix bandwidths(num_rsus, num_avs);
  for (int v = 0; v < num_avs; ++v) {
    const int agent = num_rsus + v;
    encoded[agent] = Encode(follower_obs[v]);
    outputs[agent] = policies[agent]->Act(encoded[agent], rng, deterministic);
    if (outputs[agent].action.size() != num_rsus ||
        !outputs[agent].action.allFinite()) {
      throw EnvError("follower " + std::to_string(v) +
                     " produced a non-finite or malformed action at episode " +
                     std::to_string(episode) + " step " + std::to_string(step));
    }
    bandwidths.col(v) = outputs[agent].action;
  }
  StepOutcome outcome = env.Step(bandwidths);
  if (buffers != nullptr) {
    buffers->resize(num_rsus + num_avs);
    for (int a = 0; a < num_rsus + num_avs; ++a) {
      TrajectoryBuffer& buf = (*buffers)[a];
      buf.observations.push_back(std::move(encoded[a]));
      buf.actions.push_back(outputs[a].action);
      buf.raw_actions.push_back(outputs[a].raw);
      buf.log_probs.push_back(outputs[a].log_prob);
      buf.values.push_back(outputs[a].value);
      buf.rewards.push_back(a < num_rsus
                                ? outcome.leader_rewards[a]
                                : outcome.follower_rewards[a - num_rsus]);
      buf.dones.push_back(outcome.done);
      buf.episodes.push_back(episode);
      buf.steps.push_back(step);
    }
  }
  return outcome;
}

std::vector<TrajectoryBuffer> Rollout(StackelbergEnv& env,
                                      std::vector<AgentPolicy*>& policies,
                                      int episodes, uint64_t base_seed,
                                      bool deterministic) {
  std::vector<TrajectoryBuffer> buffers(env.num_agents());
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(base_seed + e);
    std::vector<Observation> obs = env.Reset(base_seed + e);
    bool done = false;
    while (!done) {
      StepOutcome outcome =
          PlaySlot(env, obs, policies, rng, deterministic, e, &buffers);
      done = outcome.done;
      obs = std::move(outcome.next_leader_observations);
    }
  }
  return buffers;
}

void WriteTrajectoryCsv(const std::vector<TrajectoryBuffer>& buffers,
                        int num_rsus, std::ostream& out) {
  out.precision(17);
  out << "agent,kind,index,episode,step,reward,value,log_prob,done,action,"
         "observation\n";
  for (size_t a = 0; a < buffers.size(); ++a) {
    const TrajectoryBuffer& buf = buffers[a];
    buf.CheckAligned();
    const bool leader = static_cast<int>(a) < num_rsus;
    const int index = leader ? static_cast<int>(a)
                             : static_cast<int>(a) - num_rsus;
    for (size_t i = 0; i < buf.size(); ++i) {
      out << a << ',' << (leader ? "leader" : "follower") << ',' << index
          << ',' << buf.episodes[i] << ',' << buf.steps[i] << ','
          << buf.rewards[i] << ',' << buf.values[i] << ',' << buf.log_probs[i]
          << ',' << (buf.dones[i] ? 1 : 0) << ',';
      WriteList(out, buf.actions[i]);
      out << ',';
      WriteList(out, buf.observations[i]);
      out << '\n';
    }
  }
}

}  // namespace stackmarl

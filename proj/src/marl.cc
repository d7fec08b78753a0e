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

#include "stackmarl/marl.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace stackmarl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void CheckLoss(double loss, const char* what, const PpoAgent& agent,
               double threshold) {
  if (!std::isfinite(loss) || loss > threshold) {
    throw TrainingDiverged(
        std::string(what) + " loss " + std::to_string(loss) + " of " +
        (agent.kind() == AgentKind::kLeader ? "leader " : "follower ") +
        std::to_string(agent.index()) + " exceeds the divergence threshold");
  }
}

void MaskGradient(nn::Vec& grad, const std::vector<uint8_t>& mask) {
  if (mask.empty()) return;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!mask[i]) grad[i] = 0.0;
  }
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw std::invalid_argument("clip_eps must lie in (0, 1)");
  }
  if (!(discount_gamma >= 0.0 && discount_gamma <= 1.0)) {
    throw std::invalid_argument("discount_gamma must lie in [0, 1]");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  }
  if (batch_size < 1 || epochs_per_batch < 1 || minibatch_size < 1 ||
      episodes < 0) {
    throw std::invalid_argument("batch sizes and epochs must be positive");
  }
  if (!(entropy_coef >= 0.0) || !(actor_learning_rate > 0.0) ||
      !(critic_learning_rate > 0.0) || !(leader_lr_scale > 0.0)) {
    throw std::invalid_argument("rates and coefficients must be positive");
  }
}

double TdError(double reward, double value, double next_value, double gamma) {
  return reward + gamma * next_value - value;
}

void ComputeAdvantages(TrajectoryBuffer& buffer, double gamma, double lambda) {
  buffer.advantages.clear();
  buffer.returns.clear();
  buffer.CheckAligned();
  const size_t n = buffer.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  double running = 0.0;
  for (size_t k = n; k-- > 0;) {
    const bool terminal = buffer.dones[k] || k + 1 == n;
    const double next_value = terminal ? 0.0 : buffer.values[k + 1];
    const double delta =
        TdError(buffer.rewards[k], buffer.values[k], next_value, gamma);
    running = delta + (terminal ? 0.0 : gamma * lambda * running);
    buffer.advantages[k] = running;
    buffer.returns[k] = running + buffer.values[k];
  }
}

double ClippedSurrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

ActorLossResult PpoActorLoss(const nn::Network& actor, const nn::Vec& params,
                             const nn::ActionBounds& bounds,
                             const std::vector<nn::Vec>& inputs,
                             const std::vector<nn::Vec>& raw_actions,
                             const std::vector<double>& log_probs,
                             const std::vector<double>& advantages,
                             const std::vector<int>& indices, double clip_eps,
                             double entropy_coef, nn::Vec* grad) {
  ActorLossResult result;
  const nn::Vec log_std = actor.LogStd(params);
  const int out_dim = actor.spec().out_dim;
  const size_t std_offset = actor.log_std_offset();
  nn::Vec local;
  if (grad != nullptr) local = nn::Vec::Zero(actor.num_params());
  nn::Tape tape;
  nn::Vec d_mean, d_log_std;
  double surrogate_sum = 0.0;
  for (int i : indices) {
    const nn::Vec mean =
        actor.Forward(params, inputs[i], grad ? &tape : nullptr);
    const double log_prob =
        nn::LogProb(raw_actions[i], mean, log_std, bounds);
    const double ratio = std::exp(log_prob - log_probs[i]);
    if (!std::isfinite(ratio)) {
      ++result.excluded;
      continue;
    }
    ++result.used;
    const double a = advantages[i];
    surrogate_sum += ClippedSurrogate(ratio, a, clip_eps);
    if (grad == nullptr) continue;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    // The minimum follows the unclipped branch unless clipping binds.
    if (ratio * a > clipped * a) continue;
    const double d_log_prob = -ratio * a;
    nn::LogProbGradient(raw_actions[i], mean, log_std, d_mean, d_log_std);
    actor.Backward(params, tape, d_log_prob * d_mean, local);
    local.segment(std_offset, out_dim) += d_log_prob * d_log_std;
  }
  result.entropy = nn::GaussianEntropy(log_std);
  if (result.used > 0) {
    result.surrogate = surrogate_sum / result.used;
    if (grad != nullptr) *grad += local / result.used;
  }
  result.loss = -result.surrogate - entropy_coef * result.entropy;
  if (grad != nullptr) {
    grad->segment(std_offset, out_dim).array() -= entropy_coef;
  }
  return result;
}

double CriticLoss(const nn::Network& critic, const nn::Vec& params,
                  const std::vector<nn::Vec>& inputs,
                  const std::vector<double>& returns,
                  const std::vector<int>& indices, nn::Vec* grad) {
  if (indices.empty()) return 0.0;
  const double n = static_cast<double>(indices.size());
  nn::Tape tape;
  double total = 0.0;
  for (int i : indices) {
    const nn::Vec v = critic.Forward(params, inputs[i], grad ? &tape : nullptr);
    const double err = v[0] - returns[i];
    total += err * err;
    if (grad != nullptr) {
      critic.Backward(params, tape, nn::Vec::Constant(1, 2.0 * err / n),
                      *grad);
    }
  }
  return total / n;
}

PpoAgent::PpoAgent(AgentKind kind, int index, nn::NetSpec actor_spec,
                   nn::NetSpec critic_spec, nn::ActionBounds bounds,
                   nn::Vec input_scale, uint64_t seed, double init_log_std)
    : kind_(kind),
      index_(index),
      actor_(std::move(actor_spec)),
      critic_(std::move(critic_spec)),
      bounds_(std::move(bounds)),
      input_scale_(std::move(input_scale)) {
  if (input_scale_.size() != actor_.spec().input_dim() ||
      critic_.spec().input_dim() != actor_.spec().input_dim()) {
    throw std::invalid_argument("actor, critic and input scale disagree");
  }
  if (bounds_.lower.size() != actor_.spec().out_dim ||
      bounds_.upper.size() != actor_.spec().out_dim) {
    throw std::invalid_argument("action bounds do not match the actor");
  }
  actor_params = actor_.Initialize(seed, init_log_std);
  actor_old_params = actor_params;
  critic_params = critic_.Initialize(seed ^ 0x9e3779b97f4a7c15ULL);
  actor_adam = nn::MakeAdamState(actor_.num_params());
  critic_adam = nn::MakeAdamState(critic_.num_params());
}

nn::Vec PpoAgent::NetworkInput(const Eigen::VectorXd& observation) const {
  return observation.cwiseProduct(input_scale_);
}

nn::Vec PpoAgent::MeanAction(const Eigen::VectorXd& observation) const {
  return nn::Squash(actor_.Forward(actor_params, NetworkInput(observation)),
                    bounds_);
}

double PpoAgent::Value(const Eigen::VectorXd& observation) const {
  return critic_.Forward(critic_params, NetworkInput(observation))[0];
}

PolicyOutput PpoAgent::Act(const Eigen::VectorXd& observation,
                           std::mt19937_64& rng, bool deterministic) {
  const nn::Vec x = NetworkInput(observation);
  const nn::Vec mean = actor_.Forward(actor_params, x);
  const nn::Vec log_std = actor_.LogStd(actor_params);
  PolicyOutput out;
  if (deterministic) {
    out.raw = mean;
    out.action = nn::Squash(mean, bounds_);
    out.log_prob = nn::LogProb(mean, mean, log_std, bounds_);
  } else {
    nn::SampledAction s = nn::SampleAction(mean, log_std, bounds_, rng);
    out.raw = std::move(s.raw);
    out.action = std::move(s.action);
    out.log_prob = s.log_prob;
  }
  out.value = critic_.Forward(critic_params, x)[0];
  return out;
}

void PpoAgent::SetMask(std::vector<uint8_t> mask) {
  if (!mask.empty() &&
      mask.size() != static_cast<size_t>(actor_.num_params())) {
    throw std::invalid_argument("mask size does not match the actor");
  }
  mask_ = std::move(mask);
  for (size_t i = 0; i < mask_.size(); ++i) {
    if (!mask_[i]) actor_params[i] = 0.0;
  }
  actor_old_params = actor_params;
  // Fresh optimiser moments so stale momentum cannot touch pruned weights.
  actor_adam = nn::MakeAdamState(actor_.num_params());
}

bool PpoAgent::MaskRespected() const {
  for (size_t i = 0; i < mask_.size(); ++i) {
    if (!mask_[i] && actor_params[i] != 0.0) return false;
  }
  return true;
}

std::vector<std::unique_ptr<PpoAgent>> MakePpoAgents(
    const StackelbergEnv& env, Architecture arch, const NetConfig& net,
    uint64_t seed) {
  const GameInstance& game = env.game();
  const int num_rsus = game.num_rsus();
  const int num_avs = game.num_avs();
  const int window = env.config().history_window;
  double price_ceiling = 0.0;
  for (const RsuConfig& r : game.rsus) {
    price_ceiling = std::max(price_ceiling, r.max_price);
  }
  // Bandwidths are divided by b^max and prices by the largest ceiling.
  nn::Vec step_scale(EncodedStepSize(num_rsus, num_avs));
  step_scale.head(num_rsus * num_avs).setConstant(1.0 / game.max_bandwidth);
  step_scale.tail(num_rsus).setConstant(1.0 / price_ceiling);

  std::vector<std::unique_ptr<PpoAgent>> agents;
  for (int a = 0; a < num_rsus + num_avs; ++a) {
    const bool leader = a < num_rsus;
    const AgentKind kind = leader ? AgentKind::kLeader : AgentKind::kFollower;
    nn::NetSpec actor;
    actor.kind = arch == Architecture::kBiLstm ? nn::NetKind::kBiLstmActor
                                               : nn::NetKind::kMlpActor;
    actor.seq_len = window;
    actor.step_dim = EncodedStepSize(num_rsus, num_avs);
    actor.extra_dim = leader ? 0 : num_rsus;
    actor.hidden_dim = net.hidden_dim;
    actor.mlp_widths = net.mlp_widths;
    actor.out_dim = leader ? 1 : num_rsus;
    nn::NetSpec critic = actor;
    critic.kind = nn::NetKind::kMlpCritic;
    critic.out_dim = 1;

    nn::ActionBounds bounds;
    if (leader) {
      bounds.lower = nn::Vec::Constant(1, game.rsus[a].base_cost);
      bounds.upper = nn::Vec::Constant(1, game.rsus[a].max_price);
    } else {
      bounds.lower = nn::Vec::Zero(num_rsus);
      bounds.upper = nn::Vec::Constant(num_rsus, game.max_bandwidth);
    }
    nn::Vec scale(actor.input_dim());
    for (int t = 0; t < window; ++t) {
      scale.segment(t * actor.step_dim, actor.step_dim) = step_scale;
    }
    if (!leader) scale.tail(num_rsus).setConstant(1.0 / price_ceiling);
    agents.push_back(std::make_unique<PpoAgent>(
        kind, leader ? a : a - num_rsus, actor, critic, bounds, scale,
        seed * 1000003ULL + a, net.init_log_std));
  }
  return agents;
}

UpdateStats UpdateAgent(PpoAgent& agent, const TrajectoryBuffer& buffer,
                        const TrainConfig& cfg, std::mt19937_64& rng) {
  buffer.CheckAligned();
  const int n = static_cast<int>(buffer.size());
  if (n == 0 || static_cast<int>(buffer.advantages.size()) != n) {
    throw std::invalid_argument("buffer has no advantages to learn from");
  }
  std::vector<nn::Vec> inputs(n);
  for (int i = 0; i < n; ++i) {
    inputs[i] = agent.NetworkInput(buffer.observations[i]);
  }
  std::vector<double> advantages = buffer.advantages;
  if (cfg.normalize_advantages && n > 1) {
    const double mean =
        std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    const double std = std::sqrt(var / n);
    for (double& a : advantages) a = (a - mean) / (std + 1e-8);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  nn::AdamOptions actor_opt;
  actor_opt.learning_rate =
      cfg.actor_learning_rate *
      (agent.kind() == AgentKind::kLeader ? cfg.leader_lr_scale : 1.0);
  nn::AdamOptions critic_opt;
  critic_opt.learning_rate = cfg.critic_learning_rate;
  UpdateStats stats;
  int batches = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += cfg.minibatch_size) {
      const std::vector<int> batch(
          order.begin() + start,
          order.begin() + std::min(n, start + cfg.minibatch_size));
      nn::Vec actor_grad = nn::Vec::Zero(agent.actor().num_params());
      const ActorLossResult actor_loss = PpoActorLoss(
          agent.actor(), agent.actor_params, agent.bounds(), inputs,
          buffer.raw_actions, buffer.log_probs, advantages, batch,
          cfg.clip_eps, cfg.entropy_coef, &actor_grad);
      CheckLoss(actor_loss.loss, "actor", agent, cfg.divergence_threshold);
      nn::ClipGradientNorm(actor_grad, cfg.max_grad_norm);
      MaskGradient(actor_grad, agent.mask());
      nn::AdamStep(agent.actor_params, actor_grad, agent.actor_adam,
                   actor_opt);

      nn::Vec critic_grad = nn::Vec::Zero(agent.critic().num_params());
      const double critic_loss =
          CriticLoss(agent.critic(), agent.critic_params, inputs,
                     buffer.returns, batch, &critic_grad);
      CheckLoss(critic_loss, "critic", agent, cfg.divergence_threshold);
      nn::ClipGradientNorm(critic_grad, cfg.max_grad_norm);
      nn::AdamStep(agent.critic_params, critic_grad, agent.critic_adam,
                   critic_opt);

      stats.actor_loss += actor_loss.loss;
      stats.critic_loss += critic_loss;
      stats.excluded += actor_loss.excluded;
      ++batches;
    }
  }
  stats.actor_loss /= batches;
  stats.critic_loss /= batches;
  agent.actor_old_params = agent.actor_params;
  return stats;
}

double TrainingReport::FinalMeanTotalReward(int n) const {
  if (episodes.empty()) return 0.0;
  const size_t count = std::min(episodes.size(), static_cast<size_t>(n));
  double total = 0.0;
  for (size_t i = episodes.size() - count; i < episodes.size(); ++i) {
    total += episodes[i].total_reward;
  }
  return total / count;
}

void TrainingReport::WriteCsv(std::ostream& out) const {
  out.precision(17);
  out << "episode,agent,reward,actor_loss,critic_loss\n";
  for (const EpisodeRecord& rec : episodes) {
    for (size_t a = 0; a < rec.agent_rewards.size(); ++a) {
      out << rec.episode << ',' << a << ',' << rec.agent_rewards[a] << ','
          << rec.actor_losses[a] << ',' << rec.critic_losses[a] << '\n';
    }
  }
}

TrainingReport Train(StackelbergEnv& env, std::vector<AgentPolicy*> policies,
                     std::vector<PpoAgent*> learners, const TrainConfig& cfg) {
  cfg.Validate();
  const int num_agents = env.num_agents();
  if (static_cast<int>(policies.size()) != num_agents ||
      static_cast<int>(learners.size()) != num_agents) {
    throw std::invalid_argument("need one policy and learner slot per agent");
  }
  if (cfg.batch_size % env.config().episode_length != 0) {
    throw std::invalid_argument(
        "batch_size must be a multiple of the episode length");
  }
  TrainingReport report;
  std::vector<TrajectoryBuffer> buffers(num_agents);
  std::mt19937_64 action_rng(cfg.seed);
  std::mt19937_64 update_rng(cfg.seed ^ 0x5bd1e995ULL);
  int64_t slot = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    EpisodeRecord rec;
    rec.episode = e;
    rec.agent_rewards.assign(num_agents, 0.0);
    rec.actor_losses.assign(num_agents, kNaN);
    rec.critic_losses.assign(num_agents, kNaN);
    std::vector<Observation> obs = env.Reset(cfg.seed + e);
    bool done = false;
    while (!done) {
      StepOutcome out =
          PlaySlot(env, obs, policies, action_rng, false, e, &buffers);
      const int num_rsus = static_cast<int>(out.leader_rewards.size());
      for (int a = 0; a < num_agents; ++a) {
        rec.agent_rewards[a] += a < num_rsus
                                    ? out.leader_rewards[a]
                                    : out.follower_rewards[a - num_rsus];
      }
      done = out.done;
      obs = std::move(out.next_leader_observations);
      report.max_buffer_size = std::max(report.max_buffer_size,
                                        buffers.front().size());
      if (++slot % cfg.batch_size != 0) continue;
      for (int a = 0; a < num_agents; ++a) {
        PpoAgent* learner = learners[a];
        if (learner == nullptr || !learner->trainable) continue;
        ComputeAdvantages(buffers[a], cfg.discount_gamma, cfg.gae_lambda);
        const UpdateStats stats =
            UpdateAgent(*learner, buffers[a], cfg, update_rng);
        rec.actor_losses[a] = stats.actor_loss;
        rec.critic_losses[a] = stats.critic_loss;
        report.excluded_samples += stats.excluded;
        if (!learner->mask().empty()) {
          ++report.mask_checks;
          if (!learner->MaskRespected()) {
            throw std::logic_error("a pruned weight became non-zero");
          }
        }
      }
      ++report.updates;
      for (TrajectoryBuffer& b : buffers) b.Clear();
    }
    for (double r : rec.agent_rewards) rec.total_reward += r;
    report.episodes.push_back(std::move(rec));
  }
  return report;
}

TrainingReport Train(StackelbergEnv& env,
                     const std::vector<std::unique_ptr<PpoAgent>>& agents,
                     const TrainConfig& cfg) {
  std::vector<PpoAgent*> learners;
  for (const auto& a : agents) learners.push_back(a.get());
  return Train(env, AsPolicies(agents), learners, cfg);
}

EvaluationResult Evaluate(std::vector<AgentPolicy*> policies,
                          StackelbergEnv& env, int episodes,
                          uint64_t base_seed) {
  const int num_rsus = env.game().num_rsus();
  const int num_agents = env.num_agents();
  EvaluationResult result;
  result.agent_utilities.assign(num_agents, 0.0);
  if (episodes <= 0) return result;
  int64_t steps = 0;
  double reward_sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(base_seed + e);
    std::vector<Observation> obs = env.Reset(base_seed + e);
    bool done = false;
    while (!done) {
      StepOutcome out =
          PlaySlot(env, obs, policies, rng, true, e, nullptr);
      for (int a = 0; a < num_agents; ++a) {
        const bool leader = a < num_rsus;
        result.agent_utilities[a] += leader
                                         ? out.leader_utilities[a]
                                         : out.follower_utilities[a - num_rsus];
        reward_sum += leader ? out.leader_rewards[a]
                             : out.follower_rewards[a - num_rsus];
      }
      ++steps;
      done = out.done;
      obs = std::move(out.next_leader_observations);
    }
  }
  for (double& u : result.agent_utilities) u /= static_cast<double>(steps);
  for (int a = 0; a < num_agents; ++a) {
    (a < num_rsus ? result.mean_leader_utility
                  : result.mean_follower_utility) += result.agent_utilities[a];
  }
  result.mean_leader_utility /= num_rsus;
  result.mean_follower_utility /= (num_agents - num_rsus);
  result.total_reward = reward_sum / episodes;
  return result;
}

std::vector<AgentPolicy*> AsPolicies(
    const std::vector<std::unique_ptr<PpoAgent>>& agents) {
  std::vector<AgentPolicy*> out;
  for (const auto& a : agents) out.push_back(a.get());
  return out;
}

}  // namespace stackmarl

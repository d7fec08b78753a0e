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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fd_oracle.h"
#include "stackmarl/baselines.h"
#include "stackmarl/instances.h"
#include "stackmarl/marl.h"

namespace stackmarl {
namespace {

using nn::Vec;

EnvConfig ShortEpisodes(int length = 10) {
  EnvConfig cfg;
  cfg.history_window = 2;
  cfg.episode_length = length;
  cfg.seed = 1;
  return cfg;
}

TrainConfig QuickTrain(int episodes) {
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.minibatch_size = 5;
  cfg.epochs_per_batch = 2;
  cfg.episodes = episodes;
  cfg.seed = 9;
  return cfg;
}

NetConfig TinyNets() {
  NetConfig net;
  net.hidden_dim = 3;
  net.mlp_widths = {6};
  return net;
}

TEST_CASE("temporal difference errors") {
  CHECK(TdError(1.0, 1.0, 2.0, 0.9) == doctest::Approx(1.8));
  CHECK(TdError(0.7, 0.2, 5.0, 0.0) == doctest::Approx(0.5));
}

// Â_t = sum_l (gamma lambda)^l d_{t+l} within the episode, written as the
// explicit double sum.
std::vector<double> GaeBySummation(const TrajectoryBuffer& b, double gamma,
                                   double lambda) {
  const size_t n = b.size();
  std::vector<double> out(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (size_t u = t; u < n; ++u) {
      const double next =
          (u + 1 < n && !b.dones[u]) ? b.values[u + 1] : 0.0;
      out[t] += weight * (b.rewards[u] + gamma * next - b.values[u]);
      if (b.dones[u]) break;
      weight *= gamma * lambda;
    }
  }
  return out;
}

TrajectoryBuffer HandBuffer() {
  TrajectoryBuffer b;
  const std::vector<double> rewards = {1.0, -0.5, 2.0, 0.3, 0.8};
  const std::vector<double> values = {0.4, 1.1, -0.2, 0.9, 0.1};
  const std::vector<bool> dones = {false, false, true, false, false};
  for (size_t i = 0; i < rewards.size(); ++i) {
    b.observations.push_back(Vec::Zero(1));
    b.actions.push_back(Vec::Zero(1));
    b.raw_actions.push_back(Vec::Zero(1));
    b.log_probs.push_back(0.0);
    b.rewards.push_back(rewards[i]);
    b.values.push_back(values[i]);
    b.dones.push_back(dones[i]);
    b.episodes.push_back(i < 3 ? 0 : 1);
    b.steps.push_back(i < 3 ? static_cast<int>(i) : static_cast<int>(i) - 3);
  }
  return b;
}

TEST_CASE("advantages match the explicit discounted sum of TD errors") {
  for (double gamma : {0.0, 0.5, 0.9}) {
    for (double lambda : {0.0, 0.7, 1.0}) {
      TrajectoryBuffer b = HandBuffer();
      ComputeAdvantages(b, gamma, lambda);
      const std::vector<double> want = GaeBySummation(b, gamma, lambda);
      for (size_t t = 0; t < b.size(); ++t) {
        CHECK(b.advantages[t] == doctest::Approx(want[t]).epsilon(1e-12));
        CHECK(b.returns[t] ==
              doctest::Approx(want[t] + b.values[t]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("lambda zero gives TD errors and gamma zero gives r - V") {
  TrajectoryBuffer b = HandBuffer();
  ComputeAdvantages(b, 0.9, 0.0);
  CHECK(b.advantages[0] == doctest::Approx(TdError(1.0, 0.4, 1.1, 0.9)));
  CHECK(b.advantages[2] == doctest::Approx(2.0 - (-0.2)));  // done step
  ComputeAdvantages(b, 0.0, 0.9);
  for (size_t t = 0; t < b.size(); ++t) {
    CHECK(b.advantages[t] == doctest::Approx(b.rewards[t] - b.values[t]));
  }
}

TEST_CASE("misaligned buffers are rejected") {
  TrajectoryBuffer b = HandBuffer();
  b.values.pop_back();
  CHECK_THROWS_AS(ComputeAdvantages(b, 0.9, 0.9), EnvError);
}

TEST_CASE("clipped surrogate hand values") {
  CHECK(ClippedSurrogate(1.0, 1.0, 0.2) == 1.0);
  CHECK(ClippedSurrogate(2.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(ClippedSurrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(ClippedSurrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
}

struct LossFixture {
  nn::Network actor;
  nn::ActionBounds bounds;
  std::vector<Vec> inputs, raws;
  std::vector<double> log_probs, advantages;
  std::vector<int> indices;
};

LossFixture MakeLossFixture(const Vec& behaviour_params, int n) {
  nn::NetSpec spec;
  spec.kind = nn::NetKind::kBiLstmActor;
  spec.seq_len = 2;
  spec.step_dim = 2;
  spec.extra_dim = 1;
  spec.hidden_dim = 2;
  spec.mlp_widths = {4};
  spec.out_dim = 2;
  LossFixture f{nn::Network(spec), {Vec::Zero(2), Vec::Constant(2, 3.0)},
                {}, {}, {}, {}, {}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec params = behaviour_params.size() > 0
                         ? behaviour_params
                         : f.actor.Initialize(1, -0.3);
  for (int i = 0; i < n; ++i) {
    Vec x(spec.input_dim());
    for (int j = 0; j < x.size(); ++j) x[j] = u(rng);
    const Vec mean = f.actor.Forward(params, x);
    const nn::SampledAction s =
        nn::SampleAction(mean, f.actor.LogStd(params), f.bounds, rng);
    f.inputs.push_back(x);
    f.raws.push_back(s.raw);
    f.log_probs.push_back(s.log_prob);
    f.advantages.push_back(u(rng));
    f.indices.push_back(i);
  }
  return f;
}

TEST_CASE("identical actor and snapshot give ratio one") {
  LossFixture f = MakeLossFixture(Vec(), 9);
  const Vec params = f.actor.Initialize(1, -0.3);
  const ActorLossResult r =
      PpoActorLoss(f.actor, params, f.bounds, f.inputs, f.raws, f.log_probs,
                   f.advantages, f.indices, 0.2, 0.0, nullptr);
  double mean = 0.0;
  for (double a : f.advantages) mean += a;
  mean /= f.advantages.size();
  CHECK(r.used == 9);
  CHECK(r.excluded == 0);
  CHECK(r.surrogate == doctest::Approx(mean).epsilon(1e-15));
  CHECK(r.loss == doctest::Approx(-mean).epsilon(1e-15));
}

TEST_CASE("actor loss gradient matches finite differences") {
  LossFixture f = MakeLossFixture(Vec(), 12);
  REQUIRE(f.actor.num_params() <= 200);
  // Move away from the behaviour policy so ratios differ from one and some
  // samples sit on the clipped branch.
  Vec params = f.actor.Initialize(1, -0.3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.15);
  for (int i = 0; i < params.size(); ++i) params[i] += noise(rng);
  for (double clip : {0.2, 10.0}) {
    const auto loss = [&](const Vec& p) {
      return PpoActorLoss(f.actor, p, f.bounds, f.inputs, f.raws, f.log_probs,
                          f.advantages, f.indices, clip, 1e-3, nullptr)
          .loss;
    };
    Vec grad = Vec::Zero(params.size());
    PpoActorLoss(f.actor, params, f.bounds, f.inputs, f.raws, f.log_probs,
                 f.advantages, f.indices, clip, 1e-3, &grad);
    CHECK(testing::MaxRelativeError(grad, testing::NumericalGradient(
                                              loss, params)) < 1e-4);
  }
}

TEST_CASE("non-finite ratios are excluded from the loss") {
  LossFixture f = MakeLossFixture(Vec(), 4);
  f.log_probs[1] = -1e6;  // exp(huge) overflows
  const ActorLossResult r = PpoActorLoss(
      f.actor, f.actor.Initialize(1, -0.3), f.bounds, f.inputs, f.raws,
      f.log_probs, f.advantages, f.indices, 0.2, 0.0, nullptr);
  CHECK(r.excluded == 1);
  CHECK(r.used == 3);
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("critic loss examples and gradient") {
  nn::NetSpec spec;
  spec.kind = nn::NetKind::kMlpCritic;
  spec.step_dim = 3;
  spec.mlp_widths = {4};
  const nn::Network critic(spec);
  const std::vector<Vec> inputs = {Vec::Constant(3, 0.5),
                                   (Vec(3) << -1, 0.2, 0.7).finished()};
  const std::vector<int> idx = {0, 1};

  const Vec zero = Vec::Zero(critic.num_params());
  CHECK(CriticLoss(critic, zero, inputs, {1.0, 1.0}, idx, nullptr) == 1.0);

  const Vec params = critic.Initialize(5);
  const double v0 = critic.Forward(params, inputs[0])[0];
  const double v1 = critic.Forward(params, inputs[1])[0];
  CHECK(CriticLoss(critic, params, inputs, {v0, v1}, idx, nullptr) == 0.0);
  const double want =
      ((v0 - 2.0) * (v0 - 2.0) + (v1 + 1.0) * (v1 + 1.0)) / 2.0;
  CHECK(CriticLoss(critic, params, inputs, {2.0, -1.0}, idx, nullptr) ==
        doctest::Approx(want).epsilon(1e-14));

  Vec grad = Vec::Zero(critic.num_params());
  CriticLoss(critic, params, inputs, {2.0, -1.0}, idx, &grad);
  const auto loss = [&](const Vec& p) {
    return CriticLoss(critic, p, inputs, {2.0, -1.0}, idx, nullptr);
  };
  CHECK(testing::MaxRelativeError(
            grad, testing::NumericalGradient(loss, params)) < 1e-5);
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.Validate());
  cfg.clip_eps = 0.0;
  CHECK_THROWS(cfg.Validate());
  cfg = TrainConfig();
  cfg.minibatch_size = 0;
  CHECK_THROWS(cfg.Validate());
  cfg = TrainConfig();
  cfg.discount_gamma = 1.5;
  CHECK_THROWS(cfg.Validate());
}

TEST_CASE("zero episodes gives an empty report") {
  StackelbergEnv env(DefaultGame(1, 2), ShortEpisodes());
  auto agents = MakePpoAgents(env, Architecture::kMlp, TinyNets(), 0);
  const Vec before = agents[0]->actor_params;
  const TrainingReport report = Train(env, agents, QuickTrain(0));
  CHECK(report.episodes.empty());
  CHECK(report.updates == 0);
  CHECK(agents[0]->actor_params == before);
}

TEST_CASE("batches must end on episode boundaries") {
  StackelbergEnv env(DefaultGame(1, 2), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kMlp, TinyNets(), 0);
  TrainConfig cfg = QuickTrain(2);
  cfg.batch_size = 15;
  CHECK_THROWS_AS(Train(env, agents, cfg), std::invalid_argument);
}

TEST_CASE("buffers never exceed the batch and updates follow the slot clock") {
  StackelbergEnv env(DefaultGame(2, 2), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kBiLstm, TinyNets(), 0);
  const TrainingReport report = Train(env, agents, QuickTrain(6));
  CHECK(report.episodes.size() == 6);
  CHECK(report.updates == 3);  // 60 slots / 20
  CHECK(report.max_buffer_size <= 20);
  CHECK(report.max_buffer_size == 20);
  // Losses are recorded in the episodes whose last slot closes a batch.
  CHECK(std::isnan(report.episodes[0].actor_losses[0]));
  CHECK(std::isfinite(report.episodes[1].actor_losses[0]));
  std::ostringstream csv;
  report.WriteCsv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind("episode,agent,reward,actor_loss,critic_loss\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6 * 4);
}

TEST_CASE("seeded training reproduces the reward curve bit for bit") {
  std::vector<double> curves[2];
  for (int run = 0; run < 2; ++run) {
    StackelbergEnv env(DefaultGame(2, 3), ShortEpisodes(10));
    auto agents = MakePpoAgents(env, Architecture::kBiLstm, TinyNets(), 4);
    const TrainingReport report = Train(env, agents, QuickTrain(6));
    for (const EpisodeRecord& e : report.episodes) {
      curves[run].push_back(e.total_reward);
      curves[run].insert(curves[run].end(), e.actor_losses.begin(),
                         e.actor_losses.end());
    }
  }
  REQUIRE(curves[0].size() == curves[1].size());
  for (size_t i = 0; i < curves[0].size(); ++i) {
    const bool same = curves[0][i] == curves[1][i] ||
                      (std::isnan(curves[0][i]) && std::isnan(curves[1][i]));
    CHECK(same);
  }
}

TEST_CASE("the divergence guard aborts training") {
  StackelbergEnv env(DefaultGame(1, 2), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kMlp, TinyNets(), 0);
  TrainConfig cfg = QuickTrain(4);
  cfg.divergence_threshold = 1e-9;
  CHECK_THROWS_AS(Train(env, agents, cfg), TrainingDiverged);
}

TEST_CASE("frozen learners are left untouched") {
  StackelbergEnv env(DefaultGame(1, 2), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kMlp, TinyNets(), 0);
  agents[0]->trainable = false;
  const Vec leader = agents[0]->actor_params;
  const Vec follower = agents[1]->actor_params;
  Train(env, agents, QuickTrain(4));
  CHECK(agents[0]->actor_params == leader);
  CHECK(agents[1]->actor_params != follower);
}

TEST_CASE("masked gradients keep pruned weights at zero") {
  StackelbergEnv env(DefaultGame(1, 2), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kBiLstm, TinyNets(), 0);
  std::vector<uint8_t> mask(agents[1]->actor().num_params(), 1);
  for (size_t i = 0; i < mask.size(); i += 3) mask[i] = 0;
  agents[1]->SetMask(mask);
  const TrainingReport report = Train(env, agents, QuickTrain(4));
  CHECK(report.mask_checks == report.updates);
  CHECK(agents[1]->MaskRespected());
}

TEST_CASE("agents act inside their bounds") {
  StackelbergEnv env(DefaultGame(2, 3), ShortEpisodes(10));
  auto agents = MakePpoAgents(env, Architecture::kBiLstm, TinyNets(), 2);
  std::vector<AgentPolicy*> policies = AsPolicies(agents);
  const auto buffers = Rollout(env, policies, 2, 5, false);
  const GameInstance& game = env.game();
  for (size_t a = 0; a < buffers.size(); ++a) {
    for (const Vec& action : buffers[a].actions) {
      if (a < 2) {
        CHECK(action[0] >= game.rsus[a].base_cost);
        CHECK(action[0] <= game.rsus[a].max_price);
      } else {
        CHECK(action.minCoeff() >= 0.0);
        CHECK(action.maxCoeff() <= game.max_bandwidth);
      }
    }
  }
}

TEST_CASE("evaluation is deterministic and matches the equilibrium") {
  const GameInstance game = DefaultGame(3, 5);
  StackelbergEnv env(game, ShortEpisodes(10));

  auto random = MakeRandomPolicies(env);
  const EvaluationResult r1 = Evaluate(Borrow(random), env, 3, 11);
  const EvaluationResult r2 = Evaluate(Borrow(random), env, 3, 11);
  CHECK(r1.agent_utilities == r2.agent_utilities);
  CHECK(r1.total_reward == r2.total_reward);

  auto analytic = MakeAnalyticPolicies(env);
  const EvaluationResult eval = Evaluate(Borrow(analytic), env, 2, 0);
  const EquilibriumResult eq = SolveEquilibrium(game, SolverOptions());
  for (int r = 0; r < 3; ++r) {
    CHECK(eval.agent_utilities[r] ==
          doctest::Approx(eq.leader_utilities[r]).epsilon(1e-9));
  }
  for (int v = 0; v < 5; ++v) {
    CHECK(eval.agent_utilities[3 + v] ==
          doctest::Approx(eq.follower_utilities[v]).epsilon(1e-9));
  }
  const double leader_mean =
      std::accumulate(eq.leader_utilities.begin(), eq.leader_utilities.end(),
                      0.0) /
      3.0;
  CHECK(eval.mean_leader_utility == doctest::Approx(leader_mean));
}

}  // namespace
}  // namespace stackmarl

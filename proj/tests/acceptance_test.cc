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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any selected criterion fails.
//
//   acceptance_test [--only 3,8] [--out-dir DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fd_oracle.h"
#include "game_oracles.h"
#include "px_oracle.h"
#include "stackmarl/baselines.h"
#include "stackmarl/harness.h"
#include "stackmarl/instances.h"
#include "stackmarl/marl.h"
#include "stackmarl/nn.h"
#include "stackmarl/pruning.h"

namespace stackmarl {
namespace {

using nn::Vec;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string Format(const char* fmt, double a = 0, double b = 0, double c = 0,
                   double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

PriceVector RandomPrices(const GameInstance& game, std::mt19937_64& rng) {
  PriceVector prices(game.num_rsus());
  for (int r = 0; r < game.num_rsus(); ++r) {
    std::uniform_real_distribution<double> p(game.rsus[r].base_cost,
                                             game.rsus[r].max_price);
    prices[r] = p(rng);
  }
  return prices;
}

// 1. Closed-form follower response against a 1e5-point grid argmax.
Outcome FollowerOracle() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const GameInstance game = SampleGame({}, 10000 + trial);
    const PriceVector prices = RandomPrices(game, rng);
    const int v = trial % game.num_avs();
    const Eigen::VectorXd closed = FollowerBestResponse(v, prices, game);
    for (int r = 0; r < game.num_rsus(); ++r) {
      const testing::GridMax grid =
          testing::FollowerGridArgmax(v, r, prices, game, 100000);
      worst = std::max(worst,
                       std::abs(grid.argmax - closed[r]) / game.max_bandwidth);
      ++checked;
    }
  }
  return {worst <= 1e-3,
          Format("%.0f (AV, RSU) pairs on 200 instances; max |b - b_grid| / "
                 "b_max = %.3g (limit 1e-3)",
                 checked, worst)};
}

// 2. Leader response against a nested grid: price grid outside, follower
// demands grid-searched inside, utilities from the utility definition only.
// Both searches are refined grids; demands are often ~1e-2, so a plain grid
// over [0, b_max] would dominate the utility comparison with rounding.
Outcome LeaderOracle() {
  std::mt19937_64 rng(202);
  constexpr int kPricePoints = 101;
  constexpr int kDemandPoints = 1001;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const GameInstance game = SampleGame({}, 20000 + trial);
    const PriceVector prices = RandomPrices(game, rng);
    const int r = trial % game.num_rsus();
    double w = 0.0;
    for (int l = 0; l < game.num_rsus(); ++l) {
      if (l != r) w += 1.0 / prices[l];
    }
    auto oracle_utility = [&](double p) {
      PriceVector trial_prices = prices;
      trial_prices[r] = p;
      BandwidthMatrix response =
          BandwidthMatrix::Zero(game.num_rsus(), game.num_avs());
      for (int v = 0; v < game.num_avs(); ++v) {
        BandwidthMatrix probe =
            BandwidthMatrix::Zero(game.num_rsus(), game.num_avs());
        response(r, v) = testing::RefinedGridMaximize(
                             [&](double b) {
                               probe(r, v) = b;
                               return FollowerUtility(v, probe, trial_prices,
                                                      game);
                             },
                             0.0, game.max_bandwidth, kDemandPoints)
                             .argmax;
      }
      return LeaderUtility(r, response, trial_prices, game);
    };
    const testing::GridMax grid = testing::RefinedGridMaximize(
        oracle_utility, game.rsus[r].base_cost, game.rsus[r].max_price,
        kPricePoints);
    const double ours = oracle_utility(LeaderBestResponseForW(r, w, game));
    const double gap =
        std::abs(ours - grid.value) / std::max(std::abs(grid.value), 1e-9);
    if (std::abs(ours - grid.value) > 1e-9) worst = std::max(worst, gap);
  }
  return {worst <= 0.01,
          Format("200 instances; max relative utility gap to the grid "
                 "optimum %.3g (limit 0.01)",
                 worst)};
}

// 3. Convergence and unilateral-deviation stability of the fixed point.
Outcome EquilibriumStability() {
  int converged = 0, stable = 0, max_iter = 0;
  double worst_residual = 0.0, worst_gain = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const GameInstance game = SampleGame({}, 30000 + trial);
    SolverOptions opts;
    opts.max_iterations = 500;
    const EquilibriumResult eq = SolveEquilibrium(game, opts);
    worst_residual = std::max(worst_residual, eq.residual);
    max_iter = std::max(max_iter, eq.iterations);
    if (eq.converged && eq.residual < 1e-6 && eq.iterations <= 500) {
      ++converged;
    }
    const DeviationReport dev =
        ScanDeviations(game, eq.prices, eq.bandwidths, 1000);
    const double gain = std::max(dev.max_leader_gain, dev.max_follower_gain);
    worst_gain = std::max(worst_gain, gain);
    if (gain <= 1e-6) ++stable;
  }
  return {converged == 100 && stable == 100,
          Format("converged %.0f/100 (max residual %.3g, max iterations "
                 "%.0f); deviation-stable %.0f/100",
                 converged, worst_residual, max_iter, stable) +
              Format(" (max gain %.3g, limit 1e-6)", worst_gain)};
}

// 4. Standard-function certificate over 1e4 samples.
Outcome Certificate() {
  CertificateReport total;
  for (int g = 0; g < 10; ++g) {
    const CertificateReport r =
        CertifyStandardFunction(SampleGame({}, 40000 + g), 1000, 400 + g);
    total.samples += r.samples;
    total.degenerate += r.degenerate;
    total.positivity_pass += r.positivity_pass;
    total.positivity_fail += r.positivity_fail;
    total.monotonicity_pass += r.monotonicity_pass;
    total.monotonicity_fail += r.monotonicity_fail;
    total.scalability_pass += r.scalability_pass;
    total.scalability_fail += r.scalability_fail;
    total.counterexamples.insert(total.counterexamples.end(),
                                 r.counterexamples.begin(),
                                 r.counterexamples.end());
  }
  const bool ok = total.samples == 10000 && total.passed() &&
                  total.counterexamples.empty();
  return {ok, Format("%.0f samples; positivity %.0f pass, monotonicity %.0f "
                     "pass, scalability %.0f pass",
                     total.samples, total.positivity_pass,
                     total.monotonicity_pass, total.scalability_pass) +
                  Format("; %.0f counterexamples",
                         total.counterexamples.size())};
}

Vec RandomVec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

// Gradient of c . y + 0.5 |y|^2 through the whole network versus central
// differences.
double NetworkGradientError(const nn::Network& net, const Vec& params,
                            const Vec& input, const Vec& coeffs) {
  auto loss = [&](const Vec& p) {
    const Vec y = net.Forward(p, input);
    return coeffs.dot(y) + 0.5 * y.squaredNorm();
  };
  nn::Tape tape;
  const Vec y = net.Forward(params, input, &tape);
  Vec grad = Vec::Zero(net.num_params());
  net.Backward(params, tape, coeffs + y, grad);
  return testing::MaxRelativeError(grad, testing::NumericalGradient(loss, params));
}

double LstmChainGradientError(std::mt19937_64& rng) {
  const int in = 3, hidden = 3, steps = 4;
  const int count = 4 * hidden * in + 4 * hidden * hidden + 4 * hidden;
  const Vec theta = RandomVec(count, rng, 0.8);
  std::vector<Vec> seq, coeffs;
  for (int t = 0; t < steps; ++t) seq.push_back(RandomVec(in, rng));
  for (int t = 0; t < steps; ++t) coeffs.push_back(RandomVec(hidden, rng));
  auto weights_of = [&](const Vec& p) {
    return nn::LstmWeights{
        nn::ConstMatrixMap(p.data(), 4 * hidden, in),
        nn::ConstMatrixMap(p.data() + 4 * hidden * in, 4 * hidden, hidden),
        Eigen::Map<const Vec>(p.data() + 4 * hidden * (in + hidden),
                              4 * hidden)};
  };
  auto loss = [&](const Vec& p) {
    const std::vector<Vec> h = nn::LstmForward(
        weights_of(p), seq, nn::ActivationMode::kStandard, nullptr);
    double total = 0.0;
    for (int t = 0; t < steps; ++t) total += coeffs[t].dot(h[t]);
    return total;
  };
  nn::LstmTrace trace;
  nn::LstmForward(weights_of(theta), seq, nn::ActivationMode::kStandard,
                  &trace);
  Vec grad = Vec::Zero(count);
  nn::LstmBackward(
      weights_of(theta), trace, nn::ActivationMode::kStandard, coeffs,
      nn::MatrixMap(grad.data(), 4 * hidden, in),
      nn::MatrixMap(grad.data() + 4 * hidden * in, 4 * hidden, hidden),
      Eigen::Map<Vec>(grad.data() + 4 * hidden * (in + hidden), 4 * hidden),
      nullptr);
  return testing::MaxRelativeError(grad, testing::NumericalGradient(loss, theta));
}

double PpoLossGradientError(std::mt19937_64& rng) {
  nn::NetSpec spec;
  spec.kind = nn::NetKind::kBiLstmActor;
  spec.seq_len = 2;
  spec.step_dim = 2;
  spec.extra_dim = 1;
  spec.hidden_dim = 2;
  spec.mlp_widths = {4};
  spec.out_dim = 2;
  const nn::Network actor(spec);
  const nn::ActionBounds bounds{Vec::Zero(2), Vec::Constant(2, 3.0)};
  const Vec behaviour = actor.Initialize(1, -0.3);
  std::vector<Vec> inputs, raws;
  std::vector<double> log_probs, advantages;
  std::vector<int> indices;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 12; ++i) {
    const Vec x = RandomVec(spec.input_dim(), rng);
    const nn::SampledAction s = nn::SampleAction(
        actor.Forward(behaviour, x), actor.LogStd(behaviour), bounds, rng);
    inputs.push_back(x);
    raws.push_back(s.raw);
    log_probs.push_back(s.log_prob);
    advantages.push_back(u(rng));
    indices.push_back(i);
  }
  std::normal_distribution<double> noise(0.0, 0.15);
  Vec params = behaviour;
  for (int i = 0; i < params.size(); ++i) params[i] += noise(rng);
  double worst = 0.0;
  for (double clip : {0.2, 10.0}) {
    auto loss = [&](const Vec& p) {
      return PpoActorLoss(actor, p, bounds, inputs, raws, log_probs,
                          advantages, indices, clip, 1e-3, nullptr)
          .loss;
    };
    Vec grad = Vec::Zero(params.size());
    PpoActorLoss(actor, params, bounds, inputs, raws, log_probs, advantages,
                 indices, clip, 1e-3, &grad);
    worst = std::max(worst, testing::MaxRelativeError(
                                grad, testing::NumericalGradient(loss, params)));
  }
  return worst;
}

// 5. Analytic follower derivative and every backward pass against central
// differences.
Outcome GradientSuites() {
  std::mt19937_64 rng(505);
  double derivative_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const GameInstance game = SampleGame({}, 50000 + trial);
    const PriceVector prices = RandomPrices(game, rng);
    const int v = trial % game.num_avs();
    const int r = trial % game.num_rsus();
    BandwidthMatrix b = FollowerBestResponses(prices, game);
    std::uniform_real_distribution<double> bw(0.05, game.max_bandwidth);
    const double at = bw(rng);
    const double fd = testing::CentralDifference(
        [&](double x) {
          b(r, v) = x;
          return FollowerUtility(v, b, prices, game);
        },
        at, 1e-6 * game.max_bandwidth);
    const double analytic = FollowerUtilityDerivative(v, r, at, prices, game);
    derivative_err = std::max(
        derivative_err,
        std::abs(fd - analytic) / std::max(std::abs(analytic), 1e-3));
  }

  nn::NetSpec bilstm;
  bilstm.kind = nn::NetKind::kBiLstmActor;
  bilstm.seq_len = 3;
  bilstm.step_dim = 2;
  bilstm.extra_dim = 1;
  bilstm.hidden_dim = 2;
  bilstm.mlp_widths = {4};
  bilstm.out_dim = 2;
  nn::NetSpec mlp = bilstm;
  mlp.kind = nn::NetKind::kMlpActor;
  mlp.mlp_widths = {5, 4};
  nn::NetSpec critic = bilstm;
  critic.kind = nn::NetKind::kMlpCritic;
  critic.out_dim = 1;

  double mlp_err = 0.0, bilstm_err = 0.0, critic_err = 0.0, lstm_err = 0.0;
  int max_params = 0;
  for (int trial = 0; trial < 10; ++trial) {
    for (auto [spec, err] :
         {std::pair{&mlp, &mlp_err}, std::pair{&bilstm, &bilstm_err},
          std::pair{&critic, &critic_err}}) {
      const nn::Network net(*spec);
      max_params = std::max(max_params, net.num_params());
      const Vec params = net.Initialize(trial) +
                         RandomVec(net.num_params(), rng, 0.2);
      *err = std::max(*err, NetworkGradientError(
                                net, params, RandomVec(spec->input_dim(), rng),
                                RandomVec(spec->out_dim, rng)));
    }
    lstm_err = std::max(lstm_err, LstmChainGradientError(rng));
  }
  const double ppo_err = PpoLossGradientError(rng);
  const double net_err =
      std::max({mlp_err, bilstm_err, critic_err, lstm_err, ppo_err});
  return {derivative_err < 1e-5 && net_err < 1e-4 && max_params <= 200,
          Format("follower derivative %.3g (limit 1e-5); MLP %.3g, LSTM "
                 "%.3g, Bi-LSTM %.3g",
                 derivative_err, mlp_err, lstm_err, bilstm_err) +
              Format(", critic %.3g, PPO loss %.3g (limit 1e-4); largest net "
                     "%.0f parameters",
                     critic_err, ppo_err, max_params)};
}

// 6. One learner against an analytic opponent in the 1 x 1 market.
Outcome PpoSanity() {
  const GameInstance game = DefaultGame(1, 1);
  const EquilibriumResult eq = SolveEquilibrium(game);
  EnvConfig env_cfg;
  StackelbergEnv env(game, env_cfg);
  std::string detail;
  bool ok = true;
  for (int learner = 0; learner < 2; ++learner) {
    auto agents = MakePpoAgents(env, Architecture::kBiLstm, NetConfig{}, 0);
    auto analytic = MakeAnalyticPolicies(env);
    std::vector<AgentPolicy*> policies = {analytic[0].get(),
                                          analytic[1].get()};
    policies[learner] = agents[learner].get();
    std::vector<PpoAgent*> learners = {nullptr, nullptr};
    learners[learner] = agents[learner].get();
    TrainConfig train;
    train.episodes = 300;
    train.seed = 0;
    Train(env, policies, learners, train);
    const EvaluationResult ev = Evaluate(policies, env, 3, 7);
    const double oracle = learner == 0 ? eq.leader_utilities[0]
                                       : eq.follower_utilities[0];
    const double ratio = ev.agent_utilities[learner] / oracle;
    ok = ok && ratio >= 0.95;
    detail += std::string(learner == 0 ? "RSU" : "AV") +
              Format(" learner: utility %.5g vs oracle %.5g (ratio %.4f, "
                     "limit 0.95); ",
                     ev.agent_utilities[learner], oracle, ratio);
  }
  return {ok, detail + "300 episodes each"};
}

// 7. Reward ordering of the training curves on the default market.
Outcome RewardOrdering(const std::string& out_dir) {
  ExperimentSpec spec;
  spec.name = "reward_curves";
  spec.kind = ExperimentKind::kRewardCurves;
  spec.seeds = {0, 1, 2};
  const ExperimentResult result = RunExperiment(spec, out_dir);
  for (const PointResult& p : result.points) {
    if (!p.error.empty()) return {false, "run failed: " + p.error};
  }
  const ComparisonReport report = CompareReport({result.metrics_path}, 100);
  for (const TrendCheck& c : report.checks) {
    if (c.name.find("reward ordering") != std::string::npos) {
      return {c.passed, c.detail + "metrics in " + result.metrics_path};
    }
  }
  return {false, "no reward-ordering check produced"};
}

// 8. Companion saliency against brute-force path enumeration.
Outcome PxOracle() {
  const std::vector<testing::CorpusNet> corpus = testing::RectifiedCorpus();
  double worst = 0.0;
  int max_params = 0;
  for (const testing::CorpusNet& c : corpus) {
    const nn::Network net(c.spec);
    max_params = std::max(max_params, net.num_params());
    const SaliencyResult got = PxSaliency(
        net, c.params, c.data, PrunableParameters(net, /*mlp_only=*/false));
    const testing::PathOracleResult want = testing::EnumeratePaths(
        testing::ExtractRectifiedNet(net, c.params), c.data);
    worst = std::max(worst, testing::CompanionOracleGap(net, got.scores, want));
  }
  return {corpus.size() >= 20 && max_params <= 30 && worst < 1e-8,
          Format("%.0f nets (largest %.0f parameters); max relative gap %.3g "
                 "(limit 1e-8)",
                 corpus.size(), max_params, worst)};
}

// 9. Density one is the identity; masks hold through fine-tuning.
Outcome PruningIdentity() {
  RunConfig config;
  config.train.episodes = 20;
  const GameInstance game = config.BuildGame();
  TrainedPopulation pop =
      TrainPopulation(config, game, Architecture::kBiLstm, 9);
  StackelbergEnv env(game, config.env);
  const PruneDataset data = BuildPruneDataset(env, AsPolicies(pop.agents),
                                              config.num_rsus, 64, 3);
  auto outputs = [&](const std::vector<std::unique_ptr<PpoAgent>>& agents) {
    std::vector<Vec> out;
    for (const auto& a : agents) {
      for (const Eigen::VectorXd& obs : data.observations) {
        out.push_back(a->actor().Forward(a->actor_params, a->NetworkInput(obs)));
      }
    }
    return out;
  };
  const std::vector<Vec> before = outputs(pop.agents);

  auto identity = ClonePopulation(pop.agents);
  std::vector<double> ones(identity.size(), 1.0);
  TrainConfig train = config.train;
  PruneAndFinetune(env, identity, train, config.prune, ones);
  const std::vector<Vec> after = outputs(identity);
  bool identical = before.size() == after.size();
  for (size_t i = 0; identical && i < before.size(); ++i) {
    identical = (before[i].array() == after[i].array()).all();
  }

  auto pruned = ClonePopulation(pop.agents);
  std::vector<double> densities(pruned.size(), 0.5);
  for (int r = 0; r < config.num_rsus; ++r) densities[r] = 1.0;
  const std::vector<PruneReport> reports =
      PruneAndFinetune(env, pruned, train, config.prune, densities);
  int checks = 0, finetune_episodes = 0;
  bool respected = true;
  for (size_t a = 0; a < pruned.size(); ++a) {
    respected = respected && pruned[a]->MaskRespected();
    checks = reports[a].mask_checks;
    finetune_episodes = reports[a].finetune_episodes;
  }
  const bool ok = identical && respected && checks > 0;
  return {ok, std::string("density 1.0 outputs bit-identical: ") +
                  (identical ? "yes" : "no") +
                  Format("; density 0.5 fine-tune: %.0f mask checks over "
                         "%.0f episodes, zeros held: ",
                         checks, finetune_episodes) +
                  (respected ? "yes" : "no")};
}

// 10. Reward retention after fine-tuning and nested masks.
Outcome DensityTrends(const std::string& out_dir) {
  RunConfig config;
  const GameInstance game = config.BuildGame();
  const std::vector<double> targets = {0.9, 0.72, 0.33};
  std::vector<MetricsRow> rows;
  bool nested = true;
  for (uint64_t seed : {0, 1, 2}) {
    TrainedPopulation dense =
        TrainPopulation(config, game, config.architecture, seed);
    EnvConfig env_cfg = config.env;
    env_cfg.seed = seed;
    StackelbergEnv env(game, env_cfg);
    TrainConfig train = config.train;
    train.seed = seed;
    std::vector<std::vector<std::vector<uint8_t>>> masks;  // q, agent
    for (double q : targets) {
      auto agents = ClonePopulation(dense.agents);
      std::vector<double> densities(agents.size(), q);
      for (int r = 0; r < config.num_rsus; ++r) densities[r] = 1.0;
      const std::vector<PruneReport> reports =
          PruneAndFinetune(env, agents, train, config.prune, densities);
      const std::string point = "q" + Format("%g", q);
      const PruneReport& last = reports.back();
      rows.push_back({"density", point, seed, -1, "R3V5", "target_density", q});
      rows.push_back({"density", point, seed, -1, "R3V5", "dense_reward",
                      last.dense_reward});
      rows.push_back({"density", point, seed, -1, "R3V5", "finetuned_reward",
                      last.finetuned_reward});
      std::vector<std::vector<uint8_t>> m;
      for (const auto& a : agents) m.push_back(a->mask());
      masks.push_back(std::move(m));
    }
    for (size_t a = config.num_rsus; a < dense.agents.size(); ++a) {
      for (size_t j = 1; j < targets.size(); ++j) {
        const auto& sparse = masks[j][a];
        const auto& wider = masks[j - 1][a];
        for (size_t i = 0; i < sparse.size(); ++i) {
          if (sparse[i] && !wider[i]) nested = false;
        }
      }
    }
  }
  std::filesystem::create_directories(out_dir);
  const std::string path = out_dir + "/density.csv";
  {
    std::ofstream out(path);
    WriteMetricsRows(rows, out);
  }
  const ComparisonReport report = CompareRows(rows, 100);
  bool ok = nested;
  std::string detail;
  int found = 0;
  for (const TrendCheck& c : report.checks) {
    ++found;
    ok = ok && c.passed;
    detail += std::string(c.passed ? "[ok] " : "[violated] ") + c.name +
              ": " + c.detail;
  }
  ok = ok && found == 3;
  return {ok, detail + "nested masks: " + (nested ? "yes" : "no") +
                  "; metrics in " + path};
}

// 11. RSU and AV sweeps of mean RSU utility.
Outcome PopulationTrends(const std::string& out_dir) {
  ExperimentSpec spec;
  spec.name = "population";
  spec.kind = ExperimentKind::kPopulation;
  spec.seeds = {0, 1, 2};
  spec.rsu_counts = {2, 3, 4};
  spec.av_counts = {3, 5, 8};
  const ExperimentResult result = RunExperiment(spec, out_dir);
  for (const PointResult& p : result.points) {
    if (!p.error.empty()) return {false, "point " + p.label + ": " + p.error};
  }
  const ComparisonReport report = CompareReport({result.metrics_path});
  const std::vector<std::string> wanted = {
      "analytic mean RSU utility non-increasing in RSU count at 5 AVs",
      "analytic mean RSU utility non-decreasing in AV count at 3 RSUs",
      "trained mean RSU utility non-increasing in RSU count at 5 AVs",
      "trained mean RSU utility non-decreasing in AV count at 3 RSUs"};
  bool ok = true;
  std::string detail;
  for (const std::string& name : wanted) {
    const TrendCheck* found = nullptr;
    for (const TrendCheck& c : report.checks) {
      if (c.name.find(name) != std::string::npos) found = &c;
    }
    if (!found) {
      ok = false;
      detail += "[missing] " + name + "; ";
      continue;
    }
    ok = ok && found->passed;
    detail += std::string(found->passed ? "[ok] " : "[violated] ") + name +
              ": " + found->detail;
  }
  return {ok, detail + "metrics in " + result.metrics_path};
}

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

int Main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string out_dir = "acceptance_out";
  app.add_option("--only", only, "Criteria to run (default all)")
      ->delimiter(',');
  app.add_option("--out-dir", out_dir, "Directory for experiment metrics");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "follower oracle equivalence", 30, FollowerOracle},
      {2, "leader oracle equivalence", 60, LeaderOracle},
      {3, "equilibrium stability", 0, EquilibriumStability},
      {4, "standard-function certificate", 0, Certificate},
      {5, "gradient suites", 0, GradientSuites},
      {6, "PPO sanity", 600, PpoSanity},
      {7, "reward-curve ordering", 0, [&] { return RewardOrdering(out_dir); }},
      {8, "PX oracle equivalence", 0, PxOracle},
      {9, "pruning identity", 0, PruningIdentity},
      {10, "density trends", 0, [&] { return DensityTrends(out_dir); }},
      {11, "population trends", 0, [&] { return PopulationTrends(out_dir); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int passed = 0, run = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++run;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      outcome.passed = false;
      outcome.detail += Format("; runtime %.1f s exceeds %.0f s", secs,
                               c.time_limit_s);
    }
    passed += outcome.passed;
    std::printf("%s criterion %d (%s) [%.1f s]: %s\n",
                outcome.passed ? "PASS" : "FAIL", c.id, c.name, secs,
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d criteria passed\n", passed, run);
  return passed == run ? 0 : 1;
}

}  // namespace
}  // namespace stackmarl

int main(int argc, char** argv) { return stackmarl::Main(argc, argv); }

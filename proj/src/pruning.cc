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

#include "stackmarl/pruning.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stackmarl {
namespace {

constexpr int kHistogramBuckets = 16;  // zero, then 1e-12 .. >= 1e2

// Gated-linear LSTM chain with unit weights: the candidate and cell output
// are linear, the gates are the values recorded on the real input.
nn::Vec GatedLinearChain(const nn::LstmTrace& trace,
                         const std::vector<nn::Vec>& squared_sequence) {
  const int hidden = static_cast<int>(trace.steps.front().h.size());
  nn::Vec h = nn::Vec::Zero(hidden);
  nn::Vec c = nn::Vec::Zero(hidden);
  for (size_t t = 0; t < squared_sequence.size(); ++t) {
    const nn::LstmStep& step = trace.steps[t];
    const double z = squared_sequence[t].sum() + h.sum();
    c = step.f.cwiseProduct(c) + step.i * z;
    h = step.o.cwiseProduct(c);
  }
  return h;
}

}  // namespace

PruneDataset BuildPruneDataset(StackelbergEnv& env,
                               std::vector<AgentPolicy*> policies, int agent,
                               int n, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("dataset size must be positive");
  if (agent < 0 || agent >= static_cast<int>(policies.size())) {
    throw std::invalid_argument("agent index out of range");
  }
  PruneDataset data;
  for (uint64_t e = 0; static_cast<int>(data.size()) < n; ++e) {
    const std::vector<TrajectoryBuffer> buffers =
        Rollout(env, policies, 1, seed + e, /*deterministic=*/true);
    const TrajectoryBuffer& own = buffers[agent];
    for (size_t i = 0; i < own.size() && static_cast<int>(data.size()) < n;
         ++i) {
      data.observations.push_back(own.observations[i]);
      data.actions.push_back(own.actions[i]);
    }
  }
  return data;
}

std::vector<uint8_t> PrunableParameters(const nn::Network& net,
                                        bool mlp_only) {
  std::vector<uint8_t> prunable(net.num_params(), 0);
  for (const nn::LayerDescriptor& entry : net.layout().entries()) {
    if (entry.role != nn::ParamRole::kWeight) continue;
    if (mlp_only && entry.block == nn::ParamBlock::kLstm) continue;
    std::fill_n(prunable.begin() + entry.offset, entry.size(), 1);
  }
  return prunable;
}

nn::Vec ActivationCompanion(const nn::Network& net, const nn::Vec& input,
                            const nn::Tape& tape) {
  const nn::NetSpec& spec = net.spec();
  const nn::Vec squared = input.array().square();
  nn::Vec features;
  if (spec.kind == nn::NetKind::kBiLstmActor) {
    std::vector<nn::Vec> sequence = net.SequenceOf(squared);
    const nn::Vec fwd = GatedLinearChain(tape.forward_chain, sequence);
    std::reverse(sequence.begin(), sequence.end());
    const nn::Vec bwd = GatedLinearChain(tape.backward_chain, sequence);
    features.resize(fwd.size() + bwd.size() + spec.extra_dim);
    features << fwd, bwd, squared.tail(spec.extra_dim);
  } else {
    features = squared;
  }
  const int layers = net.mlp_layers();
  for (int l = 0; l < layers; ++l) {
    const int rows = net.mlp_weight(l).rows;
    nn::Vec next = nn::Vec::Constant(rows, features.sum());
    if (l + 1 < layers) {
      next = (tape.mlp.pre[l].array() > 0.0).select(next, 0.0);
    }
    features = std::move(next);
  }
  return features;
}

namespace {

// theta^2 with biases and log-std zeroed.
nn::Vec SquaredWeights(const nn::Network& net, const nn::Vec& params) {
  nn::Vec squared = nn::Vec::Zero(params.size());
  for (const nn::LayerDescriptor& entry : net.layout().entries()) {
    if (entry.role != nn::ParamRole::kWeight) continue;
    squared.segment(entry.offset, entry.size()) =
        params.segment(entry.offset, entry.size()).array().square();
  }
  return squared;
}

}  // namespace

nn::Vec ParameterCompanion(const nn::Network& net, const nn::Vec& params) {
  return net.Forward(SquaredWeights(net, params),
                     nn::Vec::Ones(net.spec().input_dim()), nullptr,
                     nn::ActivationMode::kIdentity);
}

SaliencyResult PxSaliency(const nn::Network& net, const nn::Vec& params,
                          const std::vector<nn::Vec>& inputs,
                          const std::vector<uint8_t>& prunable,
                          bool gate_approximation) {
  if (inputs.empty()) throw std::invalid_argument("empty pruning dataset");
  if (net.spec().kind == nn::NetKind::kBiLstmActor && !gate_approximation) {
    throw std::invalid_argument(
        "LSTM layers are not rectified; enable the gate approximation");
  }
  if (prunable.size() != static_cast<size_t>(net.num_params())) {
    throw std::invalid_argument("prunable flags do not match the network");
  }
  SaliencyResult result;
  result.path_weight = nn::Vec::Zero(net.spec().out_dim);
  for (const nn::Vec& x : inputs) {
    nn::Tape tape;
    net.Forward(params, x, &tape);
    result.path_weight += ActivationCompanion(net, x, tape);
  }

  const nn::Vec squared = SquaredWeights(net, params);
  nn::Tape tape;
  const nn::Vec h = net.Forward(squared, nn::Vec::Ones(net.spec().input_dim()),
                                &tape, nn::ActivationMode::kIdentity);
  result.objective = result.path_weight.dot(h);
  nn::Vec d_squared = nn::Vec::Zero(net.num_params());
  net.Backward(squared, tape, result.path_weight, d_squared);

  result.scores = nn::Vec::Zero(net.num_params());
  for (int i = 0; i < net.num_params(); ++i) {
    if (prunable[i]) result.scores[i] = squared[i] * d_squared[i];
  }
  return result;
}

PruneMask ExtractMask(const nn::Vec& scores,
                      const std::vector<uint8_t>& prunable, double density) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw std::invalid_argument("density must lie in (0, 1]");
  }
  if (prunable.size() != static_cast<size_t>(scores.size())) {
    throw std::invalid_argument("scores and prunable flags differ in size");
  }
  std::vector<int> candidates;
  for (int i = 0; i < scores.size(); ++i) {
    if (prunable[i]) candidates.push_back(i);
  }
  PruneMask mask;
  mask.bits.assign(scores.size(), 1);
  mask.prunable = static_cast<int>(candidates.size());
  // Guard against density * m landing a hair above an integer.
  const int keep = std::min<int>(
      mask.prunable,
      static_cast<int>(std::ceil(density * mask.prunable - 1e-9)));
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  for (size_t j = keep; j < candidates.size(); ++j) {
    mask.bits[candidates[j]] = 0;
  }
  mask.kept = keep;
  return mask;
}

PruneMask ExtractMask(const nn::Vec& scores, double density) {
  return ExtractMask(scores, std::vector<uint8_t>(scores.size(), 1), density);
}

void TierTable::Validate() const {
  if (densities.size() != tops_breakpoints.size() + 1) {
    throw std::invalid_argument("tier table needs one density per tier");
  }
  for (size_t k = 0; k < tops_breakpoints.size(); ++k) {
    if (!(tops_breakpoints[k] > 0.0) ||
        (k > 0 && !(tops_breakpoints[k] > tops_breakpoints[k - 1]))) {
      throw std::invalid_argument(
          "tier breakpoints must be positive and increasing");
    }
  }
  for (double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) {
      throw std::invalid_argument("tier densities must lie in (0, 1]");
    }
  }
  if (densities.size() == 3) {
    const double lower[] = {0.0, 0.4, 0.8};
    const double upper[] = {0.4, 0.8, 1.0};
    for (int k = 0; k < 3; ++k) {
      if (!(densities[k] > lower[k] && densities[k] <= upper[k])) {
        throw std::invalid_argument(
            "tier density outside its low/medium/high range");
      }
    }
  }
}

double TierDensity(double tops, const TierTable& table) {
  table.Validate();
  if (!(tops > 0.0) || !std::isfinite(tops)) {
    throw std::invalid_argument("compute capability must be positive");
  }
  size_t tier = 0;
  while (tier < table.tops_breakpoints.size() &&
         tops >= table.tops_breakpoints[tier]) {
    ++tier;
  }
  return table.densities[tier];
}

nlohmann::json PruneReport::ToJson() const {
  return nlohmann::json{
      {"agent", agent},
      {"target_density", target_density},
      {"achieved_density", achieved_density},
      {"prunable", prunable},
      {"kept", kept},
      // Bucket 0 counts zero scores; bucket j >= 1 counts scores in
      // [1e(j-13), 1e(j-12)), with the ends open.
      {"score_histogram_log10", score_histogram},
      {"dense_reward", dense_reward},
      {"pruned_reward", pruned_reward},
      {"finetuned_reward", finetuned_reward},
      {"finetune_episodes", finetune_episodes},
      {"mask_checks", mask_checks},
  };
}

nlohmann::json PruneReportsToJson(const std::vector<PruneReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const PruneReport& r : reports) out.push_back(r.ToJson());
  return out;
}

std::vector<PruneReport> PruneAndFinetune(
    StackelbergEnv& env, const std::vector<std::unique_ptr<PpoAgent>>& agents,
    const TrainConfig& train, const PruneConfig& config,
    const std::vector<double>& densities) {
  if (densities.size() != agents.size()) {
    throw std::invalid_argument("one density per agent is required");
  }
  for (double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) {
      throw std::invalid_argument("density must lie in (0, 1]");
    }
  }
  if (!(config.finetune_fraction >= 0.0) || config.eval_episodes <= 0) {
    throw std::invalid_argument("invalid pruning configuration");
  }
  std::vector<AgentPolicy*> policies = AsPolicies(agents);
  const double dense_reward =
      Evaluate(policies, env, config.eval_episodes, config.eval_seed)
          .total_reward;

  // Every dataset is drawn from the dense population. Agents at density one
  // keep an all-ones mask and are not scored.
  std::vector<PruneReport> reports;
  std::vector<PruneMask> masks;
  bool any_pruned = false;
  for (size_t a = 0; a < agents.size(); ++a) {
    const PpoAgent& agent = *agents[a];
    const std::vector<uint8_t> prunable =
        PrunableParameters(agent.actor(), config.mlp_only);
    PruneReport report;
    report.agent = static_cast<int>(a);
    report.target_density = densities[a];
    report.dense_reward = dense_reward;
    PruneMask mask;
    if (densities[a] >= 1.0) {
      mask = ExtractMask(nn::Vec::Zero(agent.actor().num_params()), prunable,
                         1.0);
    } else {
      any_pruned = true;
      const PruneDataset data =
          BuildPruneDataset(env, policies, static_cast<int>(a),
                            config.dataset_size, config.dataset_seed);
      std::vector<nn::Vec> inputs;
      inputs.reserve(data.size());
      for (const Eigen::VectorXd& obs : data.observations) {
        inputs.push_back(agent.NetworkInput(obs));
      }
      const SaliencyResult saliency =
          PxSaliency(agent.actor(), agent.actor_params, inputs, prunable,
                     config.gate_approximation);
      mask = ExtractMask(saliency.scores, prunable, densities[a]);
      report.score_histogram.assign(kHistogramBuckets, 0);
      for (int i = 0; i < saliency.scores.size(); ++i) {
        if (!prunable[i]) continue;
        const double s = saliency.scores[i];
        int bucket = 0;
        if (s > 0.0) {
          bucket =
              std::clamp(static_cast<int>(std::floor(std::log10(s))) + 13, 1,
                         kHistogramBuckets - 1);
        }
        ++report.score_histogram[bucket];
      }
    }
    report.achieved_density = mask.density();
    report.prunable = mask.prunable;
    report.kept = mask.kept;
    reports.push_back(std::move(report));
    masks.push_back(std::move(mask));
  }

  for (size_t a = 0; a < agents.size(); ++a) {
    if (densities[a] < 1.0) agents[a]->SetMask(masks[a].bits);
  }
  const double pruned_reward =
      Evaluate(policies, env, config.eval_episodes, config.eval_seed)
          .total_reward;
  if (!any_pruned) {
    for (PruneReport& r : reports) {
      r.pruned_reward = pruned_reward;
      r.finetuned_reward = pruned_reward;
    }
    return reports;
  }

  // Only the pruned actors adapt; everyone else is held fixed.
  std::vector<PpoAgent*> learners(agents.size(), nullptr);
  for (size_t a = 0; a < agents.size(); ++a) {
    if (densities[a] < 1.0) learners[a] = agents[a].get();
  }
  TrainConfig finetune = train;
  finetune.episodes = static_cast<int>(
      std::lround(config.finetune_fraction * train.episodes));
  // Fresh episodes rather than a replay of the original run.
  finetune.seed = train.seed + static_cast<uint64_t>(train.episodes);
  TrainingReport tuned;
  if (finetune.episodes > 0) {
    tuned = Train(env, policies, learners, finetune);
  }
  const double finetuned_reward =
      Evaluate(policies, env, config.eval_episodes, config.eval_seed)
          .total_reward;
  for (PruneReport& r : reports) {
    r.pruned_reward = pruned_reward;
    r.finetuned_reward = finetuned_reward;
    r.finetune_episodes = finetune.episodes;
    r.mask_checks = tuned.mask_checks;
  }
  return reports;
}

}  // namespace stackmarl

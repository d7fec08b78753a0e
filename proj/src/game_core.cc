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

#include "stackmarl/game_core.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace stackmarl {
namespace {

constexpr double kE = std::numbers::e;

void Require(bool condition, const std::string& message) {
  if (!condition) throw InvalidGameError(message);
}

double ReciprocalSum(const PriceVector& prices) {
  double total = 0.0;
  for (int r = 0; r < prices.size(); ++r) {
    if (!(prices[r] > 0.0)) {
      throw InvalidGameError("pairing weight requires positive prices");
    }
    total += 1.0 / prices[r];
  }
  return total;
}

}  // namespace

void ChannelParams::Validate() const {
  Require(transmit_power > 0.0, "transmit_power must be positive");
  Require(unit_gain > 0.0, "unit_gain must be positive");
  Require(pathloss_exponent > 0.0, "pathloss_exponent must be positive");
  Require(noise_power > 0.0, "noise_power must be positive");
  Require(signal_speed > 0.0, "signal_speed must be positive");
  Require(estimation_iterations >= 1, "estimation_iterations must be >= 1");
}

void TaskSpec::Validate() const {
  Require(data_size >= 0.0, "data_size must be non-negative");
  Require(deadline > 0.0, "deadline must be positive");
  Require(importance > 0.0, "importance must be positive");
}

double TaskSpec::DemandOffset() const { return kE * deadline / importance; }

void RsuConfig::Validate() const {
  Require(base_cost > 0.0, "base_cost must be positive");
  Require(base_cost < max_price, "base_cost must be below max_price");
}

void GameInstance::Validate() const {
  Require(!rsus.empty(), "game needs at least one RSU");
  Require(!avs.empty(), "game needs at least one AV");
  for (const RsuConfig& rsu : rsus) rsu.Validate();
  for (const TaskSpec& av : avs) av.Validate();
  channel.Validate();
  Require(distances.rows() == num_rsus() && distances.cols() == num_avs(),
          "distances must be |rsus| x |avs|");
  Require((distances.array() > 0.0).all(), "distances must be positive");
  Require(marginal_beta > 0.0, "marginal_beta must be positive");
  Require(max_bandwidth > 0.0, "max_bandwidth must be positive");
}

double ChannelLatency(const TaskSpec& task, const ChannelParams& channel) {
  return channel.estimation_iterations * task.data_size / channel.signal_speed;
}

double SignalToNoise(double distance, const ChannelParams& channel) {
  if (!(distance > 0.0)) {
    throw InvalidGameError("distance must be positive");
  }
  return channel.transmit_power * channel.unit_gain *
         std::pow(distance, -channel.pathloss_exponent) / channel.noise_power;
}

double TransferRate(double bandwidth, double distance,
                    const ChannelParams& channel) {
  if (bandwidth < 0.0) throw InvalidGameError("bandwidth must be >= 0");
  const double snr = SignalToNoise(distance, channel);
  if (bandwidth == 0.0) return 0.0;
  return bandwidth * std::log2(1.0 + snr);
}

std::optional<double> TotalLatency(const TaskSpec& task, double bandwidth,
                                   double distance,
                                   const ChannelParams& channel) {
  if (task.data_size == 0.0) return 0.0;
  const double rate = TransferRate(bandwidth, distance, channel);
  if (rate <= 0.0) return std::nullopt;
  return task.data_size / rate + ChannelLatency(task, channel);
}

double PairingWeight(int rsu, const TaskSpec& av, const PriceVector& prices) {
  const double total = ReciprocalSum(prices);
  return av.importance * (1.0 / prices[rsu]) / total;
}

double FollowerUtility(int av, const BandwidthMatrix& bandwidths,
                       const PriceVector& prices, const GameInstance& game) {
  const TaskSpec& task = game.avs[av];
  const double total = ReciprocalSum(prices);
  double utility = 0.0;
  for (int r = 0; r < game.num_rsus(); ++r) {
    const double theta = task.importance * (1.0 / prices[r]) / total;
    const double b = bandwidths(r, av);
    const double revenue =
        std::log(kE + task.importance * b / task.deadline);
    utility += theta * game.marginal_beta * (revenue - prices[r] * b);
  }
  return utility;
}

double FollowerUtilityDerivative(int av, int rsu, double bandwidth,
                                 const PriceVector& prices,
                                 const GameInstance& game) {
  const TaskSpec& task = game.avs[av];
  const double theta = PairingWeight(rsu, task, prices);
  const double slope = task.importance / task.deadline;
  return theta * game.marginal_beta *
         (slope / (kE + slope * bandwidth) - prices[rsu]);
}

double FollowerUtilityCurvature(int av, int rsu, double bandwidth,
                                const PriceVector& prices,
                                const GameInstance& game) {
  const TaskSpec& task = game.avs[av];
  const double theta = PairingWeight(rsu, task, prices);
  const double slope = task.importance / task.deadline;
  const double denom = kE + slope * bandwidth;
  return -theta * game.marginal_beta * slope * slope / (denom * denom);
}

double LeaderUtility(int rsu, const BandwidthMatrix& bandwidths,
                     const PriceVector& prices, const GameInstance& game) {
  const double total = ReciprocalSum(prices);
  const double share = (1.0 / prices[rsu]) / total;
  const double margin = prices[rsu] - game.rsus[rsu].base_cost;
  double utility = 0.0;
  for (int v = 0; v < game.num_avs(); ++v) {
    utility += game.avs[v].importance * share * bandwidths(rsu, v) * margin;
  }
  return utility;
}

double UnconstrainedFollowerDemand(double price, const TaskSpec& av) {
  return 1.0 / price - av.DemandOffset();
}

Eigen::VectorXd FollowerBestResponse(int av, const PriceVector& prices,
                                     const GameInstance& game) {
  const TaskSpec& task = game.avs[av];
  Eigen::VectorXd row(game.num_rsus());
  for (int r = 0; r < game.num_rsus(); ++r) {
    // Buy only when alpha_v >= e p_r T_v, which is exactly demand >= 0.
    const bool buys = task.importance >= kE * prices[r] * task.deadline;
    const double demand =
        buys ? UnconstrainedFollowerDemand(prices[r], task) : 0.0;
    row[r] = std::clamp(demand, 0.0, game.max_bandwidth);
  }
  return row;
}

BandwidthMatrix FollowerBestResponses(const PriceVector& prices,
                                      const GameInstance& game) {
  BandwidthMatrix bandwidths(game.num_rsus(), game.num_avs());
  for (int v = 0; v < game.num_avs(); ++v) {
    bandwidths.col(v) = FollowerBestResponse(v, prices, game);
  }
  return bandwidths;
}

std::optional<double> AggregatedLeaderRoot(int rsu, double others_sum_w,
                                           const GameInstance& game) {
  const double c = game.rsus[rsu].base_cost;
  const double w = others_sum_w;
  double alpha_total = 0.0;
  double weighted_offset = 0.0;
  for (const TaskSpec& task : game.avs) {
    alpha_total += task.importance;
    weighted_offset += task.importance * task.DemandOffset();
  }
  const double z_bar = weighted_offset / alpha_total;
  const double radical =
      std::sqrt(c * c * w * w + c * (z_bar + (1.0 + z_bar * c) * w));
  if (c * w >= radical) return std::nullopt;
  return radical / c - w;
}

double SummedRadicalLeaderRoot(int rsu, double others_sum_w,
                               const GameInstance& game) {
  const double c = game.rsus[rsu].base_cost;
  const double w = others_sum_w;
  double total = 0.0;
  for (const TaskSpec& task : game.avs) {
    const double z = task.DemandOffset();
    total += std::sqrt(c * c * w * w + c * (z + (1.0 + z * c) * w)) / c - w;
  }
  return total;
}

double ClosedFormLeaderPrice(int rsu, double others_sum_w,
                             const GameInstance& game) {
  const RsuConfig& cfg = game.rsus[rsu];
  const std::optional<double> root =
      AggregatedLeaderRoot(rsu, others_sum_w, game);
  if (!root.has_value() || *root <= 0.0) return cfg.max_price;
  return std::clamp(1.0 / *root, cfg.base_cost, cfg.max_price);
}

double InducedLeaderUtility(int rsu, double reciprocal_price,
                            double others_sum_w, const GameInstance& game) {
  const double c = game.rsus[rsu].base_cost;
  const double y = reciprocal_price;
  double utility = 0.0;
  for (const TaskSpec& task : game.avs) {
    const double demand =
        std::clamp(y - task.DemandOffset(), 0.0, game.max_bandwidth);
    utility += task.importance * demand * (1.0 - c * y) / (y + others_sum_w);
  }
  return utility;
}

double SubstitutedLeaderUtility(int rsu, double reciprocal_price,
                                double others_sum_w, const GameInstance& game) {
  const double c = game.rsus[rsu].base_cost;
  const double y = reciprocal_price;
  double utility = 0.0;
  for (const TaskSpec& task : game.avs) {
    utility += task.importance * y / (y + others_sum_w) *
               (y - task.DemandOffset()) * (1.0 / y - c);
  }
  return utility;
}

double LeaderBestResponseForW(int rsu, double others_sum_w,
                              const GameInstance& game) {
  const RsuConfig& cfg = game.rsus[rsu];
  const double c = cfg.base_cost;
  const double w = others_sum_w;
  const double y_lo = 1.0 / cfg.max_price;
  const double y_hi = 1.0 / c;
  const double cap = game.max_bandwidth;

  std::vector<double> knots = {y_lo, y_hi};
  for (const TaskSpec& task : game.avs) {
    for (double knot : {task.DemandOffset(), task.DemandOffset() + cap}) {
      if (knot > y_lo && knot < y_hi) knots.push_back(knot);
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<double> candidates = knots;
  for (size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i];
    const double b = knots[i + 1];
    const double mid = 0.5 * (a + b);
    double active_alpha = 0.0;
    double active_offset = 0.0;
    double capped_alpha = 0.0;
    for (const TaskSpec& task : game.avs) {
      const double demand = mid - task.DemandOffset();
      if (demand >= cap) {
        capped_alpha += task.importance;
      } else if (demand > 0.0) {
        active_alpha += task.importance;
        active_offset += task.importance * task.DemandOffset();
      }
    }
    if (active_alpha <= 0.0) continue;
    // c A y^2 + 2 c W A y - K = 0 on this interval.
    const double k = (c * w + 1.0) * active_offset + w * active_alpha -
                     (c * w + 1.0) * cap * capped_alpha;
    const double disc = w * w + k / (c * active_alpha);
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc) - w;
    if (root > a && root < b) candidates.push_back(root);
  }

  double best_y = y_lo;
  double best_utility = InducedLeaderUtility(rsu, y_lo, w, game);
  for (double y : candidates) {
    const double utility = InducedLeaderUtility(rsu, y, w, game);
    if (utility > best_utility) {
      best_utility = utility;
      best_y = y;
    }
  }
  // Nobody buys at any admissible price: post the ceiling.
  if (best_utility <= 0.0) return cfg.max_price;
  return std::clamp(1.0 / best_y, c, cfg.max_price);
}

double LeaderBestResponse(int rsu, std::span<const double> others_y,
                          const GameInstance& game) {
  double w = 0.0;
  for (double y : others_y) {
    if (y < 0.0) throw InvalidGameError("reciprocal prices must be >= 0");
    w += y;
  }
  return LeaderBestResponseForW(rsu, w, game);
}

std::vector<bool> LatencyFeasibility(const BandwidthMatrix& bandwidths,
                                     const GameInstance& game) {
  std::vector<bool> feasible(game.num_avs(), true);
  for (int v = 0; v < game.num_avs(); ++v) {
    const TaskSpec& task = game.avs[v];
    if (task.data_size == 0.0) continue;
    double total = 0.0;
    bool any_link = false;
    for (int r = 0; r < game.num_rsus(); ++r) {
      if (bandwidths(r, v) <= 0.0) continue;
      any_link = true;
      total += *TotalLatency(task, bandwidths(r, v), game.distances(r, v),
                             game.channel);
    }
    feasible[v] = any_link && total <= task.deadline;
  }
  return feasible;
}

EquilibriumResult SolveEquilibrium(const GameInstance& game,
                                   const SolverOptions& options) {
  game.Validate();
  if (!(options.tolerance > 0.0)) {
    throw InvalidGameError("tolerance must be positive");
  }
  if (options.max_iterations < 1) {
    throw InvalidGameError("max_iterations must be >= 1");
  }
  const int num_rsus = game.num_rsus();
  PriceVector prices(num_rsus);
  for (int r = 0; r < num_rsus; ++r) {
    const RsuConfig& cfg = game.rsus[r];
    prices[r] = options.initial_prices.has_value()
                    ? std::clamp((*options.initial_prices)[r], cfg.base_cost,
                                 cfg.max_price)
                    : 0.5 * (cfg.base_cost + cfg.max_price);
  }
  BandwidthMatrix bandwidths = FollowerBestResponses(prices, game);

  EquilibriumResult result;
  for (int it = 1; it <= options.max_iterations; ++it) {
    PriceVector next(num_rsus);
    for (int r = 0; r < num_rsus; ++r) {
      double w = 0.0;
      for (int l = 0; l < num_rsus; ++l) {
        if (l != r) w += 1.0 / prices[l];
      }
      next[r] = LeaderBestResponseForW(r, w, game);
    }
    next = (1.0 - options.damping) * next + options.damping * prices;
    BandwidthMatrix next_bandwidths = FollowerBestResponses(next, game);
    const double residual =
        std::max((next - prices).cwiseAbs().maxCoeff(),
                 (next_bandwidths - bandwidths).cwiseAbs().maxCoeff());
    prices = std::move(next);
    bandwidths = std::move(next_bandwidths);
    result.iterations = it;
    result.residual = residual;
    if (residual < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.prices = prices;
  result.bandwidths = bandwidths;
  result.latency_feasible = LatencyFeasibility(bandwidths, game);
  for (int r = 0; r < num_rsus; ++r) {
    result.leader_utilities.push_back(
        LeaderUtility(r, bandwidths, prices, game));
  }
  for (int v = 0; v < game.num_avs(); ++v) {
    result.follower_utilities.push_back(
        FollowerUtility(v, bandwidths, prices, game));
  }
  return result;
}

DeviationReport ScanDeviations(const GameInstance& game,
                               const PriceVector& prices,
                               const BandwidthMatrix& bandwidths,
                               int grid_points) {
  DeviationReport report;
  const int n = std::max(grid_points, 2);
  for (int v = 0; v < game.num_avs(); ++v) {
    const double base = FollowerUtility(v, bandwidths, prices, game);
    BandwidthMatrix trial = bandwidths;
    for (int r = 0; r < game.num_rsus(); ++r) {
      for (int i = 0; i < n; ++i) {
        trial(r, v) = game.max_bandwidth * i / (n - 1);
        const double gain = FollowerUtility(v, trial, prices, game) - base;
        if (gain > report.max_follower_gain) {
          report.max_follower_gain = gain;
          report.worst_follower = v;
        }
      }
      trial(r, v) = bandwidths(r, v);
    }
  }
  for (int r = 0; r < game.num_rsus(); ++r) {
    const RsuConfig& cfg = game.rsus[r];
    const double base = LeaderUtility(r, bandwidths, prices, game);
    PriceVector trial = prices;
    for (int i = 0; i < n; ++i) {
      trial[r] = cfg.base_cost + (cfg.max_price - cfg.base_cost) * i / (n - 1);
      const BandwidthMatrix response = FollowerBestResponses(trial, game);
      const double gain = LeaderUtility(r, response, trial, game) - base;
      if (gain > report.max_leader_gain) {
        report.max_leader_gain = gain;
        report.worst_leader = r;
      }
    }
  }
  return report;
}

CertificateReport CertifyStandardFunction(const GameInstance& game,
                                          int samples, uint64_t seed) {
  game.Validate();
  if (samples < 1) throw InvalidGameError("samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_rsu(0, game.num_rsus() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> lambda_dist(1.0, 10.0);

  CertificateReport report;
  report.samples = samples;
  auto note = [&](const std::string& kind, int rsu, double w, double extra) {
    if (report.counterexamples.size() < 20) {
      std::ostringstream out;
      out << kind << ": rsu=" << rsu << " W=" << w << " arg=" << extra;
      report.counterexamples.push_back(out.str());
    }
  };
  for (int s = 0; s < samples; ++s) {
    const int rsu = pick_rsu(rng);
    double w = 0.0;
    for (int l = 0; l < game.num_rsus(); ++l) {
      if (l == rsu) continue;
      const RsuConfig& cfg = game.rsus[l];
      const double y_lo = 1.0 / cfg.max_price;
      const double y_hi = 1.0 / cfg.base_cost;
      w += y_lo + (y_hi - y_lo) * unit(rng);
    }
    const std::optional<double> g = AggregatedLeaderRoot(rsu, w, game);
    if (!g.has_value()) {
      ++report.degenerate;
      continue;
    }
    if (*g > 0.0) {
      ++report.positivity_pass;
    } else {
      ++report.positivity_fail;
      note("positivity", rsu, w, *g);
    }

    const double w_up = w + (1.0 + w) * unit(rng) + 1e-6;
    const std::optional<double> g_up = AggregatedLeaderRoot(rsu, w_up, game);
    if (g_up.has_value() && *g_up >= *g) {
      ++report.monotonicity_pass;
    } else {
      ++report.monotonicity_fail;
      note("monotonicity", rsu, w, w_up);
    }

    // The local scalar here is the proof's scaling factor, unrelated to the
    // marginal-effect parameter of the game.
    const double lambda = lambda_dist(rng);
    const std::optional<double> g_scaled =
        AggregatedLeaderRoot(rsu, lambda * w, game);
    if (g_scaled.has_value() && lambda * *g > *g_scaled) {
      ++report.scalability_pass;
    } else {
      ++report.scalability_fail;
      note("scalability", rsu, w, lambda);
    }
  }
  return report;
}

}  // namespace stackmarl

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

#ifndef STACKMARL_GAME_CORE_H_
#define STACKMARL_GAME_CORE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Economic model of the bandwidth market between roadside units (leaders,
// who post prices) and autonomous vehicles (followers, who buy bandwidth).
//
// Conventions used throughout:
//   R = number of RSUs, V = number of AVs.
//   Prices are an R-vector, bandwidth purchases an R x V matrix whose column v
//   is AV v's strategy.
//   y_r = 1 / p_r is the reciprocal price used by the leader-level analysis.
//   Z_v = e * deadline_v / importance_v is the follower "demand offset": an AV
//   buys 1/p_r - Z_v units from RSU r when that is positive.
namespace stackmarl {

using PriceVector = Eigen::VectorXd;
using BandwidthMatrix = Eigen::MatrixXd;

class InvalidGameError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ChannelParams {
  double transmit_power = 0.5;     // rho, watts
  double unit_gain = 1.0;          // h
  double pathloss_exponent = 2.0;  // epsilon_0
  double noise_power = 1e-4;       // sigma^2, watts
  double signal_speed = 1e9;       // f_signal, operations per second
  int estimation_iterations = 3;   // k

  void Validate() const;
};

// One AV's transmission job.
struct TaskSpec {
  double data_size = 0.0;    // D, bits (same unit family as bandwidth * rate)
  double deadline = 1.0;     // T^max, seconds
  double importance = 1.0;   // alpha

  void Validate() const;
  // Z_v = e * T^max / alpha.
  double DemandOffset() const;
};

struct RsuConfig {
  double base_cost = 0.2;  // c_r
  double max_price = 1.0;  // p^max

  void Validate() const;
};

struct GameInstance {
  std::vector<RsuConfig> rsus;
  std::vector<TaskSpec> avs;
  ChannelParams channel;
  Eigen::MatrixXd distances;  // R x V, meters
  double marginal_beta = 1.0;
  double max_bandwidth = 10.0;

  int num_rsus() const { return static_cast<int>(rsus.size()); }
  int num_avs() const { return static_cast<int>(avs.size()); }

  // Throws InvalidGameError on the first violated invariant.
  void Validate() const;
};

// Latency model -------------------------------------------------------------

// k * D / f_signal.
double ChannelLatency(const TaskSpec& task, const ChannelParams& channel);

// Signal-to-noise ratio rho * h * d^-eps0 / sigma^2.
double SignalToNoise(double distance, const ChannelParams& channel);

// Shannon-form rate b * log2(1 + SNR). Throws for distance <= 0 or negative
// bandwidth.
double TransferRate(double bandwidth, double distance,
                    const ChannelParams& channel);

// D / rate + channel latency. Returns nullopt when the link carries no
// bandwidth while data is pending, i.e. the latency is unbounded.
std::optional<double> TotalLatency(const TaskSpec& task, double bandwidth,
                                   double distance,
                                   const ChannelParams& channel);

// Utilities -----------------------------------------------------------------

// theta_rv = alpha_v * (1/p_r) / sum_l (1/p_l). Throws on a non-positive
// price.
double PairingWeight(int rsu, const TaskSpec& av, const PriceVector& prices);

// Follower revenue-minus-cost utility of AV `av`:
//   sum_r theta_rv * beta * [ln(e + alpha_v b_rv / T_v) - p_r b_rv].
// The pairing weight multiplies the whole bracket so that the derivative is
// the closed form used by FollowerUtilityDerivative.
double FollowerUtility(int av, const BandwidthMatrix& bandwidths,
                       const PriceVector& prices, const GameInstance& game);

// dU^F_v / db_rv.
double FollowerUtilityDerivative(int av, int rsu, double bandwidth,
                                 const PriceVector& prices,
                                 const GameInstance& game);

// d^2 U^F_v / db_rv^2, strictly negative.
double FollowerUtilityCurvature(int av, int rsu, double bandwidth,
                                const PriceVector& prices,
                                const GameInstance& game);

// sum_v theta_rv * (b_rv p_r - b_rv c_r).
double LeaderUtility(int rsu, const BandwidthMatrix& bandwidths,
                     const PriceVector& prices, const GameInstance& game);

// Best responses -----------------------------------------------------------

// Unclamped first-order solution 1/p_r - Z_v.
double UnconstrainedFollowerDemand(double price, const TaskSpec& av);

// Optimal purchase of `av` from each RSU at the given prices: the first-order
// solution when alpha_v >= e p_r T_v, else 0, clamped to [0, max_bandwidth].
Eigen::VectorXd FollowerBestResponse(int av, const PriceVector& prices,
                                     const GameInstance& game);

// All AVs at once; column v is FollowerBestResponse(v, ...).
BandwidthMatrix FollowerBestResponses(const PriceVector& prices,
                                      const GameInstance& game);

// Positive root of the aggregated leader first-order condition
//   sum_v alpha_v [-c y^2 - 2 c W y + Z_v (c W + 1) + W] = 0,
// i.e. y = sqrt(c^2 W^2 + c (Zbar + (1 + Zbar c) W)) / c - W with
// Zbar = sum_v alpha_v Z_v / sum_v alpha_v. Returns nullopt when the
// degenerate branch c W >= sqrt(...) holds.
std::optional<double> AggregatedLeaderRoot(int rsu, double others_sum_w,
                                           const GameInstance& game);

// The per-AV sum of radicals, sum_v [sqrt(c^2 W^2 + c (Z_v + (1 + Z_v c) W))
// / c - W]. Agrees with AggregatedLeaderRoot only for a single AV; reported
// alongside it for comparison.
double SummedRadicalLeaderRoot(int rsu, double others_sum_w,
                               const GameInstance& game);

// Price from the closed-form root: 1 / y clamped to [c_r, p^max]; p^max on
// the degenerate branch.
double ClosedFormLeaderPrice(int rsu, double others_sum_w,
                             const GameInstance& game);

// Leader r's utility at reciprocal price y when every AV best-responds
// (clamped demands) and the other RSUs' reciprocal prices sum to W:
//   sum_v alpha_v * b_v(y) * (1 - c_r y) / (y + W).
// With every demand interior this is the substituted leader utility.
double InducedLeaderUtility(int rsu, double reciprocal_price,
                            double others_sum_w, const GameInstance& game);

// Substituted leader utility without demand clamping:
//   sum_v alpha_v * y / (y + W) * (y - Z_v) * (1/y - c_r).
double SubstitutedLeaderUtility(int rsu, double reciprocal_price,
                                double others_sum_w, const GameInstance& game);

// Exact maximiser of InducedLeaderUtility over p in [c_r, p^max]. On every
// interval where the set of interior/saturated AV demands is fixed the
// first-order condition is a quadratic in y with one positive crossing, so
// the maximum is found among those roots and the interval ends. When no AV
// buys at any admissible price the result is p^max. Equals
// ClosedFormLeaderPrice whenever all demands are interior at the optimum.
double LeaderBestResponse(int rsu, std::span<const double> others_y,
                          const GameInstance& game);
double LeaderBestResponseForW(int rsu, double others_sum_w,
                              const GameInstance& game);

// Equilibrium --------------------------------------------------------------

struct SolverOptions {
  double tolerance = 1e-9;
  int max_iterations = 500;
  // x <- (1 - damping) * BR(x) + damping * x on prices. 0 is undamped.
  double damping = 0.0;
  // Starting prices; defaults to the midpoint of each RSU's price interval.
  std::optional<PriceVector> initial_prices;
};

struct EquilibriumResult {
  PriceVector prices;
  BandwidthMatrix bandwidths;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  // Per AV: whether the summed link latency over RSUs it buys from stays
  // within its deadline. Not enforced by the best responses.
  std::vector<bool> latency_feasible;
  std::vector<double> leader_utilities;
  std::vector<double> follower_utilities;
};

// Simultaneous (Jacobi) best-response dynamics: every RSU best-responds to
// the current reciprocal prices of the others, then every AV best-responds to
// the new prices, until the largest strategy change falls below tolerance.
// Non-convergence is reported through `converged == false` with the last
// residual; it does not throw.
EquilibriumResult SolveEquilibrium(const GameInstance& game,
                                   const SolverOptions& options = {});

// Per-AV latency feasibility of a bandwidth matrix.
std::vector<bool> LatencyFeasibility(const BandwidthMatrix& bandwidths,
                                     const GameInstance& game);

struct DeviationReport {
  double max_leader_gain = 0.0;
  double max_follower_gain = 0.0;
  int worst_leader = -1;
  int worst_follower = -1;
};

// Scans unilateral deviations on a uniform grid. Followers deviate one
// purchase b_rv over [0, max_bandwidth] with everything else fixed; leaders
// deviate their price over [c_r, p^max] with the AVs re-optimising (the
// leader commits first).
DeviationReport ScanDeviations(const GameInstance& game,
                               const PriceVector& prices,
                               const BandwidthMatrix& bandwidths,
                               int grid_points);

// Standard-function certificate ---------------------------------------------

struct CertificateReport {
  int samples = 0;
  int degenerate = 0;
  int positivity_pass = 0;
  int positivity_fail = 0;
  int monotonicity_pass = 0;
  int monotonicity_fail = 0;
  int scalability_pass = 0;
  int scalability_fail = 0;
  std::vector<std::string> counterexamples;

  bool passed() const {
    return positivity_fail == 0 && monotonicity_fail == 0 &&
           scalability_fail == 0;
  }
};

// Samples random RSUs, random reciprocal-price profiles of the other RSUs and
// random lambda > 1, and checks on the leader response G(W) (the aggregated
// root): G > 0 on the non-degenerate branch, G(W') >= G(W) for W' > W and
// lambda G(Y) > G(lambda Y).
CertificateReport CertifyStandardFunction(const GameInstance& game,
                                          int samples, uint64_t seed);

}  // namespace stackmarl

#endif  // STACKMARL_GAME_CORE_H_

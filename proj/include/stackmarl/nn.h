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

#ifndef STACKMARL_NN_H_
#define STACKMARL_NN_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Small neural substrate for the policy and value networks: dense layers, a
// bidirectional LSTM over the observation window, a squashed Gaussian policy
// head, hand-written reverse-mode gradients and Adam.
//
// All parameters of a network live in one flat vector. ParamLayout records
// where each matrix sits; matrices are stored row-major.
namespace stackmarl::nn {

using Vec = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParamRole { kWeight, kBias, kLogStd };

// Which block a parameter belongs to; pruning can be restricted to the
// dense layers.
enum class ParamBlock { kLstm, kMlp, kHead };

struct LayerDescriptor {
  std::string name;
  int rows = 0;
  int cols = 0;
  size_t offset = 0;
  ParamRole role = ParamRole::kWeight;
  ParamBlock block = ParamBlock::kMlp;

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

class ParamLayout {
 public:
  size_t Add(std::string name, int rows, int cols, ParamRole role,
             ParamBlock block);
  const std::vector<LayerDescriptor>& entries() const { return entries_; }
  const LayerDescriptor& Find(const std::string& name) const;
  size_t size() const { return size_; }

 private:
  std::vector<LayerDescriptor> entries_;
  size_t size_ = 0;
};

// Parameter values together with their layout.
struct ParamVector {
  Vec values;
  ParamLayout layout;
};

enum class NetKind { kBiLstmActor, kMlpActor, kMlpCritic };

// Nonlinearity set used by a forward pass. kIdentity replaces every
// activation (gates, candidate, cell output, ReLU) by the identity; pruning
// evaluates the squared-weight companion network this way.
enum class ActivationMode { kStandard, kIdentity };

// Flat input layout: seq_len steps of step_dim values (oldest first)
// followed by extra_dim values that bypass the recurrent block.
struct NetSpec {
  NetKind kind = NetKind::kBiLstmActor;
  int seq_len = 1;
  int step_dim = 1;
  int extra_dim = 0;
  int hidden_dim = 32;
  std::vector<int> mlp_widths = {64, 64};
  int out_dim = 1;

  int input_dim() const { return seq_len * step_dim + extra_dim; }
  void Validate() const;
};

struct LstmStep {
  Vec x, h_prev, c_prev, i, f, g, o, c, cell_out, h;
};

struct LstmTrace {
  std::vector<LstmStep> steps;
};

struct MlpTrace {
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each layer
};

// Everything a backward pass needs from the matching forward pass.
struct Tape {
  ActivationMode mode = ActivationMode::kStandard;
  LstmTrace forward_chain;
  LstmTrace backward_chain;
  MlpTrace mlp;
  Vec output;
};

// Weights of one LSTM chain. Gate blocks are stacked [input, forget,
// candidate, output] along the rows.
struct LstmWeights {
  ConstMatrixMap w;  // 4H x in
  ConstMatrixMap u;  // 4H x H
  Eigen::Map<const Vec> b;
};

// Runs one LSTM chain over the sequence from zero state, in the order given.
std::vector<Vec> LstmForward(const LstmWeights& weights,
                             const std::vector<Vec>& sequence,
                             ActivationMode mode, LstmTrace* trace);

// Backpropagates through a chain. d_hidden[t] is dL/dh_t from outside the
// chain (an empty vector means zero). Gradients are accumulated into the
// maps; dL/dx_t goes to d_inputs when it is non-null.
void LstmBackward(const LstmWeights& weights, const LstmTrace& trace,
                  ActivationMode mode, const std::vector<Vec>& d_hidden,
                  MatrixMap dw, MatrixMap du, Eigen::Map<Vec> db,
                  std::vector<Vec>* d_inputs);

class Network {
 public:
  explicit Network(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  int num_params() const { return static_cast<int>(layout_.size()); }

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases except the forget gates
  // (+1), log-std set to init_log_std.
  Vec Initialize(uint64_t seed, double init_log_std = -0.5) const;

  // Action means for actors, a 1-vector for critics.
  Vec Forward(const Vec& params, const Vec& input, Tape* tape = nullptr,
              ActivationMode mode = ActivationMode::kStandard) const;

  // Accumulates dL/dparams given dL/doutput into grad.
  void Backward(const Vec& params, const Tape& tape, const Vec& d_output,
                Vec& grad) const;

  // Per-step [h_fwd_t || h_bwd_t] of the recurrent block (BiLSTM actors).
  std::vector<Vec> BiLstmOutputs(const Vec& params, const Vec& input) const;

  std::vector<Vec> SequenceOf(const Vec& input) const;

  bool has_log_std() const { return spec_.kind != NetKind::kMlpCritic; }
  Vec LogStd(const Vec& params) const;
  size_t log_std_offset() const;

  LstmWeights ChainWeights(const Vec& params, bool forward_chain) const;
  int mlp_layers() const { return static_cast<int>(mlp_entries_.size()); }
  const LayerDescriptor& mlp_weight(int layer) const;
  const LayerDescriptor& mlp_bias(int layer) const;

 private:
  Vec MlpForward(const Vec& params, const Vec& input, ActivationMode mode,
                 MlpTrace* trace) const;

  NetSpec spec_;
  ParamLayout layout_;
  std::vector<std::pair<size_t, size_t>> mlp_entries_;  // (weight, bias)
};

// Squashed Gaussian policy head ---------------------------------------------

struct ActionBounds {
  Vec lower;
  Vec upper;
};

struct SampledAction {
  Vec raw;     // pre-squash Gaussian sample
  Vec action;  // squashed into the bounds
  double log_prob = 0.0;
};

// lower + (upper - lower) * logistic(raw).
Vec Squash(const Vec& raw, const ActionBounds& bounds);
// Inverse of Squash for interior actions.
Vec Unsquash(const Vec& action, const ActionBounds& bounds);

SampledAction SampleAction(const Vec& mean, const Vec& log_std,
                           const ActionBounds& bounds, std::mt19937_64& rng);

// Log-density of the squashed action, including the change-of-variables
// term -log((upper - lower) s (1 - s)).
double LogProb(const Vec& raw, const Vec& mean, const Vec& log_std,
               const ActionBounds& bounds);

// Gradients of LogProb with respect to mean and log_std.
void LogProbGradient(const Vec& raw, const Vec& mean, const Vec& log_std,
                     Vec& d_mean, Vec& d_log_std);

// Entropy of the pre-squash Gaussian.
double GaussianEntropy(const Vec& log_std);

// Adam ------------------------------------------------------------------------

inline constexpr double kActorLearningRate = 3e-4;
inline constexpr double kCriticLearningRate = 1e-3;

struct AdamOptions {
  double learning_rate = kActorLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  int64_t step = 0;
};

AdamState MakeAdamState(int num_params);

// Bias-corrected Adam update. Throws NnError on non-finite gradients or a
// shape mismatch.
void AdamStep(Vec& params, const Vec& grads, AdamState& state,
              const AdamOptions& options);

// Scales grads down so that its Euclidean norm is at most max_norm. Returns
// the norm before clipping.
double ClipGradientNorm(Vec& grads, double max_norm);

bool AllFinite(const Vec& values);

}  // namespace stackmarl::nn

#endif  // STACKMARL_NN_H_

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

#include "stackmarl/nn.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stackmarl::nn {
namespace {

double Logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

ConstMatrixMap MapMatrix(const Vec& params, const LayerDescriptor& d) {
  return ConstMatrixMap(params.data() + d.offset, d.rows, d.cols);
}

MatrixMap MapMatrix(Vec& params, const LayerDescriptor& d) {
  return MatrixMap(params.data() + d.offset, d.rows, d.cols);
}

Eigen::Map<const Vec> MapVector(const Vec& params, const LayerDescriptor& d) {
  return Eigen::Map<const Vec>(params.data() + d.offset, d.size());
}

Eigen::Map<Vec> MapVector(Vec& params, const LayerDescriptor& d) {
  return Eigen::Map<Vec>(params.data() + d.offset, d.size());
}

}  // namespace

size_t ParamLayout::Add(std::string name, int rows, int cols, ParamRole role,
                        ParamBlock block) {
  LayerDescriptor d;
  d.name = std::move(name);
  d.rows = rows;
  d.cols = cols;
  d.offset = size_;
  d.role = role;
  d.block = block;
  size_ += d.size();
  entries_.push_back(std::move(d));
  return entries_.size() - 1;
}

const LayerDescriptor& ParamLayout::Find(const std::string& name) const {
  for (const LayerDescriptor& d : entries_) {
    if (d.name == name) return d;
  }
  throw NnError("no parameter block named " + name);
}

void NetSpec::Validate() const {
  if (seq_len < 1 || step_dim < 1 || extra_dim < 0 || hidden_dim < 1 ||
      out_dim < 1) {
    throw NnError("network dimensions must be >= 1");
  }
  for (int w : mlp_widths) {
    if (w < 1) throw NnError("MLP widths must be >= 1");
  }
  if (kind == NetKind::kMlpCritic && out_dim != 1) {
    throw NnError("critics have a single output");
  }
}

std::vector<Vec> LstmForward(const LstmWeights& weights,
                             const std::vector<Vec>& sequence,
                             ActivationMode mode, LstmTrace* trace) {
  const int hidden = static_cast<int>(weights.u.cols());
  Vec h = Vec::Zero(hidden);
  Vec c = Vec::Zero(hidden);
  Vec z(4 * hidden);
  std::vector<Vec> outputs;
  outputs.reserve(sequence.size());
  if (trace != nullptr) trace->steps.assign(sequence.size(), {});
  const bool standard = mode == ActivationMode::kStandard;
  for (size_t t = 0; t < sequence.size(); ++t) {
    const Vec& x = sequence[t];
    if (x.size() != weights.w.cols()) {
      throw NnError("LSTM input dimension mismatch");
    }
    z.noalias() = weights.w * x;
    z.noalias() += weights.u * h;
    z += weights.b;
    Vec i = z.segment(0, hidden);
    Vec f = z.segment(hidden, hidden);
    Vec g = z.segment(2 * hidden, hidden);
    Vec o = z.segment(3 * hidden, hidden);
    if (standard) {
      i = i.unaryExpr(&Logistic);
      f = f.unaryExpr(&Logistic);
      g = g.array().tanh();
      o = o.unaryExpr(&Logistic);
    }
    Vec c_next = f.cwiseProduct(c) + i.cwiseProduct(g);
    Vec cell_out = standard ? Vec(c_next.array().tanh()) : c_next;
    Vec h_next = o.cwiseProduct(cell_out);
    if (trace != nullptr) {
      LstmStep& step = trace->steps[t];
      step.x = x;
      step.h_prev = h;
      step.c_prev = c;
      step.i = std::move(i);
      step.f = std::move(f);
      step.g = std::move(g);
      step.o = std::move(o);
      step.c = c_next;
      step.cell_out = std::move(cell_out);
      step.h = h_next;
    }
    h = std::move(h_next);
    c = std::move(c_next);
    outputs.push_back(h);
  }
  return outputs;
}

void LstmBackward(const LstmWeights& weights, const LstmTrace& trace,
                  ActivationMode mode, const std::vector<Vec>& d_hidden,
                  MatrixMap dw, MatrixMap du, Eigen::Map<Vec> db,
                  std::vector<Vec>* d_inputs) {
  const int hidden = static_cast<int>(weights.u.cols());
  const int steps = static_cast<int>(trace.steps.size());
  const bool standard = mode == ActivationMode::kStandard;
  Vec dh_next = Vec::Zero(hidden);
  Vec dc_next = Vec::Zero(hidden);
  Vec dz(4 * hidden);
  if (d_inputs != nullptr) d_inputs->assign(steps, Vec());
  for (int t = steps - 1; t >= 0; --t) {
    const LstmStep& s = trace.steps[t];
    Vec dh = dh_next;
    if (t < static_cast<int>(d_hidden.size()) && d_hidden[t].size() > 0) {
      dh += d_hidden[t];
    }
    Vec d_o = dh.cwiseProduct(s.cell_out);
    Vec dc = dc_next;
    if (standard) {
      dc.array() += dh.array() * s.o.array() *
                    (1.0 - s.cell_out.array().square());
    } else {
      dc += dh.cwiseProduct(s.o);
    }
    Vec d_i = dc.cwiseProduct(s.g);
    Vec d_g = dc.cwiseProduct(s.i);
    Vec d_f = dc.cwiseProduct(s.c_prev);
    dc_next = dc.cwiseProduct(s.f);
    if (standard) {
      d_i.array() *= s.i.array() * (1.0 - s.i.array());
      d_f.array() *= s.f.array() * (1.0 - s.f.array());
      d_g.array() *= 1.0 - s.g.array().square();
      d_o.array() *= s.o.array() * (1.0 - s.o.array());
    }
    dz << d_i, d_f, d_g, d_o;
    dw.noalias() += dz * s.x.transpose();
    du.noalias() += dz * s.h_prev.transpose();
    db += dz;
    dh_next.noalias() = weights.u.transpose() * dz;
    if (d_inputs != nullptr) {
      (*d_inputs)[t] = weights.w.transpose() * dz;
    }
  }
}

Network::Network(NetSpec spec) : spec_(std::move(spec)) {
  spec_.Validate();
  int mlp_in = spec_.input_dim();
  if (spec_.kind == NetKind::kBiLstmActor) {
    const int h = spec_.hidden_dim;
    for (const char* chain : {"lstm_fwd", "lstm_bwd"}) {
      const std::string prefix = chain;
      layout_.Add(prefix + ".w", 4 * h, spec_.step_dim, ParamRole::kWeight,
                  ParamBlock::kLstm);
      layout_.Add(prefix + ".u", 4 * h, h, ParamRole::kWeight,
                  ParamBlock::kLstm);
      layout_.Add(prefix + ".b", 4 * h, 1, ParamRole::kBias,
                  ParamBlock::kLstm);
    }
    mlp_in = 2 * h + spec_.extra_dim;
  }
  int width = mlp_in;
  for (size_t l = 0; l < spec_.mlp_widths.size(); ++l) {
    const std::string prefix = "mlp." + std::to_string(l);
    const size_t w = layout_.Add(prefix + ".w", spec_.mlp_widths[l], width,
                                 ParamRole::kWeight, ParamBlock::kMlp);
    const size_t b = layout_.Add(prefix + ".b", spec_.mlp_widths[l], 1,
                                 ParamRole::kBias, ParamBlock::kMlp);
    mlp_entries_.emplace_back(w, b);
    width = spec_.mlp_widths[l];
  }
  const size_t hw = layout_.Add("head.w", spec_.out_dim, width,
                                ParamRole::kWeight, ParamBlock::kHead);
  const size_t hb = layout_.Add("head.b", spec_.out_dim, 1, ParamRole::kBias,
                                ParamBlock::kHead);
  mlp_entries_.emplace_back(hw, hb);
  if (has_log_std()) {
    layout_.Add("log_std", spec_.out_dim, 1, ParamRole::kLogStd,
                ParamBlock::kHead);
  }
}

Vec Network::Initialize(uint64_t seed, double init_log_std) const {
  std::mt19937_64 rng(seed);
  Vec params = Vec::Zero(num_params());
  for (const LayerDescriptor& d : layout_.entries()) {
    auto block = MapVector(params, d);
    switch (d.role) {
      case ParamRole::kWeight: {
        const double limit = 1.0 / std::sqrt(static_cast<double>(d.cols));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < block.size(); ++i) block[i] = dist(rng);
        break;
      }
      case ParamRole::kBias:
        block.setZero();
        if (d.block == ParamBlock::kLstm) {
          const int h = d.rows / 4;
          block.segment(h, h).setOnes();
        }
        break;
      case ParamRole::kLogStd:
        block.setConstant(init_log_std);
        break;
    }
  }
  return params;
}

std::vector<Vec> Network::SequenceOf(const Vec& input) const {
  std::vector<Vec> sequence;
  sequence.reserve(spec_.seq_len);
  for (int t = 0; t < spec_.seq_len; ++t) {
    sequence.push_back(input.segment(t * spec_.step_dim, spec_.step_dim));
  }
  return sequence;
}

LstmWeights Network::ChainWeights(const Vec& params, bool forward_chain) const {
  const std::string prefix = forward_chain ? "lstm_fwd" : "lstm_bwd";
  return LstmWeights{MapMatrix(params, layout_.Find(prefix + ".w")),
                     MapMatrix(params, layout_.Find(prefix + ".u")),
                     MapVector(params, layout_.Find(prefix + ".b"))};
}

const LayerDescriptor& Network::mlp_weight(int layer) const {
  return layout_.entries()[mlp_entries_.at(layer).first];
}

const LayerDescriptor& Network::mlp_bias(int layer) const {
  return layout_.entries()[mlp_entries_.at(layer).second];
}

Vec Network::MlpForward(const Vec& params, const Vec& input,
                        ActivationMode mode, MlpTrace* trace) const {
  if (trace != nullptr) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Vec activation = input;
  const int layers = mlp_layers();
  for (int l = 0; l < layers; ++l) {
    const ConstMatrixMap w = MapMatrix(params, mlp_weight(l));
    Vec pre = w * activation + MapVector(params, mlp_bias(l));
    if (trace != nullptr) {
      trace->inputs.push_back(activation);
      trace->pre.push_back(pre);
    }
    const bool hidden = l + 1 < layers;
    if (hidden && mode == ActivationMode::kStandard) {
      activation = pre.cwiseMax(0.0);
    } else {
      activation = std::move(pre);
    }
  }
  return activation;
}

Vec Network::Forward(const Vec& params, const Vec& input, Tape* tape,
                     ActivationMode mode) const {
  if (params.size() != num_params()) {
    throw NnError("parameter vector has the wrong size");
  }
  if (input.size() != spec_.input_dim()) {
    throw NnError("input dimension mismatch: expected " +
                  std::to_string(spec_.input_dim()) + ", got " +
                  std::to_string(input.size()));
  }
  if (tape != nullptr) tape->mode = mode;
  Vec mlp_input;
  if (spec_.kind == NetKind::kBiLstmActor) {
    std::vector<Vec> sequence = SequenceOf(input);
    const std::vector<Vec> fwd =
        LstmForward(ChainWeights(params, true), sequence, mode,
                    tape ? &tape->forward_chain : nullptr);
    std::reverse(sequence.begin(), sequence.end());
    const std::vector<Vec> bwd =
        LstmForward(ChainWeights(params, false), sequence, mode,
                    tape ? &tape->backward_chain : nullptr);
    const int h = spec_.hidden_dim;
    mlp_input.resize(2 * h + spec_.extra_dim);
    mlp_input << fwd.back(), bwd.back(),
        input.tail(spec_.extra_dim);
  } else {
    mlp_input = input;
  }
  Vec out = MlpForward(params, mlp_input, mode, tape ? &tape->mlp : nullptr);
  if (tape != nullptr) tape->output = out;
  return out;
}

void Network::Backward(const Vec& params, const Tape& tape, const Vec& d_output,
                       Vec& grad) const {
  if (grad.size() != num_params()) {
    throw NnError("gradient vector has the wrong size");
  }
  Vec d = d_output;
  for (int l = mlp_layers() - 1; l >= 0; --l) {
    const Vec& pre = tape.mlp.pre[l];
    const bool hidden = l + 1 < mlp_layers();
    Vec d_pre = d;
    if (hidden && tape.mode == ActivationMode::kStandard) {
      d_pre = (pre.array() > 0.0).select(d, 0.0);
    }
    MapMatrix(grad, mlp_weight(l)).noalias() +=
        d_pre * tape.mlp.inputs[l].transpose();
    MapVector(grad, mlp_bias(l)) += d_pre;
    d = MapMatrix(params, mlp_weight(l)).transpose() * d_pre;
  }
  if (spec_.kind != NetKind::kBiLstmActor) return;

  const int h = spec_.hidden_dim;
  for (bool forward_chain : {true, false}) {
    const LstmTrace& trace =
        forward_chain ? tape.forward_chain : tape.backward_chain;
    std::vector<Vec> d_hidden(trace.steps.size());
    d_hidden.back() = d.segment(forward_chain ? 0 : h, h);
    const std::string prefix = forward_chain ? "lstm_fwd" : "lstm_bwd";
    LstmBackward(ChainWeights(params, forward_chain), trace, tape.mode,
                 d_hidden, MapMatrix(grad, layout_.Find(prefix + ".w")),
                 MapMatrix(grad, layout_.Find(prefix + ".u")),
                 MapVector(grad, layout_.Find(prefix + ".b")), nullptr);
  }
}

std::vector<Vec> Network::BiLstmOutputs(const Vec& params,
                                        const Vec& input) const {
  if (spec_.kind != NetKind::kBiLstmActor) {
    throw NnError("network has no recurrent block");
  }
  if (input.size() != spec_.input_dim()) {
    throw NnError("input dimension mismatch");
  }
  std::vector<Vec> sequence = SequenceOf(input);
  const std::vector<Vec> fwd = LstmForward(
      ChainWeights(params, true), sequence, ActivationMode::kStandard, nullptr);
  std::reverse(sequence.begin(), sequence.end());
  const std::vector<Vec> bwd =
      LstmForward(ChainWeights(params, false), sequence,
                  ActivationMode::kStandard, nullptr);
  const int steps = spec_.seq_len;
  const int h = spec_.hidden_dim;
  std::vector<Vec> outputs;
  for (int t = 0; t < steps; ++t) {
    Vec joined(2 * h);
    joined << fwd[t], bwd[steps - 1 - t];
    outputs.push_back(std::move(joined));
  }
  return outputs;
}

size_t Network::log_std_offset() const {
  return layout_.Find("log_std").offset;
}

Vec Network::LogStd(const Vec& params) const {
  return params.segment(log_std_offset(), spec_.out_dim);
}

Vec Squash(const Vec& raw, const ActionBounds& bounds) {
  Vec out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    out[i] = bounds.lower[i] +
             (bounds.upper[i] - bounds.lower[i]) * Logistic(raw[i]);
  }
  return out;
}

Vec Unsquash(const Vec& action, const ActionBounds& bounds) {
  Vec raw(action.size());
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    double s = (action[i] - bounds.lower[i]) /
               (bounds.upper[i] - bounds.lower[i]);
    s = std::clamp(s, 1e-12, 1.0 - 1e-12);
    raw[i] = std::log(s) - std::log1p(-s);
  }
  return raw;
}

SampledAction SampleAction(const Vec& mean, const Vec& log_std,
                           const ActionBounds& bounds, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SampledAction sample;
  sample.raw.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    sample.raw[i] = mean[i] + std::exp(log_std[i]) * normal(rng);
  }
  sample.action = Squash(sample.raw, bounds);
  sample.log_prob = LogProb(sample.raw, mean, log_std, bounds);
  return sample;
}

double LogProb(const Vec& raw, const Vec& mean, const Vec& log_std,
               const ActionBounds& bounds) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double total = 0.0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double z = (raw[i] - mean[i]) * std::exp(-log_std[i]);
    total += -0.5 * z * z - log_std[i] - kHalfLog2Pi;
    // log((hi - lo) s (1 - s)) = log(hi - lo) - softplus(-u) - softplus(u).
    total -= std::log(bounds.upper[i] - bounds.lower[i]) -
             Softplus(-raw[i]) - Softplus(raw[i]);
  }
  return total;
}

void LogProbGradient(const Vec& raw, const Vec& mean, const Vec& log_std,
                     Vec& d_mean, Vec& d_log_std) {
  d_mean.resize(raw.size());
  d_log_std.resize(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double inv_var = std::exp(-2.0 * log_std[i]);
    const double diff = raw[i] - mean[i];
    d_mean[i] = diff * inv_var;
    d_log_std[i] = diff * diff * inv_var - 1.0;
  }
}

double GaussianEntropy(const Vec& log_std) {
  constexpr double kHalfLog2PiE = 1.41893853320467274178;
  return log_std.sum() + kHalfLog2PiE * static_cast<double>(log_std.size());
}

AdamState MakeAdamState(int num_params) {
  return AdamState{Vec::Zero(num_params), Vec::Zero(num_params), 0};
}

bool AllFinite(const Vec& values) { return values.allFinite(); }

void AdamStep(Vec& params, const Vec& grads, AdamState& state,
              const AdamOptions& options) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw NnError("Adam shape mismatch");
  }
  if (!grads.allFinite()) throw NnError("non-finite gradient");
  ++state.step;
  state.m = options.beta1 * state.m + (1.0 - options.beta1) * grads;
  state.v = options.beta2 * state.v +
            (1.0 - options.beta2) * grads.cwiseProduct(grads);
  const double m_correction =
      1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double v_correction =
      1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  params.array() -= options.learning_rate * (state.m.array() / m_correction) /
                    ((state.v.array() / v_correction).sqrt() + options.epsilon);
}

double ClipGradientNorm(Vec& grads, double max_norm) {
  const double norm = grads.norm();
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

}  // namespace stackmarl::nn

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

#include "stackmarl/harness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "stackmarl/baselines.h"
#include "stackmarl/checkpoint.h"

namespace stackmarl {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& KnownKeys() {
  static const auto* keys = new std::map<std::string, std::set<std::string>>{
      {"game",
       {"num_rsus", "num_avs", "sampler_seed", "marginal_beta",
        "max_bandwidth"}},
      {"channel",
       {"transmit_power", "unit_gain", "pathloss_exponent", "noise_power",
        "signal_speed", "estimation_iterations"}},
      {"solver", {"tolerance", "max_iterations", "damping"}},
      {"env",
       {"history_window", "episode_length", "seed", "reward_scale",
        "resample_tasks"}},
      {"train",
       {"clip_eps", "discount_gamma", "gae_lambda", "batch_size",
        "epochs_per_batch", "minibatch_size", "episodes", "entropy_coef",
        "actor_learning_rate", "critic_learning_rate", "leader_lr_scale",
        "max_grad_norm", "normalize_advantages", "divergence_threshold",
        "seed"}},
      {"nn", {"architecture", "hidden_dim", "mlp_widths", "init_log_std"}},
      {"prune",
       {"dataset_size", "dataset_seed", "mlp_only", "gate_approximation",
        "finetune_fraction", "eval_episodes", "eval_seed", "tops_breakpoints",
        "tier_densities"}},
      {"experiment",
       {"name", "kind", "seeds", "rsu_counts", "av_counts", "densities",
        "tail_episodes", "eval_episodes"}},
  };
  return *keys;
}

void CheckKeys(const pt::ptree& tree) {
  const auto& known = KnownKeys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) {
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      }
    }
  }
}

template <typename T>
void Read(const pt::ptree& tree, const std::string& path, T& target) {
  const auto node = tree.get_child_optional(path);
  if (!node) return;
  try {
    target = node->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    throw ConfigError("bad value for " + path + ": '" + node->data() + "'");
  }
}

// Booleans accept true/false, yes/no, on/off and 1/0.
void ReadBool(const pt::ptree& tree, const std::string& path, bool& target) {
  const auto node = tree.get_child_optional(path);
  if (!node) return;
  const std::string v = boost::algorithm::to_lower_copy(
      boost::algorithm::trim_copy(node->data()));
  if (v == "true" || v == "yes" || v == "on" || v == "1") {
    target = true;
  } else if (v == "false" || v == "no" || v == "off" || v == "0") {
    target = false;
  } else {
    throw ConfigError("bad boolean for " + path + ": '" + node->data() + "'");
  }
}

template <typename T>
std::vector<T> ParseList(const std::string& text, const std::string& path) {
  std::vector<T> out;
  std::vector<std::string> parts;
  const std::string trimmed = boost::algorithm::trim_copy(text);
  if (trimmed.empty()) return out;
  boost::algorithm::split(parts, trimmed, boost::algorithm::is_any_of(","));
  for (std::string& part : parts) {
    boost::algorithm::trim(part);
    std::istringstream in(part);
    T value;
    if (!(in >> value) || !in.eof()) {
      throw ConfigError("bad list entry for " + path + ": '" + part + "'");
    }
    out.push_back(value);
  }
  return out;
}

template <typename T>
void ReadList(const pt::ptree& tree, const std::string& path,
              std::vector<T>& target) {
  const auto node = tree.get_child_optional(path);
  if (node) target = ParseList<T>(node->data(), path);
}

RunConfig RunConfigFromTree(const pt::ptree& tree) {
  RunConfig c;
  Read(tree, "game.num_rsus", c.num_rsus);
  Read(tree, "game.num_avs", c.num_avs);
  if (tree.get_child_optional("game.sampler_seed")) {
    uint64_t seed = 0;
    Read(tree, "game.sampler_seed", seed);
    c.sampler_seed = seed;
  }
  if (tree.get_child_optional("game.marginal_beta")) {
    double v = 0.0;
    Read(tree, "game.marginal_beta", v);
    c.marginal_beta = v;
  }
  if (tree.get_child_optional("game.max_bandwidth")) {
    double v = 0.0;
    Read(tree, "game.max_bandwidth", v);
    c.max_bandwidth = v;
  }
  if (tree.get_child_optional("channel")) {
    ChannelParams ch;
    Read(tree, "channel.transmit_power", ch.transmit_power);
    Read(tree, "channel.unit_gain", ch.unit_gain);
    Read(tree, "channel.pathloss_exponent", ch.pathloss_exponent);
    Read(tree, "channel.noise_power", ch.noise_power);
    Read(tree, "channel.signal_speed", ch.signal_speed);
    Read(tree, "channel.estimation_iterations", ch.estimation_iterations);
    c.channel = ch;
  }
  Read(tree, "solver.tolerance", c.solver.tolerance);
  Read(tree, "solver.max_iterations", c.solver.max_iterations);
  Read(tree, "solver.damping", c.solver.damping);

  Read(tree, "env.history_window", c.env.history_window);
  Read(tree, "env.episode_length", c.env.episode_length);
  Read(tree, "env.seed", c.env.seed);
  Read(tree, "env.reward_scale", c.env.reward_scale);
  ReadBool(tree, "env.resample_tasks", c.env.resample_tasks);

  TrainConfig& t = c.train;
  Read(tree, "train.clip_eps", t.clip_eps);
  Read(tree, "train.discount_gamma", t.discount_gamma);
  Read(tree, "train.gae_lambda", t.gae_lambda);
  Read(tree, "train.batch_size", t.batch_size);
  Read(tree, "train.epochs_per_batch", t.epochs_per_batch);
  Read(tree, "train.minibatch_size", t.minibatch_size);
  Read(tree, "train.episodes", t.episodes);
  Read(tree, "train.entropy_coef", t.entropy_coef);
  Read(tree, "train.actor_learning_rate", t.actor_learning_rate);
  Read(tree, "train.critic_learning_rate", t.critic_learning_rate);
  Read(tree, "train.leader_lr_scale", t.leader_lr_scale);
  Read(tree, "train.max_grad_norm", t.max_grad_norm);
  ReadBool(tree, "train.normalize_advantages", t.normalize_advantages);
  Read(tree, "train.divergence_threshold", t.divergence_threshold);
  Read(tree, "train.seed", t.seed);

  if (const auto arch = tree.get_optional<std::string>("nn.architecture")) {
    c.architecture = ParseArchitecture(*arch);
  }
  Read(tree, "nn.hidden_dim", c.net.hidden_dim);
  ReadList(tree, "nn.mlp_widths", c.net.mlp_widths);
  Read(tree, "nn.init_log_std", c.net.init_log_std);

  PruneConfig& p = c.prune;
  Read(tree, "prune.dataset_size", p.dataset_size);
  Read(tree, "prune.dataset_seed", p.dataset_seed);
  ReadBool(tree, "prune.mlp_only", p.mlp_only);
  ReadBool(tree, "prune.gate_approximation", p.gate_approximation);
  Read(tree, "prune.finetune_fraction", p.finetune_fraction);
  Read(tree, "prune.eval_episodes", p.eval_episodes);
  Read(tree, "prune.eval_seed", p.eval_seed);
  ReadList(tree, "prune.tops_breakpoints", c.tiers.tops_breakpoints);
  ReadList(tree, "prune.tier_densities", c.tiers.densities);

  try {
    c.env.Validate();
    c.train.Validate();
    c.tiers.Validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.num_rsus < 1 || c.num_avs < 1 || c.net.hidden_dim < 1 ||
      c.prune.dataset_size < 1 || c.prune.eval_episodes < 1) {
    throw ConfigError("sizes in the configuration must be positive");
  }
  return c;
}

pt::ptree ParseIni(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  CheckKeys(tree);
  return tree;
}

std::ifstream OpenInput(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

std::string Num(double v) { return fmt::format("{:.17g}", v); }

template <typename T>
std::string JoinList(const std::vector<T>& values) {
  std::vector<std::string> parts;
  for (const T& v : values) {
    if constexpr (std::is_floating_point_v<T>) {
      parts.push_back(Num(v));
    } else {
      parts.push_back(std::to_string(v));
    }
  }
  return boost::algorithm::join(parts, ",");
}

}  // namespace

// Configuration ---------------------------------------------------------------

const char* ArchitectureName(Architecture arch) {
  return arch == Architecture::kBiLstm ? "bilstm" : "mlp";
}

Architecture ParseArchitecture(const std::string& name) {
  const std::string n =
      boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(name));
  if (n == "bilstm" || n == "mablppo") return Architecture::kBiLstm;
  if (n == "mlp" || n == "mappo") return Architecture::kMlp;
  throw ConfigError("unknown architecture '" + name + "'");
}

GameInstance RunConfig::BuildGame() const {
  return BuildGame(num_rsus, num_avs);
}

GameInstance RunConfig::BuildGame(int rsus, int avs) const {
  GameInstance game;
  try {
    if (sampler_seed) {
      InstanceSampler sampler;
      sampler.min_rsus = sampler.max_rsus = rsus;
      sampler.min_avs = sampler.max_avs = avs;
      game = SampleGame(sampler, *sampler_seed);
    } else {
      game = DefaultGame(rsus, avs);
    }
    if (marginal_beta) game.marginal_beta = *marginal_beta;
    if (max_bandwidth) game.max_bandwidth = *max_bandwidth;
    if (channel) game.channel = *channel;
    game.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return game;
}

RunConfig ParseRunConfig(std::istream& in) {
  return RunConfigFromTree(ParseIni(in));
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in = OpenInput(path);
  return ParseRunConfig(in);
}

void ExperimentSpec::Validate() const {
  if (seeds.empty()) throw ConfigError("an experiment needs at least one seed");
  if (tail_episodes < 1 || eval_episodes < 1) {
    throw ConfigError("tail_episodes and eval_episodes must be positive");
  }
  if (name.empty() || name.find_first_of(",/\n") != std::string::npos) {
    throw ConfigError("experiment names must be non-empty, without , or /");
  }
  for (int r : rsu_counts) {
    if (r < 1) throw ConfigError("RSU counts must be positive");
  }
  for (int v : av_counts) {
    if (v < 1) throw ConfigError("AV counts must be positive");
  }
  for (double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) {
      throw ConfigError("densities must lie in (0, 1]");
    }
  }
}

ExperimentSpec ParseExperimentSpec(std::istream& in) {
  const pt::ptree tree = ParseIni(in);
  ExperimentSpec spec;
  spec.base = RunConfigFromTree(tree);
  Read(tree, "experiment.name", spec.name);
  if (const auto kind = tree.get_optional<std::string>("experiment.kind")) {
    const std::string k = boost::algorithm::to_lower_copy(*kind);
    if (k == "reward_curves" || k == "fig3") {
      spec.kind = ExperimentKind::kRewardCurves;
    } else if (k == "density") {
      spec.kind = ExperimentKind::kDensity;
    } else if (k == "population") {
      spec.kind = ExperimentKind::kPopulation;
    } else {
      throw ConfigError("unknown experiment kind '" + *kind + "'");
    }
  }
  ReadList(tree, "experiment.seeds", spec.seeds);
  ReadList(tree, "experiment.rsu_counts", spec.rsu_counts);
  ReadList(tree, "experiment.av_counts", spec.av_counts);
  ReadList(tree, "experiment.densities", spec.densities);
  Read(tree, "experiment.tail_episodes", spec.tail_episodes);
  Read(tree, "experiment.eval_episodes", spec.eval_episodes);
  spec.Validate();
  return spec;
}

ExperimentSpec LoadExperimentSpec(const std::string& path) {
  std::ifstream in = OpenInput(path);
  return ParseExperimentSpec(in);
}

std::string RunConfigToIni(const RunConfig& c) {
  std::ostringstream out;
  out << "[game]\n"
      << "num_rsus = " << c.num_rsus << "\n"
      << "num_avs = " << c.num_avs << "\n";
  if (c.sampler_seed) out << "sampler_seed = " << *c.sampler_seed << "\n";
  if (c.marginal_beta) out << "marginal_beta = " << Num(*c.marginal_beta) << "\n";
  if (c.max_bandwidth) out << "max_bandwidth = " << Num(*c.max_bandwidth) << "\n";
  if (c.channel) {
    const ChannelParams& ch = *c.channel;
    out << "\n[channel]\n"
        << "transmit_power = " << Num(ch.transmit_power) << "\n"
        << "unit_gain = " << Num(ch.unit_gain) << "\n"
        << "pathloss_exponent = " << Num(ch.pathloss_exponent) << "\n"
        << "noise_power = " << Num(ch.noise_power) << "\n"
        << "signal_speed = " << Num(ch.signal_speed) << "\n"
        << "estimation_iterations = " << ch.estimation_iterations << "\n";
  }
  out << "\n[solver]\n"
      << "tolerance = " << Num(c.solver.tolerance) << "\n"
      << "max_iterations = " << c.solver.max_iterations << "\n"
      << "damping = " << Num(c.solver.damping) << "\n";
  out << "\n[env]\n"
      << "history_window = " << c.env.history_window << "\n"
      << "episode_length = " << c.env.episode_length << "\n"
      << "seed = " << c.env.seed << "\n"
      << "reward_scale = " << Num(c.env.reward_scale) << "\n"
      << "resample_tasks = " << (c.env.resample_tasks ? "true" : "false")
      << "\n";
  const TrainConfig& t = c.train;
  out << "\n[train]\n"
      << "clip_eps = " << Num(t.clip_eps) << "\n"
      << "discount_gamma = " << Num(t.discount_gamma) << "\n"
      << "gae_lambda = " << Num(t.gae_lambda) << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "epochs_per_batch = " << t.epochs_per_batch << "\n"
      << "minibatch_size = " << t.minibatch_size << "\n"
      << "episodes = " << t.episodes << "\n"
      << "entropy_coef = " << Num(t.entropy_coef) << "\n"
      << "actor_learning_rate = " << Num(t.actor_learning_rate) << "\n"
      << "critic_learning_rate = " << Num(t.critic_learning_rate) << "\n"
      << "leader_lr_scale = " << Num(t.leader_lr_scale) << "\n"
      << "max_grad_norm = " << Num(t.max_grad_norm) << "\n"
      << "normalize_advantages = "
      << (t.normalize_advantages ? "true" : "false") << "\n"
      << "divergence_threshold = " << Num(t.divergence_threshold) << "\n"
      << "seed = " << t.seed << "\n";
  out << "\n[nn]\n"
      << "architecture = " << ArchitectureName(c.architecture) << "\n"
      << "hidden_dim = " << c.net.hidden_dim << "\n"
      << "mlp_widths = " << JoinList(c.net.mlp_widths) << "\n"
      << "init_log_std = " << Num(c.net.init_log_std) << "\n";
  const PruneConfig& p = c.prune;
  out << "\n[prune]\n"
      << "dataset_size = " << p.dataset_size << "\n"
      << "dataset_seed = " << p.dataset_seed << "\n"
      << "mlp_only = " << (p.mlp_only ? "true" : "false") << "\n"
      << "gate_approximation = " << (p.gate_approximation ? "true" : "false")
      << "\n"
      << "finetune_fraction = " << Num(p.finetune_fraction) << "\n"
      << "eval_episodes = " << p.eval_episodes << "\n"
      << "eval_seed = " << p.eval_seed << "\n"
      << "tops_breakpoints = " << JoinList(c.tiers.tops_breakpoints) << "\n"
      << "tier_densities = " << JoinList(c.tiers.densities) << "\n";
  return out.str();
}

// Metrics ---------------------------------------------------------------------

std::string MetricsHeader() {
  return "schema_version,experiment,point,seed,episode,population,metric,value";
}

std::string PopulationLabel(int num_rsus, int num_avs) {
  return fmt::format("R{}V{}", num_rsus, num_avs);
}

void WriteMetricsRows(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << MetricsHeader() << "\n";
  for (const MetricsRow& r : rows) {
    for (const std::string* field :
         {&r.experiment, &r.point, &r.population, &r.metric}) {
      if (field->find_first_of(",\n\r") != std::string::npos) {
        throw ConfigError("metric labels may not contain commas or newlines");
      }
    }
    fmt::print(out, "{},{},{},{},{},{},{},{:.17g}\n", kMetricsSchemaVersion,
               r.experiment, r.point, r.seed, r.episode, r.population,
               r.metric, r.value);
  }
}

std::vector<MetricsRow> ReadMetrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != MetricsHeader()) {
    throw ConfigError("metrics file has an incompatible header");
  }
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    boost::algorithm::split(f, line, boost::algorithm::is_any_of(","));
    if (f.size() != 8) {
      throw ConfigError(fmt::format("metrics line {}: expected 8 fields",
                                    line_no));
    }
    if (f[0] != std::to_string(kMetricsSchemaVersion)) {
      throw ConfigError(fmt::format("metrics line {}: schema version {}",
                                    line_no, f[0]));
    }
    MetricsRow r;
    try {
      r.experiment = f[1];
      r.point = f[2];
      r.seed = std::stoull(f[3]);
      r.episode = std::stoi(f[4]);
      r.population = f[5];
      r.metric = f[6];
      r.value = std::stod(f[7]);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("metrics line {}: malformed number",
                                    line_no));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> ReadMetricsFile(const std::string& path) {
  std::ifstream in = OpenInput(path);
  return ReadMetrics(in);
}

// Runs --------------------------------------------------------------------------

std::vector<double> EpisodeTotals(StackelbergEnv& env,
                                  std::vector<AgentPolicy*> policies,
                                  int episodes, uint64_t base_seed,
                                  bool deterministic) {
  std::vector<double> totals;
  totals.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    const std::vector<TrajectoryBuffer> buffers =
        Rollout(env, policies, 1, base_seed + e, deterministic);
    double total = 0.0;
    for (const TrajectoryBuffer& b : buffers) {
      for (double r : b.rewards) total += r;
    }
    totals.push_back(total);
  }
  return totals;
}

TrainedPopulation TrainPopulation(const RunConfig& config,
                                  const GameInstance& game,
                                  Architecture arch, uint64_t seed) {
  EnvConfig env_cfg = config.env;
  env_cfg.seed = seed;
  StackelbergEnv env(game, env_cfg);
  TrainedPopulation pop;
  pop.agents = MakePpoAgents(env, arch, config.net, seed);
  TrainConfig train = config.train;
  train.seed = seed;
  pop.report = Train(env, pop.agents, train);
  return pop;
}

std::vector<std::unique_ptr<PpoAgent>> ClonePopulation(
    const std::vector<std::unique_ptr<PpoAgent>>& agents) {
  std::vector<std::unique_ptr<PpoAgent>> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(std::make_unique<PpoAgent>(*a));
  return out;
}

void SavePopulation(const std::string& path, const RunConfig& config,
                    uint64_t seed,
                    const std::vector<std::unique_ptr<PpoAgent>>& agents) {
  nn::Checkpoint ckpt;
  ckpt.metadata = {{"config", RunConfigToIni(config)},
                   {"seed", seed},
                   {"num_agents", agents.size()}};
  for (size_t a = 0; a < agents.size(); ++a) {
    const PpoAgent& agent = *agents[a];
    ckpt.networks.push_back({fmt::format("agent{}.actor", a),
                             agent.actor().spec(), agent.actor_params,
                             agent.mask()});
    ckpt.networks.push_back({fmt::format("agent{}.critic", a),
                             agent.critic().spec(), agent.critic_params, {}});
  }
  nn::SaveCheckpoint(ckpt, path);
}

LoadedPopulation LoadPopulation(const std::string& path) {
  const nn::Checkpoint ckpt = nn::LoadCheckpoint(path);
  LoadedPopulation out;
  try {
    std::istringstream ini(ckpt.metadata.at("config").get<std::string>());
    out.config = ParseRunConfig(ini);
    out.seed = ckpt.metadata.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint metadata: ") + e.what());
  }
  StackelbergEnv env(out.config.BuildGame(), out.config.env);
  out.agents =
      MakePpoAgents(env, out.config.architecture, out.config.net, out.seed);
  for (size_t a = 0; a < out.agents.size(); ++a) {
    PpoAgent& agent = *out.agents[a];
    const nn::NetworkRecord& actor = ckpt.Find(fmt::format("agent{}.actor", a));
    const nn::NetworkRecord& critic =
        ckpt.Find(fmt::format("agent{}.critic", a));
    if (actor.params.size() != agent.actor_params.size() ||
        critic.params.size() != agent.critic_params.size()) {
      throw ConfigError("checkpoint networks do not match the configuration");
    }
    agent.actor_params = actor.params;
    agent.actor_old_params = actor.params;
    agent.critic_params = critic.params;
    agent.SetMask(actor.mask);
  }
  return out;
}

// Experiments -----------------------------------------------------------------

namespace {

using PopulationKey = std::tuple<int, int, int, uint64_t>;  // arch, R, V, seed

// Shares trained populations between sweep points; each key is trained once,
// by the first point that asks for it.
class PopulationCache {
 public:
  std::shared_ptr<const TrainedPopulation> Get(const RunConfig& config,
                                               Architecture arch, int rsus,
                                               int avs, uint64_t seed) {
    const PopulationKey key{static_cast<int>(arch), rsus, avs, seed};
    std::promise<std::shared_ptr<const TrainedPopulation>> promise;
    std::shared_future<std::shared_ptr<const TrainedPopulation>> future;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<TrainedPopulation>(TrainPopulation(
            config, config.BuildGame(rsus, avs), arch, seed)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  std::mutex mu_;
  std::map<PopulationKey,
           std::shared_future<std::shared_ptr<const TrainedPopulation>>>
      entries_;
};

struct SweepPoint {
  std::string label;
  int rsus = 0;
  int avs = 0;
  double density = 1.0;
};

std::vector<SweepPoint> EnumeratePoints(const ExperimentSpec& spec) {
  const int base_r = spec.base.num_rsus;
  const int base_v = spec.base.num_avs;
  std::vector<SweepPoint> points;
  switch (spec.kind) {
    case ExperimentKind::kRewardCurves:
      points.push_back({PopulationLabel(base_r, base_v), base_r, base_v, 1.0});
      break;
    case ExperimentKind::kDensity:
      for (double d : spec.densities) {
        points.push_back({fmt::format("q{}", d), base_r, base_v, d});
      }
      break;
    case ExperimentKind::kPopulation: {
      std::set<std::pair<int, int>> seen;
      auto add = [&](int r, int v) {
        if (seen.insert({r, v}).second) {
          points.push_back({PopulationLabel(r, v), r, v, 1.0});
        }
      };
      for (int r : spec.rsu_counts) add(r, base_v);
      for (int v : spec.av_counts) add(base_r, v);
      break;
    }
  }
  return points;
}

void RunRewardCurves(const ExperimentSpec& spec, const SweepPoint& point,
                     uint64_t seed, std::vector<MetricsRow>& rows) {
  const RunConfig& cfg = spec.base;
  const GameInstance game = cfg.BuildGame(point.rsus, point.avs);
  const std::string population = PopulationLabel(point.rsus, point.avs);
  auto emit_curve = [&](const std::string& metric,
                        const std::vector<double>& curve) {
    for (size_t e = 0; e < curve.size(); ++e) {
      rows.push_back({spec.name, point.label, seed, static_cast<int>(e),
                      population, metric, curve[e]});
    }
  };
  for (Architecture arch : {Architecture::kBiLstm, Architecture::kMlp}) {
    const TrainedPopulation pop = TrainPopulation(cfg, game, arch, seed);
    std::vector<double> curve;
    for (const EpisodeRecord& e : pop.report.episodes) {
      curve.push_back(e.total_reward);
    }
    emit_curve(arch == Architecture::kBiLstm ? "total_reward.mablppo"
                                             : "total_reward.mappo",
               curve);
  }
  EnvConfig env_cfg = cfg.env;
  env_cfg.seed = seed;
  StackelbergEnv env(game, env_cfg);
  // Same episode seeds as the training runs.
  auto random = MakeRandomPolicies(env);
  emit_curve("total_reward.random",
             EpisodeTotals(env, Borrow(random), cfg.train.episodes, seed,
                           /*deterministic=*/false));
  auto analytic = MakeAnalyticPolicies(env);
  emit_curve("total_reward.analytic",
             EpisodeTotals(env, Borrow(analytic), cfg.train.episodes, seed,
                           /*deterministic=*/true));
}

void RunDensityPoint(const ExperimentSpec& spec, const SweepPoint& point,
                     uint64_t seed, PopulationCache& cache,
                     std::vector<MetricsRow>& rows) {
  const RunConfig& cfg = spec.base;
  const std::string population = PopulationLabel(point.rsus, point.avs);
  const auto dense = cache.Get(cfg, cfg.architecture, point.rsus, point.avs,
                               seed);
  auto agents = ClonePopulation(dense->agents);
  EnvConfig env_cfg = cfg.env;
  env_cfg.seed = seed;
  StackelbergEnv env(cfg.BuildGame(point.rsus, point.avs), env_cfg);
  std::vector<double> densities(agents.size(), 1.0);
  for (size_t a = point.rsus; a < agents.size(); ++a) {
    densities[a] = point.density;
  }
  TrainConfig train = cfg.train;
  train.seed = seed;
  const std::vector<PruneReport> reports =
      PruneAndFinetune(env, agents, train, cfg.prune, densities);
  double achieved = 0.0;
  for (size_t a = point.rsus; a < reports.size(); ++a) {
    achieved += reports[a].achieved_density;
  }
  achieved /= static_cast<double>(reports.size() - point.rsus);
  const PruneReport& r = reports.back();
  for (const auto& [metric, value] :
       std::vector<std::pair<std::string, double>>{
           {"target_density", point.density},
           {"achieved_density", achieved},
           {"dense_reward", r.dense_reward},
           {"pruned_reward", r.pruned_reward},
           {"finetuned_reward", r.finetuned_reward}}) {
    rows.push_back({spec.name, point.label, seed, -1, population, metric,
                    value});
  }
}

void RunPopulationPoint(const ExperimentSpec& spec, const SweepPoint& point,
                        uint64_t seed, PopulationCache& cache,
                        std::vector<MetricsRow>& rows) {
  const RunConfig& cfg = spec.base;
  const std::string population = PopulationLabel(point.rsus, point.avs);
  EnvConfig env_cfg = cfg.env;
  env_cfg.seed = seed;
  StackelbergEnv env(cfg.BuildGame(point.rsus, point.avs), env_cfg);
  const uint64_t eval_seed = cfg.prune.eval_seed;

  auto analytic = MakeAnalyticPolicies(env);
  const EvaluationResult exact =
      Evaluate(Borrow(analytic), env, spec.eval_episodes, eval_seed);
  const auto trained_pop = cache.Get(cfg, cfg.architecture, point.rsus,
                                     point.avs, seed);
  auto agents = ClonePopulation(trained_pop->agents);
  const EvaluationResult trained =
      Evaluate(AsPolicies(agents), env, spec.eval_episodes, eval_seed);
  for (const auto& [metric, value] :
       std::vector<std::pair<std::string, double>>{
           {"mean_rsu_utility.analytic", exact.mean_leader_utility},
           {"mean_av_utility.analytic", exact.mean_follower_utility},
           {"mean_rsu_utility.trained", trained.mean_leader_utility},
           {"mean_av_utility.trained", trained.mean_follower_utility}}) {
    rows.push_back({spec.name, point.label, seed, -1, population, metric,
                    value});
  }
}

void WriteRowsFile(const std::string& path,
                   const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  WriteMetricsRows(rows, out);
}

}  // namespace

ExperimentResult RunExperiment(const ExperimentSpec& spec,
                               const std::string& out_dir, int workers) {
  spec.Validate();
  namespace fs = std::filesystem;
  const fs::path point_dir = fs::path(out_dir) / spec.name;
  fs::create_directories(point_dir);

  const std::vector<SweepPoint> points = EnumeratePoints(spec);
  std::vector<std::vector<MetricsRow>> point_rows(points.size());
  ExperimentResult result;
  result.points.resize(points.size());
  PopulationCache cache;
  std::atomic<size_t> next{0};

  auto work = [&]() {
    for (size_t i = next++; i < points.size(); i = next++) {
      const SweepPoint& p = points[i];
      PointResult& pr = result.points[i];
      pr.label = p.label;
      pr.path = (point_dir / (p.label + ".csv")).string();
      std::vector<MetricsRow>& rows = point_rows[i];
      try {
        for (uint64_t seed : spec.seeds) {
          switch (spec.kind) {
            case ExperimentKind::kRewardCurves:
              RunRewardCurves(spec, p, seed, rows);
              break;
            case ExperimentKind::kDensity:
              RunDensityPoint(spec, p, seed, cache, rows);
              break;
            case ExperimentKind::kPopulation:
              RunPopulationPoint(spec, p, seed, cache, rows);
              break;
          }
        }
      } catch (const std::exception& e) {
        pr.error = e.what();
        rows.push_back({spec.name, p.label, 0, -1,
                        PopulationLabel(p.rsus, p.avs), "error", 1.0});
      }
      WriteRowsFile(pr.path, rows);
    }
  };
  const int threads =
      std::max(1, std::min<int>(workers, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  std::vector<MetricsRow> merged;
  for (const auto& rows : point_rows) {
    merged.insert(merged.end(), rows.begin(), rows.end());
  }
  result.metrics_path = (fs::path(out_dir) / (spec.name + ".csv")).string();
  WriteRowsFile(result.metrics_path, merged);
  return result;
}

// Reports ---------------------------------------------------------------------

namespace {

struct SeriesKey {
  std::string experiment, point, population, metric;
  auto tie() const { return std::tie(experiment, point, population, metric); }
  bool operator<(const SeriesKey& o) const { return tie() < o.tie(); }
};

// Value of every (series, seed): curve tail mean or the scalar itself.
using SeedValues = std::map<SeriesKey, std::map<uint64_t, double>>;

bool ParsePopulation(const std::string& label, int& rsus, int& avs) {
  return std::sscanf(label.c_str(), "R%dV%d", &rsus, &avs) == 2;
}

std::string Fmt(double v) { return fmt::format("{:.6g}", v); }

void RewardOrderingChecks(const SeedValues& values,
                          std::vector<TrendCheck>& checks) {
  std::set<std::tuple<std::string, std::string, std::string>> groups;
  for (const auto& [key, seeds] : values) {
    if (key.metric == "total_reward.mablppo") {
      groups.insert({key.experiment, key.point, key.population});
    }
  }
  for (const auto& [exp, point, population] : groups) {
    auto series = [&](const std::string& m) -> const std::map<uint64_t, double>* {
      auto it = values.find({exp, point, population, m});
      return it == values.end() ? nullptr : &it->second;
    };
    const auto* bl = series("total_reward.mablppo");
    const auto* ml = series("total_reward.mappo");
    const auto* rnd = series("total_reward.random");
    if (!bl || !ml || !rnd) continue;
    TrendCheck check;
    check.name = fmt::format("{}/{}: reward ordering mablppo >= mappo > "
                             "random, mablppo >= 1.2 x random (all seeds)",
                             exp, point);
    check.passed = true;
    for (const auto& [seed, b] : *bl) {
      const auto m = ml->find(seed);
      const auto r = rnd->find(seed);
      if (m == ml->end() || r == rnd->end()) {
        check.passed = false;
        check.detail += fmt::format("seed {}: missing series; ", seed);
        continue;
      }
      const bool ok = b >= m->second && m->second > r->second &&
                      b >= 1.2 * r->second;
      check.passed = check.passed && ok;
      check.detail += fmt::format("seed {}: mablppo {} mappo {} random {}{}; ",
                                  seed, Fmt(b), Fmt(m->second),
                                  Fmt(r->second), ok ? "" : " (violated)");
    }
    checks.push_back(std::move(check));
  }
}

void DensityChecks(const SeedValues& values, std::vector<TrendCheck>& checks) {
  const std::vector<std::pair<double, double>> thresholds = {
      {0.9, 0.9}, {0.72, 0.75}, {0.33, 0.5}};
  for (const auto& [key, seeds] : values) {
    if (key.metric != "finetuned_reward") continue;
    const auto target = values.find(
        {key.experiment, key.point, key.population, "target_density"});
    const auto dense = values.find(
        {key.experiment, key.point, key.population, "dense_reward"});
    if (target == values.end() || dense == values.end()) continue;
    const double q = target->second.begin()->second;
    for (const auto& [density, ratio] : thresholds) {
      if (std::abs(q - density) > 1e-12) continue;
      TrendCheck check;
      check.name = fmt::format("{}/{}: fine-tuned reward >= {} x dense",
                               key.experiment, key.point, ratio);
      check.passed = true;
      for (const auto& [seed, tuned] : seeds) {
        const double d = dense->second.at(seed);
        const bool ok = tuned >= ratio * d;
        check.passed = check.passed && ok;
        check.detail += fmt::format("seed {}: {} vs dense {} (ratio {}); ",
                                    seed, Fmt(tuned), Fmt(d), Fmt(tuned / d));
      }
      checks.push_back(std::move(check));
    }
  }
}

void PopulationChecks(const SeedValues& values,
                      std::vector<TrendCheck>& checks) {
  for (const std::string policy : {"analytic", "trained"}) {
    const std::string metric = "mean_rsu_utility." + policy;
    // experiment -> (R, V) -> seed -> value
    std::map<std::string, std::map<std::pair<int, int>,
                                   std::map<uint64_t, double>>>
        by_size;
    for (const auto& [key, seeds] : values) {
      int r = 0, v = 0;
      if (key.metric != metric || !ParsePopulation(key.population, r, v)) {
        continue;
      }
      by_size[key.experiment][{r, v}] = seeds;
    }
    const bool exact = policy == "analytic";
    for (const auto& [exp, sizes] : by_size) {
      // Two one-dimensional sweeps: vary R at fixed V (utility should not
      // rise) and vary V at fixed R (utility should not fall).
      for (int axis = 0; axis < 2; ++axis) {
        std::map<int, std::vector<std::pair<int, const std::map<uint64_t, double>*>>>
            lines;
        for (const auto& [size, seeds] : sizes) {
          const int fixed = axis == 0 ? size.second : size.first;
          const int moving = axis == 0 ? size.first : size.second;
          lines[fixed].push_back({moving, &seeds});
        }
        for (auto& [fixed, line] : lines) {
          if (line.size() < 2) continue;
          std::sort(line.begin(), line.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });
          TrendCheck check;
          check.name = fmt::format(
              "{}: {} mean RSU utility {} in {} count at {} {} ({})", exp,
              policy, axis == 0 ? "non-increasing" : "non-decreasing",
              axis == 0 ? "RSU" : "AV", fixed, axis == 0 ? "AVs" : "RSUs",
              exact ? "every seed" : "majority of seeds");
          int seeds_ok = 0, seeds_total = 0;
          for (const auto& [seed, first_value] : *line.front().second) {
            bool ok = true;
            std::string chain;
            double prev = first_value;
            for (size_t j = 0; j < line.size(); ++j) {
              const auto it = line[j].second->find(seed);
              if (it == line[j].second->end()) {
                ok = false;
                break;
              }
              const double v = it->second;
              if (j > 0) {
                const double slack =
                    exact ? 1e-12 * std::max(1.0, std::abs(prev)) : 0.0;
                ok = ok && (axis == 0 ? v <= prev + slack : v >= prev - slack);
              }
              chain += fmt::format("{}{}={}", j ? " " : "", line[j].first,
                                   Fmt(v));
              prev = v;
            }
            ++seeds_total;
            seeds_ok += ok;
            check.detail += fmt::format("seed {}: [{}]{}; ", seed, chain,
                                        ok ? "" : " (violated)");
          }
          check.passed = exact ? seeds_ok == seeds_total
                               : 2 * seeds_ok > seeds_total;
          checks.push_back(std::move(check));
        }
      }
    }
  }
}

}  // namespace

bool ComparisonReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const TrendCheck& c) { return c.passed; });
}

void ComparisonReport::Print(std::ostream& out) const {
  fmt::print(out, "{:<16} {:<8} {:<8} {:<28} {:>5} {:>14} {:>12}\n",
             "experiment", "point", "pop", "metric", "seeds", "mean", "std");
  for (const SummaryEntry& e : summary) {
    fmt::print(out, "{:<16} {:<8} {:<8} {:<28} {:>5} {:>14.6g} {:>12.4g}\n",
               e.experiment, e.point, e.population, e.metric, e.seeds, e.mean,
               e.std);
  }
  for (const TrendCheck& c : checks) {
    fmt::print(out, "{} {}\n    {}\n", c.passed ? "PASS" : "FAIL", c.name,
               c.detail);
  }
}

ComparisonReport CompareRows(const std::vector<MetricsRow>& rows,
                             int tail_episodes) {
  if (tail_episodes < 1) throw ConfigError("tail_episodes must be positive");
  // series -> seed -> (episode -> value) and scalar values.
  std::map<SeriesKey, std::map<uint64_t, std::map<int, double>>> curves;
  std::map<SeriesKey, std::map<uint64_t, std::vector<double>>> scalars;
  for (const MetricsRow& r : rows) {
    const SeriesKey key{r.experiment, r.point, r.population, r.metric};
    if (r.episode >= 0) {
      curves[key][r.seed][r.episode] = r.value;
    } else {
      scalars[key][r.seed].push_back(r.value);
    }
  }
  SeedValues values;
  ComparisonReport report;
  for (const auto& [key, seeds] : curves) {
    for (const auto& [seed, curve] : seeds) {
      double sum = 0.0;
      int n = 0;
      for (auto it = curve.rbegin(); it != curve.rend() && n < tail_episodes;
           ++it, ++n) {
        sum += it->second;
      }
      values[key][seed] = sum / n;
    }
    if (key.metric == "total_reward.analytic") {
      TrendCheck check;
      check.name = fmt::format("{}/{}: analytic curve constant over episodes",
                               key.experiment, key.point);
      check.passed = true;
      for (const auto& [seed, curve] : seeds) {
        double lo = curve.begin()->second, hi = lo;
        for (const auto& [e, v] : curve) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const bool ok = hi - lo <= 1e-9 * std::max(1.0, std::abs(hi));
        check.passed = check.passed && ok;
        check.detail += fmt::format("seed {}: spread {}; ", seed, Fmt(hi - lo));
      }
      report.checks.push_back(std::move(check));
    }
  }
  for (const auto& [key, seeds] : scalars) {
    for (const auto& [seed, vals] : seeds) {
      double sum = 0.0;
      for (double v : vals) sum += v;
      values[key][seed] = sum / vals.size();
    }
  }
  for (const auto& [key, seeds] : values) {
    SummaryEntry e{key.experiment, key.point, key.population, key.metric,
                   static_cast<int>(seeds.size()), 0.0, 0.0};
    for (const auto& [seed, v] : seeds) e.mean += v;
    e.mean /= e.seeds;
    double var = 0.0;
    for (const auto& [seed, v] : seeds) var += (v - e.mean) * (v - e.mean);
    e.std = std::sqrt(var / e.seeds);
    report.summary.push_back(std::move(e));
  }
  RewardOrderingChecks(values, report.checks);
  DensityChecks(values, report.checks);
  PopulationChecks(values, report.checks);
  return report;
}

ComparisonReport CompareReport(const std::vector<std::string>& paths,
                               int tail_episodes) {
  std::vector<MetricsRow> rows;
  for (const std::string& path : paths) {
    std::vector<MetricsRow> part = ReadMetricsFile(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return CompareRows(rows, tail_episodes);
}

}  // namespace stackmarl

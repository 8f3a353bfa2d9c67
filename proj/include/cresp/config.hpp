#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "cresp/agent.hpp"
#include "cresp/env.hpp"

namespace cresp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Resolved run configuration. Parsed from `[section] key = value` text with
// every key validated; unknown keys are rejected by name.
struct RunConfig {
  // [run]
  std::string out_dir = "runs/out";
  int64_t steps = 50000;
  int64_t eval_every = 2500;
  int eval_episodes = 10;
  std::vector<uint64_t> seeds = {1};
  Objective objective = Objective::CrespT;
  int64_t checkpoint_every = 10000;
  int probe_n = 20000;
  int64_t replay_capacity = 100000;

  // [env]
  EnvSpec env;
  int n_train = 2;
  int n_test = 1;

  // [agent]
  double lr = 1e-3;
  int batch = 128;
  int aux_batch = 128;
  int hidden = 256;
  int repr_dim = 64;
  EncoderKind encoder = EncoderKind::Mlp;
  int enc_hidden = 256;
  double tau = 0.01;
  int critic_target_update_freq = 2;
  int actor_update_freq = 1;
  double init_temperature = 0.1;
  int init_steps = 1000;
  bool augment = true;
  int max_shift = 2;

  // [aux]
  int t_len = 0;  // 0 = resolve by objective (CRESP_T -> 2, others -> 5)
  int kappa = 32;
  double lambda = 0.5;
  bool predictor_set = false;
  PredictorKind predictor = PredictorKind::Mlp;
  int pred_hidden = 256;
  int d_model = 16;
  int n_heads = 2;
  int d_ff = 64;
  double dropout = 0.1;

  // [sweep]
  std::vector<Objective> sweep_objectives;
  std::vector<int> sweep_t;

  int resolved_t_len() const;
  PredictorKind resolved_predictor() const;
  PredictorKind resolved_predictor_for(Objective o) const;
  AgentConfig agent_config(uint64_t agent_seed) const;
  AgentConfig agent_config_for(Objective o, int t_len_override, uint64_t agent_seed) const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

// Canonical echo of every resolved value, reparseable by parse_config_text.
std::string render_config(const RunConfig& cfg);

}  // namespace cresp

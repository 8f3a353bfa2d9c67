#pragma once
#include <string>
#include <vector>

#include "cresp/checkpoint.hpp"
#include "cresp/modules.hpp"
#include "cresp/replay.hpp"
#include "cresp/spectral.hpp"

namespace cresp {

enum class Objective { Cresp, CrespT, CrespSum, Rsp, RspSum, Tdp, Rdp, RdpBm, None };

Objective objective_from_string(const std::string& s);
std::string objective_name(Objective o);

struct AgentConfig {
  EncoderConfig enc;
  int act_dim = 2;
  int hidden = 256;  // actor/critic width
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 128;
  int aux_batch = 128;
  double tau = 0.01;
  int critic_target_update_freq = 2;
  int actor_update_freq = 1;
  double init_temperature = 0.1;
  double log_std_min = -5;
  double log_std_max = 2;
  int init_steps = 1000;
  Objective objective = Objective::CrespT;
  PredictorKind predictor = PredictorKind::Transformer;
  int t_len = 2;
  int kappa = 32;
  double lambda = 0.5;
  int pred_hidden = 256;
  int d_model = 16;
  int n_heads = 2;
  int d_ff = 64;
  double dropout = 0.1;
  bool augment = true;
  int max_shift = 2;
  uint64_t seed = 0;
};

// SAC learner with a shared encoder and one optional auxiliary representation
// objective. Owns all parameter stores and its update-time rng stream; the
// rollout/eval loop lives in the runner.
class Agent {
 public:
  explicit Agent(const AgentConfig& cfg);

  const AgentConfig& cfg() const { return cfg_; }

  std::vector<double> act(const Observation& o, bool deterministic, Rng& rng);

  struct UpdateStats {
    double critic_loss = 0;
    double actor_loss = 0;
    double alpha = 0;
    double aux_loss = 0;
  };

  // One SAC gradient step plus one auxiliary step; call gating (init_steps)
  // is the runner's job.
  UpdateStats update(ReplayBuffer& buf);
  double sac_update(ReplayBuffer& buf);   // returns critic loss
  double aux_update(ReplayBuffer& buf);   // returns auxiliary loss (0 for NONE)

  double alpha() const;
  int64_t sac_updates() const { return sac_updates_; }

  // Encoded rows for probes / export, tape-free, no augmentation.
  nn::Tensor encode_batch(const std::vector<Observation>& obs);

  nn::ParamStore& enc_store() { return enc_; }
  nn::ParamStore& actor_store() { return actor_; }
  nn::ParamStore& critic_store() { return critic_; }
  nn::ParamStore& alpha_store() { return alpha_; }
  nn::ParamStore& aux_store() { return aux_; }
  nn::ParamStore& enc_target_store() { return enc_tgt_; }
  nn::ParamStore& critic_target_store() { return critic_tgt_; }

  void save(CheckpointWriter& w) const;
  void load(CheckpointReader& r);

 private:
  nn::Tensor obs_rows(const std::vector<Observation>& obs, bool augment);
  nn::Tensor obs_rows_flat(const std::vector<std::vector<double>>& flats, bool augment);
  double aux_loss_and_step(const std::vector<TrajectorySegment>& segs);

  AgentConfig cfg_;
  ActorCriticConfig ac_;
  PredictorConfig pred_;
  nn::AdamConfig adam_;
  nn::ParamStore enc_, actor_, critic_, alpha_, aux_, enc_tgt_, critic_tgt_;
  Rng update_rng_;
  int64_t sac_updates_ = 0;
  int64_t aux_updates_ = 0;
};

}  // namespace cresp

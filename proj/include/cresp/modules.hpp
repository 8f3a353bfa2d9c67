#pragma once
#include <utility>
#include <vector>

#include "cresp/params.hpp"
#include "cresp/rng.hpp"
#include "cresp/tensor.hpp"

namespace cresp::nn {
// Copy that the tape treats as a constant.
Tensor detach(const Tensor& t);
}  // namespace cresp::nn

namespace cresp {

enum class EncoderKind { Mlp, Conv };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::Mlp;
  std::vector<int> obs_shape;
  int repr_dim = 64;
  int hidden = 256;   // mlp hidden width
  int filters = 32;   // conv filters per layer
};

// Prefix "enc.". Conv stack: 4 layers of 3x3 kernels, stride 2 then 1,
// padding 1, ReLU; both kinds end dense -> layer norm -> tanh.
void init_encoder(nn::ParamStore& p, const EncoderConfig& cfg, Rng& rng);
nn::Tensor encode(nn::ParamStore& p, const EncoderConfig& cfg, const nn::Tensor& obs_rows);

struct ActorCriticConfig {
  int repr_dim = 64;
  int act_dim = 2;
  int hidden = 256;
  double log_std_min = -5;
  double log_std_max = 2;
};

void init_actor(nn::ParamStore& p, const ActorCriticConfig& cfg, Rng& rng);

struct ActorSample {
  nn::Tensor a;       // (B, act_dim), tanh squashed
  nn::Tensor logp;    // (B, 1), includes tanh correction
  nn::Tensor mean_a;  // (B, act_dim), deterministic action
};
ActorSample actor_sample(nn::ParamStore& p, const ActorCriticConfig& cfg, const nn::Tensor& z,
                         Rng& rng);
nn::Tensor actor_mean(nn::ParamStore& p, const ActorCriticConfig& cfg, const nn::Tensor& z);

// Twin critics under prefixes "q1." / "q2.".
void init_critics(nn::ParamStore& p, const ActorCriticConfig& cfg, Rng& rng);
std::pair<nn::Tensor, nn::Tensor> critic_pair(nn::ParamStore& p, const ActorCriticConfig& cfg,
                                              const nn::Tensor& z, const nn::Tensor& a);

void init_alpha(nn::ParamStore& p, double init_temperature);
nn::Tensor alpha_value(nn::ParamStore& p);  // exp(log alpha), scalar

enum class PredictorKind { Mlp, Transformer };

struct PredictorConfig {
  PredictorKind kind = PredictorKind::Mlp;
  int repr_dim = 64;
  int act_dim = 2;
  int t_len = 2;      // action sequence length
  int omega_dim = 2;  // frequency row width (t_len, or 1 for the sum variant)
  int hidden = 256;   // mlp trunk width
  int d_model = 16;
  int n_heads = 2;
  int d_ff = 64;
  double dropout = 0.1;
};

// Prefix "pred." (mlp trunk + cos/sin heads) or "tfm." (token projections,
// position embeddings, one shared block, two parallel head blocks, readout at
// the omega token).
void init_predictor(nn::ParamStore& p, const PredictorConfig& cfg, Rng& rng);

struct CfPred {
  nn::Tensor cos_p, sin_p;  // (B, kappa)
};
// z: (B, repr), aseq_flat: (B, t_len*act_dim), omegas: (kappa, omega_dim).
// train_mode enables dropout (transformer only), driven by rng.
CfPred predict_cf(nn::ParamStore& p, const PredictorConfig& cfg, const nn::Tensor& z,
                  const nn::Tensor& aseq_flat, const nn::Tensor& omegas, bool train_mode,
                  Rng& rng);

// Reward-sequence regression head, prefix "rsp.": 3-layer MLP from
// (z, flattened action sequence) to out_dim reward values.
void init_reward_head(nn::ParamStore& p, int repr_dim, int act_dim, int t_len, int hidden,
                      int out_dim, Rng& rng);
nn::Tensor reward_head(nn::ParamStore& p, const nn::Tensor& z, const nn::Tensor& aseq_flat);

// Bilinear InfoNCE over a batch, prefix "tdp.": anchors score targets through
// W, positives on the diagonal. Returns mean cross entropy.
void init_tdp(nn::ParamStore& p, int repr_dim, Rng& rng);
nn::Tensor tdp_infonce(nn::ParamStore& p, const nn::Tensor& z_anchor, const nn::Tensor& z_target);

// Bisimulation heads, prefix "bm.": scalar discounted-segment-reward estimate
// and a diagonal-Gaussian predictor of the latent after the segment.
void init_bm(nn::ParamStore& p, int repr_dim, int act_dim, int t_len, int hidden, Rng& rng);
struct BmOut {
  nn::Tensor rhat;     // (B, 1)
  nn::Tensor mu;       // (B, repr)
  nn::Tensor std_dev;  // (B, repr), positive
};
BmOut bm_forward(nn::ParamStore& p, const nn::Tensor& z, const nn::Tensor& aseq_flat);

// Random shift of a C x H x W observation by up to max_shift cells per axis
// with edge padding; one offset pair per call.
std::vector<double> shift_augment(const std::vector<double>& flat, int c, int h, int w,
                                  int max_shift, Rng& rng);

}  // namespace cresp

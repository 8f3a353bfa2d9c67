#include "cresp/modules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cresp::nn {

Tensor detach(const Tensor& t) {
  Tensor c = t;
  c.node = -1;
  c.tape_id = 0;
  return c;
}

}  // namespace cresp::nn

namespace cresp {

using nn::ParamStore;
using nn::Tensor;

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

Tensor dense(ParamStore& p, const std::string& prefix, const Tensor& x) {
  return nn::add(nn::matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b"));
}

void init_dense(ParamStore& p, const std::string& prefix, int in, int out, double gain, Rng& rng) {
  p.add(prefix + ".w", {in, out}, gain / std::sqrt(static_cast<double>(in)), &rng);
  p.add(prefix + ".b", {1, out}, 0.0, nullptr);
}

void init_ln(ParamStore& p, const std::string& prefix, int dim) {
  auto& g = p.add(prefix + ".g", {1, dim}, 0.0, nullptr);
  std::fill(g.data(), g.data() + g.numel(), 1.0);
  p.add(prefix + ".b", {1, dim}, 0.0, nullptr);
}

Tensor ln_affine(ParamStore& p, const std::string& prefix, const Tensor& x) {
  return nn::add(nn::mul(nn::layer_norm_rows(x), p.at(prefix + ".g")), p.at(prefix + ".b"));
}

Tensor rescale_tanh(const Tensor& raw, double lo, double hi) {
  return nn::add_scalar(nn::scale(nn::add_scalar(nn::tanh_t(raw), 1.0), 0.5 * (hi - lo)), lo);
}

Tensor dropout(const Tensor& x, double rate, bool train_mode, Rng& rng) {
  if (!train_mode || rate <= 0.0) return x;
  Tensor mask = Tensor::zeros(x.shape);
  const double keep = 1.0 - rate;
  for (int64_t i = 0; i < mask.numel(); ++i)
    mask.data()[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return nn::mul(x, mask);
}

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

void init_encoder(ParamStore& p, const EncoderConfig& cfg, Rng& rng) {
  const int64_t in = numel_of(cfg.obs_shape);
  if (cfg.kind == EncoderKind::Mlp) {
    init_dense(p, "enc.l1", static_cast<int>(in), cfg.hidden, std::sqrt(2.0), rng);
    init_dense(p, "enc.out", cfg.hidden, cfg.repr_dim, 1.0, rng);
    return;
  }
  if (cfg.obs_shape.size() != 3) throw std::invalid_argument("conv encoder needs a C x H x W observation");
  int c = cfg.obs_shape[0], h = cfg.obs_shape[1], w = cfg.obs_shape[2];
  for (int l = 0; l < 4; ++l) {
    const int stride = l == 0 ? 2 : 1;
    init_dense(p, "enc.c" + std::to_string(l), c * 9, cfg.filters, std::sqrt(2.0), rng);
    h = (h + 2 - 3) / stride + 1;
    w = (w + 2 - 3) / stride + 1;
    c = cfg.filters;
  }
  init_dense(p, "enc.out", c * h * w, cfg.repr_dim, 1.0, rng);
}

Tensor encode(ParamStore& p, const EncoderConfig& cfg, const Tensor& obs_rows) {
  const int64_t in = numel_of(cfg.obs_shape);
  if (obs_rows.shape.size() != 2 || obs_rows.shape[1] != in)
    throw std::invalid_argument("encode: observation rows do not match the configured shape");
  Tensor x = obs_rows;
  if (cfg.kind == EncoderKind::Mlp) {
    x = nn::relu(dense(p, "enc.l1", x));
  } else {
    const int batch = x.shape[0];
    int c = cfg.obs_shape[0], h = cfg.obs_shape[1], w = cfg.obs_shape[2];
    for (int l = 0; l < 4; ++l) {
      const int stride = l == 0 ? 2 : 1;
      Tensor cols = nn::im2col(x, c, h, w, 3, stride, 1);
      Tensor y = nn::relu(dense(p, "enc.c" + std::to_string(l), cols));
      h = (h + 2 - 3) / stride + 1;
      w = (w + 2 - 3) / stride + 1;
      c = cfg.filters;
      x = nn::cols_to_nchw(y, batch, h * w, c);
    }
  }
  return nn::tanh_t(nn::layer_norm_rows(dense(p, "enc.out", x)));
}

void init_actor(ParamStore& p, const ActorCriticConfig& cfg, Rng& rng) {
  init_dense(p, "actor.l1", cfg.repr_dim, cfg.hidden, std::sqrt(2.0), rng);
  init_dense(p, "actor.l2", cfg.hidden, cfg.hidden, std::sqrt(2.0), rng);
  init_dense(p, "actor.out", cfg.hidden, 2 * cfg.act_dim, 1.0, rng);
}

namespace {

std::pair<Tensor, Tensor> actor_dist(ParamStore& p, const ActorCriticConfig& cfg, const Tensor& z) {
  Tensor h = nn::relu(dense(p, "actor.l1", z));
  h = nn::relu(dense(p, "actor.l2", h));
  Tensor out = dense(p, "actor.out", h);
  Tensor mu = nn::slice_cols(out, 0, cfg.act_dim);
  Tensor log_std = rescale_tanh(nn::slice_cols(out, cfg.act_dim, 2 * cfg.act_dim),
                                cfg.log_std_min, cfg.log_std_max);
  return {mu, log_std};
}

}  // namespace

ActorSample actor_sample(ParamStore& p, const ActorCriticConfig& cfg, const Tensor& z, Rng& rng) {
  auto [mu, log_std] = actor_dist(p, cfg, z);
  Tensor eps = Tensor::zeros(mu.shape);
  rng.fill_normal(eps.data(), eps.numel());
  Tensor u = nn::add(mu, nn::mul(nn::exp_t(log_std), eps));
  Tensor a = nn::tanh_t(u);
  // constant part of the Gaussian log density at the drawn noise
  Tensor cpart = Tensor::zeros(mu.shape);
  for (int64_t i = 0; i < cpart.numel(); ++i)
    cpart.data()[i] = -0.5 * eps.data()[i] * eps.data()[i] - kLogSqrt2Pi;
  Tensor gauss = nn::add(nn::neg(log_std), cpart);
  Tensor corr = nn::log_t(nn::add_scalar(nn::neg(nn::mul(a, a)), 1.0 + 1e-6));
  ActorSample s;
  s.a = a;
  s.logp = nn::sum_axis(nn::sub(gauss, corr), 1);
  s.mean_a = nn::tanh_t(mu);
  return s;
}

Tensor actor_mean(ParamStore& p, const ActorCriticConfig& cfg, const Tensor& z) {
  return nn::tanh_t(actor_dist(p, cfg, z).first);
}

void init_critics(ParamStore& p, const ActorCriticConfig& cfg, Rng& rng) {
  const int in = cfg.repr_dim + cfg.act_dim;
  for (const char* q : {"q1", "q2"}) {
    std::string s(q);
    init_dense(p, s + ".l1", in, cfg.hidden, std::sqrt(2.0), rng);
    init_dense(p, s + ".l2", cfg.hidden, cfg.hidden, std::sqrt(2.0), rng);
    init_dense(p, s + ".out", cfg.hidden, 1, 1.0, rng);
  }
}

std::pair<Tensor, Tensor> critic_pair(ParamStore& p, const ActorCriticConfig& cfg, const Tensor& z,
                                      const Tensor& a) {
  if (a.shape[1] != cfg.act_dim) throw std::invalid_argument("critic: action width mismatch");
  Tensor x = nn::concat_cols({z, a});
  auto one = [&](const std::string& s) {
    Tensor h = nn::relu(dense(p, s + ".l1", x));
    h = nn::relu(dense(p, s + ".l2", h));
    return dense(p, s + ".out", h);
  };
  return {one("q1"), one("q2")};
}

void init_alpha(ParamStore& p, double init_temperature) {
  if (init_temperature <= 0) throw std::invalid_argument("init_alpha: temperature must be positive");
  auto& t = p.add("alpha.log", {1, 1}, 0.0, nullptr);
  t.data()[0] = std::log(init_temperature);
}

Tensor alpha_value(ParamStore& p) { return nn::exp_t(p.at("alpha.log")); }

void init_predictor(ParamStore& p, const PredictorConfig& cfg, Rng& rng) {
  if (cfg.t_len < 1 || cfg.omega_dim < 1) throw std::invalid_argument("predictor: bad lengths");
  if (cfg.kind == PredictorKind::Mlp) {
    const int in = cfg.repr_dim + cfg.t_len * cfg.act_dim + cfg.omega_dim;
    init_dense(p, "pred.l1", in, cfg.hidden, std::sqrt(2.0), rng);
    init_dense(p, "pred.cos", cfg.hidden, 1, 1.0, rng);
    init_dense(p, "pred.sin", cfg.hidden, 1, 1.0, rng);
    return;
  }
  if (cfg.d_model % cfg.n_heads != 0)
    throw std::invalid_argument("predictor: d_model must be divisible by n_heads");
  const int d = cfg.d_model;
  init_dense(p, "tfm.pz", cfg.repr_dim, d, 1.0, rng);
  init_dense(p, "tfm.po", cfg.omega_dim, d, 1.0, rng);
  init_dense(p, "tfm.pa", cfg.act_dim, d, 1.0, rng);
  p.add("tfm.pos", {cfg.t_len + 2, d}, 0.02, &rng);
  for (const char* blk : {"b0", "bc", "bs"}) {
    std::string s = std::string("tfm.") + blk;
    init_ln(p, s + ".ln1", d);
    init_dense(p, s + ".wq", d, d, 1.0, rng);
    init_dense(p, s + ".wk", d, d, 1.0, rng);
    init_dense(p, s + ".wv", d, d, 1.0, rng);
    init_dense(p, s + ".wo", d, d, 1.0, rng);
    init_ln(p, s + ".ln2", d);
    init_dense(p, s + ".ff1", d, cfg.d_ff, std::sqrt(2.0), rng);
    init_dense(p, s + ".ff2", cfg.d_ff, d, 1.0, rng);
  }
  init_ln(p, "tfm.lnc", d);
  init_ln(p, "tfm.lns", d);
  init_dense(p, "tfm.outc", d, 1, 1.0, rng);
  init_dense(p, "tfm.outs", d, 1, 1.0, rng);
}

namespace {

Tensor tfm_block(ParamStore& p, const std::string& s, const Tensor& x_in, int n_seq, int len,
                 int heads, double drop, bool train_mode, Rng& rng) {
  Tensor h = ln_affine(p, s + ".ln1", x_in);
  Tensor attn = nn::scaled_dot_attention(dense(p, s + ".wq", h), dense(p, s + ".wk", h),
                                         dense(p, s + ".wv", h), n_seq, len, heads);
  attn = dropout(dense(p, s + ".wo", attn), drop, train_mode, rng);
  Tensor x = nn::add(x_in, attn);
  Tensor f = nn::relu(dense(p, s + ".ff1", ln_affine(p, s + ".ln2", x)));
  f = dense(p, s + ".ff2", dropout(f, drop, train_mode, rng));
  return nn::add(x, f);
}

}  // namespace

CfPred predict_cf(ParamStore& p, const PredictorConfig& cfg, const Tensor& z,
                  const Tensor& aseq_flat, const Tensor& omegas, bool train_mode, Rng& rng) {
  const int batch = z.shape[0];
  const int kappa = omegas.shape[0];
  if (aseq_flat.shape[0] != batch || aseq_flat.shape[1] != cfg.t_len * cfg.act_dim)
    throw std::invalid_argument("predict_cf: action sequence shape mismatch");
  if (omegas.shape[1] != cfg.omega_dim)
    throw std::invalid_argument("predict_cf: omega width mismatch");
  CfPred out;
  if (cfg.kind == PredictorKind::Mlp) {
    Tensor x = nn::concat_cols({nn::repeat_rows_interleave(z, kappa),
                                nn::repeat_rows_interleave(aseq_flat, kappa),
                                nn::tile_rows(omegas, batch)});
    Tensor h = nn::relu(dense(p, "pred.l1", x));
    out.cos_p = nn::reshape(dense(p, "pred.cos", h), {batch, kappa});
    out.sin_p = nn::reshape(dense(p, "pred.sin", h), {batch, kappa});
    return out;
  }
  const int len = cfg.t_len + 2;
  const int n_seq = batch * kappa;
  std::vector<Tensor> toks;
  toks.push_back(nn::repeat_rows_interleave(dense(p, "tfm.pz", z), kappa));
  toks.push_back(nn::tile_rows(dense(p, "tfm.po", omegas), batch));
  for (int t = 0; t < cfg.t_len; ++t) {
    Tensor at = nn::slice_cols(aseq_flat, t * cfg.act_dim, (t + 1) * cfg.act_dim);
    toks.push_back(nn::repeat_rows_interleave(dense(p, "tfm.pa", at), kappa));
  }
  Tensor stacked = nn::concat_rows(toks);  // token-major blocks
  std::vector<int> perm(static_cast<size_t>(n_seq * len));
  for (int sq = 0; sq < n_seq; ++sq)
    for (int l = 0; l < len; ++l) perm[static_cast<size_t>(sq * len + l)] = l * n_seq + sq;
  Tensor x = nn::gather_rows(stacked, perm);
  x = nn::add(x, nn::tile_rows(p.at("tfm.pos"), n_seq));
  Tensor shared = tfm_block(p, "tfm.b0", x, n_seq, len, cfg.n_heads, cfg.dropout, train_mode, rng);
  std::vector<int> ridx(static_cast<size_t>(n_seq));
  for (int sq = 0; sq < n_seq; ++sq) ridx[static_cast<size_t>(sq)] = sq * len + 1;  // omega token
  auto head = [&](const char* blk, const char* lnf, const char* proj) {
    Tensor hx = tfm_block(p, std::string("tfm.") + blk, shared, n_seq, len, cfg.n_heads,
                          cfg.dropout, train_mode, rng);
    Tensor r = ln_affine(p, std::string("tfm.") + lnf, nn::gather_rows(hx, ridx));
    return nn::reshape(dense(p, std::string("tfm.") + proj, r), {batch, kappa});
  };
  out.cos_p = head("bc", "lnc", "outc");
  out.sin_p = head("bs", "lns", "outs");
  return out;
}

void init_reward_head(ParamStore& p, int repr_dim, int act_dim, int t_len, int hidden, int out_dim,
                      Rng& rng) {
  const int in = repr_dim + t_len * act_dim;
  init_dense(p, "rsp.l1", in, hidden, std::sqrt(2.0), rng);
  init_dense(p, "rsp.l2", hidden, hidden, std::sqrt(2.0), rng);
  init_dense(p, "rsp.out", hidden, out_dim, 1.0, rng);
}

Tensor reward_head(ParamStore& p, const Tensor& z, const Tensor& aseq_flat) {
  Tensor h = nn::relu(dense(p, "rsp.l1", nn::concat_cols({z, aseq_flat})));
  h = nn::relu(dense(p, "rsp.l2", h));
  return dense(p, "rsp.out", h);
}

void init_tdp(ParamStore& p, int repr_dim, Rng& rng) {
  p.add("tdp.w", {repr_dim, repr_dim}, 1.0 / std::sqrt(static_cast<double>(repr_dim)), &rng);
}

Tensor tdp_infonce(ParamStore& p, const Tensor& z_anchor, const Tensor& z_target) {
  const int batch = z_anchor.shape[0];
  Tensor logits = nn::matmul_nt(nn::matmul(z_anchor, p.at("tdp.w")), z_target);
  Tensor eye = Tensor::zeros({batch, batch});
  for (int i = 0; i < batch; ++i) eye.data()[static_cast<int64_t>(i) * batch + i] = 1.0;
  Tensor diag = nn::sum_axis(nn::mul(nn::log_softmax_rows(logits), eye), 1);
  return nn::neg(nn::mean(diag));
}

void init_bm(ParamStore& p, int repr_dim, int act_dim, int t_len, int hidden, Rng& rng) {
  const int in = repr_dim + t_len * act_dim;
  init_dense(p, "bm.r1", in, hidden, std::sqrt(2.0), rng);
  init_dense(p, "bm.rout", hidden, 1, 1.0, rng);
  init_dense(p, "bm.d1", in, hidden, std::sqrt(2.0), rng);
  init_dense(p, "bm.dout", hidden, 2 * repr_dim, 1.0, rng);
}

BmOut bm_forward(ParamStore& p, const Tensor& z, const Tensor& aseq_flat) {
  const int repr_dim = z.shape[1];
  Tensor x = nn::concat_cols({z, aseq_flat});
  BmOut out;
  out.rhat = dense(p, "bm.rout", nn::relu(dense(p, "bm.r1", x)));
  Tensor d = dense(p, "bm.dout", nn::relu(dense(p, "bm.d1", x)));
  out.mu = nn::slice_cols(d, 0, repr_dim);
  out.std_dev = nn::exp_t(rescale_tanh(nn::slice_cols(d, repr_dim, 2 * repr_dim), -5.0, 2.0));
  return out;
}

std::vector<double> shift_augment(const std::vector<double>& flat, int c, int h, int w,
                                  int max_shift, Rng& rng) {
  if (static_cast<int64_t>(flat.size()) != static_cast<int64_t>(c) * h * w)
    throw std::invalid_argument("shift_augment: size mismatch");
  const int dy = static_cast<int>(rng.uniform_int(2 * max_shift + 1)) - max_shift;
  const int dx = static_cast<int>(rng.uniform_int(2 * max_shift + 1)) - max_shift;
  std::vector<double> out(flat.size());
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = std::clamp(y - dy, 0, h - 1);
        const int sx = std::clamp(x - dx, 0, w - 1);
        out[(static_cast<size_t>(ci) * h + y) * w + x] =
            flat[(static_cast<size_t>(ci) * h + sy) * w + sx];
      }
  return out;
}

}  // namespace cresp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "cresp/agent.hpp"
#include "cresp/env.hpp"
#include "cresp/modules.hpp"
#include "cresp/probes.hpp"
#include "cresp/replay.hpp"

using namespace cresp;
using nn::Tensor;

namespace {

Tensor rand_rows(int r, int c, uint64_t seed, double scale = 1.0) {
  Tensor t = Tensor::zeros({r, c});
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

// episodes of chained random observations so replay continuity holds
void fill_buffer(ReplayBuffer& rb, int obs_dim, int act_dim, int episodes, int len, uint64_t seed,
                 std::function<double(Rng&)> reward = {}) {
  Rng rng(seed);
  for (int e = 0; e < episodes; ++e) {
    Observation o;
    o.shape = {obs_dim};
    o.data.resize(obs_dim);
    for (auto& v : o.data) v = rng.normal();
    for (int t = 0; t < len; ++t) {
      Observation o2;
      o2.shape = {obs_dim};
      o2.data.resize(obs_dim);
      for (auto& v : o2.data) v = rng.normal();
      std::vector<double> a(act_dim);
      for (auto& v : a) v = rng.uniform() * 2 - 1;
      const double r = reward ? reward(rng) : rng.uniform();
      rb.push(o, a, r, o2, t == len - 1, e % 2);
      o = o2;
    }
  }
}

AgentConfig small_cfg(Objective obj, int obs_dim = 6) {
  AgentConfig cfg;
  cfg.enc.kind = EncoderKind::Mlp;
  cfg.enc.obs_shape = {obs_dim};
  cfg.enc.repr_dim = 8;
  cfg.enc.hidden = 16;
  cfg.act_dim = 2;
  cfg.hidden = 16;
  cfg.batch = 16;
  cfg.aux_batch = 8;
  cfg.objective = obj;
  cfg.predictor = PredictorKind::Mlp;
  cfg.t_len = 2;
  cfg.kappa = 8;
  cfg.pred_hidden = 16;
  cfg.dropout = 0.0;
  cfg.augment = false;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("critic loss gradients flow through the encoder") {
  Rng rng(1);
  nn::ParamStore ps;
  EncoderConfig ec{EncoderKind::Mlp, {6}, 8, 16, 32};
  ActorCriticConfig ac{8, 2, 16, -5, 2};
  init_encoder(ps, ec, rng);
  init_critics(ps, ac, rng);
  Tensor obs = rand_rows(5, 6, 10);
  Tensor act = rand_rows(5, 2, 11, 0.5);
  Tensor y = rand_rows(5, 1, 12);
  auto rep = nn::finite_diff_check(
      [&] {
        Tensor z = encode(ps, ec, obs);
        auto [q1, q2] = critic_pair(ps, ac, z, act);
        Tensor d1 = nn::sub(q1, y), d2 = nn::sub(q2, y);
        return nn::add(nn::mean(nn::mul(d1, d1)), nn::mean(nn::mul(d2, d2)));
      },
      ps, 1e-5, 64, 5);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("conv encoder gradients flow") {
  Rng rng(2);
  nn::ParamStore ps;
  EncoderConfig ec{EncoderKind::Conv, {2, 9, 9}, 8, 16, 4};
  init_encoder(ps, ec, rng);
  Tensor obs = rand_rows(2, 2 * 9 * 9, 13, 0.5);
  Tensor w = rand_rows(8, 1, 14);
  auto rep = nn::finite_diff_check(
      [&] {
        Tensor z = encode(ps, ec, obs);
        return nn::mean(nn::mul(nn::matmul(z, w), nn::matmul(z, w)));
      },
      ps, 1e-5, 48, 6);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("characteristic losses backprop through encoder and both predictors") {
  Rng rng(3);
  OmegaBatch om = sample_omegas(4, 2, rng);
  std::vector<std::vector<double>> rseqs = {{1, 0}, {0.5, -1}, {0, 0.25}};
  CfTargets targets = cf_targets(om, rseqs, 0.95);
  Tensor obs = rand_rows(3, 6, 20);
  Tensor aseq = rand_rows(3, 4, 21, 0.5);

  for (PredictorKind kind : {PredictorKind::Mlp, PredictorKind::Transformer}) {
    nn::ParamStore ps;
    EncoderConfig ec{EncoderKind::Mlp, {6}, 8, 16, 32};
    PredictorConfig pc{kind, 8, 2, 2, 2, 16, 8, 2, 16, 0.0};
    init_encoder(ps, ec, rng);
    init_predictor(ps, pc, rng);
    Rng drop(0);
    auto build = [&](int which) {
      return std::function<Tensor()>([&ps, &ec, &pc, &obs, &aseq, &om, &targets, &drop, which] {
        Tensor z = encode(ps, ec, obs);
        CfPred pred = predict_cf(ps, pc, z, aseq, om.omegas, true, drop);
        if (which == 0) return wse_loss(pred.cos_p, pred.sin_p, targets);
        if (which == 1) return scs_loss(pred.cos_p, pred.sin_p, targets);
        return combined_loss(pred.cos_p, pred.sin_p, targets, 0.5);
      });
    };
    for (int which = 0; which < 3; ++which) {
      auto rep = nn::finite_diff_check(build(which), ps, 1e-5, 48, 7 + which);
      CAPTURE((int)kind);
      CAPTURE(which);
      CAPTURE(rep.worst_name);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("reward regression and contrastive losses backprop") {
  Rng rng(4);
  nn::ParamStore ps;
  EncoderConfig ec{EncoderKind::Mlp, {6}, 8, 16, 32};
  init_encoder(ps, ec, rng);
  init_reward_head(ps, 8, 2, 2, 16, 2, rng);
  init_tdp(ps, 8, rng);
  Tensor obs = rand_rows(4, 6, 30);
  Tensor aseq = rand_rows(4, 4, 31, 0.5);
  Tensor rtar = rand_rows(4, 2, 32);
  Tensor znext = rand_rows(4, 8, 33, 0.3);

  auto rep1 = nn::finite_diff_check(
      [&] {
        Tensor z = encode(ps, ec, obs);
        Tensor d = nn::sub(reward_head(ps, z, aseq), rtar);
        return nn::mean(nn::mul(d, d));
      },
      ps, 1e-5, 48, 8);
  CHECK(rep1.max_rel_err < 1e-4);

  auto rep2 = nn::finite_diff_check(
      [&] { return tdp_infonce(ps, encode(ps, ec, obs), znext); }, ps, 1e-5, 48, 9);
  CHECK(rep2.max_rel_err < 1e-4);
}

TEST_CASE("bisimulation composite backprops with frozen pair targets") {
  Rng rng(5);
  nn::ParamStore ps;
  EncoderConfig ec{EncoderKind::Mlp, {6}, 8, 16, 32};
  init_encoder(ps, ec, rng);
  init_reward_head(ps, 8, 2, 2, 16, 2, rng);
  init_tdp(ps, 8, rng);
  init_bm(ps, 8, 2, 2, 16, rng);
  const int b = 4;
  Tensor obs = rand_rows(b, 6, 40);
  Tensor aseq = rand_rows(b, 4, 41, 0.5);
  Tensor rtar = rand_rows(b, 2, 42);
  Tensor sums = rand_rows(b, 1, 43);
  Tensor znext = rand_rows(b, 8, 44, 0.3);

  // pair targets from the current values, then held fixed
  Tensor bis_target = Tensor::zeros({b, 1});
  {
    BmOut bm = bm_forward(ps, encode(ps, ec, obs), aseq);
    for (int i = 0; i < b; ++i) {
      const int j = (i + 1) % b;
      double w2 = 0;
      for (int k = 0; k < 8; ++k) {
        const double dmu = bm.mu.data()[i * 8 + k] - bm.mu.data()[j * 8 + k];
        const double ds = bm.std_dev.data()[i * 8 + k] - bm.std_dev.data()[j * 8 + k];
        w2 += dmu * dmu + ds * ds;
      }
      bis_target.data()[i] =
          std::fabs(bm.rhat.data()[i] - bm.rhat.data()[j]) + 0.99 * std::sqrt(w2);
    }
  }
  auto rep = nn::finite_diff_check(
      [&] {
        Tensor z = encode(ps, ec, obs);
        Tensor d = nn::sub(reward_head(ps, z, aseq), rtar);
        Tensor loss = nn::add(nn::mean(nn::mul(d, d)), tdp_infonce(ps, z, znext));
        BmOut bm = bm_forward(ps, z, aseq);
        Tensor dr = nn::sub(bm.rhat, sums);
        loss = nn::add(loss, nn::mean(nn::mul(dr, dr)));
        Tensor dn = nn::div_t(nn::sub(znext, bm.mu), bm.std_dev);
        loss = nn::add(loss,
                       nn::mean(nn::add(nn::scale(nn::mul(dn, dn), 0.5), nn::log_t(bm.std_dev))));
        std::vector<int> shift = {1, 2, 3, 0};
        Tensor dz = nn::sum_axis(nn::abs_t(nn::sub(z, nn::gather_rows(z, shift))), 1);
        Tensor db = nn::sub(dz, bis_target);
        return nn::add(loss, nn::mean(nn::mul(db, db)));
      },
      ps, 1e-5, 48, 10);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("contrastive loss at zero coupling is log batch size") {
  Rng rng(6);
  nn::ParamStore ps;
  init_tdp(ps, 4, rng);
  for (int64_t i = 0; i < ps.at("tdp.w").numel(); ++i) ps.at("tdp.w").data()[i] = 0.0;
  Tensor za = rand_rows(2, 4, 50);
  Tensor zb = rand_rows(2, 4, 51);
  CHECK(tdp_infonce(ps, za, zb).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor za5 = rand_rows(5, 4, 52);
  Tensor zb5 = rand_rows(5, 4, 53);
  CHECK(tdp_infonce(ps, za5, zb5).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("sampled action log density matches the closed form at zero weights") {
  Rng rng(7);
  nn::ParamStore ps;
  ActorCriticConfig ac{4, 2, 8, -5, 2};
  init_actor(ps, ac, rng);
  for (const auto& name : ps.names())
    for (int64_t i = 0; i < ps.at(name).numel(); ++i) ps.at(name).data()[i] = 0.0;
  // trunk output is zero everywhere: mu = 0, log_std = midpoint of the range
  const double log_std = -1.5, sigma = std::exp(log_std);
  Tensor z = rand_rows(3, 4, 60);
  Rng sample_rng(777), replay_rng(777);
  ActorSample s = actor_sample(ps, ac, z, sample_rng);
  for (int i = 0; i < 3; ++i) {
    double want = 0;
    for (int j = 0; j < 2; ++j) {
      const double eps = replay_rng.normal();
      const double a = std::tanh(sigma * eps);
      CHECK(s.a.data()[i * 2 + j] == doctest::Approx(a).epsilon(1e-12));
      want += -0.5 * eps * eps - 0.5 * std::log(2 * 3.14159265358979323846) - log_std -
              std::log(1.0 + 1e-6 - a * a);
    }
    CHECK(s.logp.data()[i] == doctest::Approx(want).epsilon(1e-10));
    CHECK(s.mean_a.data()[i * 2] == 0.0);
  }
}

TEST_CASE("random shift stays within bounds and uses edge padding") {
  Rng rng(8);
  std::vector<double> img(9);
  for (int i = 0; i < 9; ++i) img[i] = i;
  auto shifted_by = [&](int dr, int dc) {
    std::vector<double> out(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        const int sr = std::clamp(r + dr, 0, 2), sc = std::clamp(c + dc, 0, 2);
        out[r * 3 + c] = img[sr * 3 + sc];
      }
    return out;
  };
  std::set<std::pair<int, int>> seen;
  for (int trial = 0; trial < 300; ++trial) {
    auto out = shift_augment(img, 1, 3, 3, 1, rng);
    bool matched = false;
    for (int dr = -1; dr <= 1 && !matched; ++dr)
      for (int dc = -1; dc <= 1 && !matched; ++dc)
        if (out == shifted_by(dr, dc)) {
          matched = true;
          seen.insert({dr, dc});
        }
    REQUIRE(matched);
  }
  CHECK(seen.size() == 9);
  // multi-channel shift moves every channel together
  std::vector<double> two(18);
  for (int i = 0; i < 18; ++i) two[i] = i;
  Rng rng2(9);
  auto out2 = shift_augment(two, 2, 3, 3, 1, rng2);
  bool consistent = false;
  for (int dr = -1; dr <= 1 && !consistent; ++dr)
    for (int dc = -1; dc <= 1 && !consistent; ++dc) {
      bool ok = true;
      for (int ch = 0; ch < 2; ++ch)
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            const int sr = std::clamp(r + dr, 0, 2), sc = std::clamp(c + dc, 0, 2);
            ok &= out2[ch * 9 + r * 3 + c] == two[ch * 9 + sr * 3 + sc];
          }
      consistent |= ok;
    }
  CHECK(consistent);
}

TEST_CASE("agent actions are bounded and deterministic mode ignores the rng") {
  Agent agent(small_cfg(Objective::CrespT));
  Observation o;
  o.shape = {6};
  o.data = {0.1, -0.2, 0.3, 0.0, 1.0, -1.0};
  Rng r1(1), r2(2);
  auto a1 = agent.act(o, true, r1);
  auto a2 = agent.act(o, true, r2);
  REQUIRE(a1.size() == 2);
  CHECK(a1 == a2);
  for (double v : a1) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
  Rng r3(5), r4(5);
  CHECK(agent.act(o, false, r3) == agent.act(o, false, r4));
}

TEST_CASE("zero discount regresses the critic onto the rewards") {
  AgentConfig cfg = small_cfg(Objective::None, 4);
  cfg.gamma = 0.0;
  cfg.lr = 3e-3;
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 4, 2, 4, 25, 202, [](Rng&) { return 0.7; });
  double last = 0;
  for (int i = 0; i < 200; ++i) last = agent.sac_update(rb);
  CHECK(last < 0.05);
  CHECK(agent.alpha() > 0.0);
}

TEST_CASE("temperature falls while entropy exceeds its target") {
  AgentConfig cfg = small_cfg(Objective::None, 4);
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 4, 2, 4, 25, 203);
  const double a0 = agent.alpha();
  for (int i = 0; i < 60; ++i) agent.sac_update(rb);
  CHECK(agent.alpha() < a0);
  CHECK(agent.alpha() > 0.0);
}

TEST_CASE("target networks update only at their cadence") {
  AgentConfig cfg = small_cfg(Objective::None, 4);
  cfg.critic_target_update_freq = 2;
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 4, 2, 2, 20, 204);
  const uint64_t tgt0 = agent.critic_target_store().value_hash();
  const uint64_t enc_tgt0 = agent.enc_target_store().value_hash();
  agent.sac_update(rb);
  CHECK(agent.critic_target_store().value_hash() == tgt0);
  CHECK(agent.enc_target_store().value_hash() == enc_tgt0);
  agent.sac_update(rb);
  CHECK(agent.critic_target_store().value_hash() != tgt0);
  CHECK(agent.enc_target_store().value_hash() != enc_tgt0);
}

TEST_CASE("full polyak keeps targets glued to the online nets") {
  AgentConfig cfg = small_cfg(Objective::None, 4);
  cfg.tau = 1.0;
  cfg.critic_target_update_freq = 1;
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 4, 2, 2, 20, 205);
  for (int i = 0; i < 3; ++i) {
    agent.sac_update(rb);
    CHECK(agent.critic_target_store().value_hash() == agent.critic_store().value_hash());
    CHECK(agent.enc_target_store().value_hash() == agent.enc_store().value_hash());
  }
}

TEST_CASE("scalar frequency on the discounted sum equals the length-one objective") {
  AgentConfig ca = small_cfg(Objective::Cresp);
  ca.t_len = 1;
  AgentConfig cb = ca;
  cb.objective = Objective::CrespSum;
  Agent a(ca), bagent(cb);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 6, 2, 4, 20, 206);
  for (int i = 0; i < 3; ++i) {
    const double la = a.aux_update(rb);
    const double lb = bagent.aux_update(rb);
    CHECK(std::fabs(la - lb) <= 1e-12);
  }
}

TEST_CASE("the bare objective leaves every store untouched") {
  Agent agent(small_cfg(Objective::None));
  ReplayBuffer rb(1000);
  fill_buffer(rb, 6, 2, 2, 20, 207);
  const uint64_t enc0 = agent.enc_store().value_hash();
  CHECK(agent.aux_update(rb) == 0.0);
  CHECK(agent.enc_store().value_hash() == enc0);
}

TEST_CASE("reward regression overfits a frozen buffer") {
  AgentConfig cfg = small_cfg(Objective::Rsp);
  cfg.lr = 3e-3;
  cfg.t_len = 1;
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 6, 2, 1, 9, 208, [](Rng&) { return 0.25; });
  double loss = 1;
  for (int i = 0; i < 300; ++i) loss = agent.aux_update(rb);
  CHECK(loss < 1e-2);
}

TEST_CASE("characteristic prediction overfits a deterministic segment") {
  AgentConfig cfg = small_cfg(Objective::CrespT);
  cfg.lr = 3e-3;
  cfg.t_len = 1;
  cfg.kappa = 32;
  cfg.pred_hidden = 64;
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  // one episode, constant observation and reward, zero actions
  Observation o;
  o.shape = {6};
  o.data.assign(6, 0.5);
  for (int t = 0; t < 9; ++t) rb.push(o, {0.0, 0.0}, 1.0, o, t == 8, 0);
  double loss = 1;
  for (int i = 0; i < 700; ++i) loss = agent.aux_update(rb);
  // squared error term near zero, similarity term near -1, weighted by 0.5
  CHECK(loss < -0.2);
}

TEST_CASE("agent checkpoints restore bit-exact state") {
  AgentConfig cfg = small_cfg(Objective::RdpBm);
  Agent agent(cfg);
  ReplayBuffer rb(1000);
  fill_buffer(rb, 6, 2, 4, 20, 209);
  for (int i = 0; i < 5; ++i) agent.update(rb);
  CheckpointWriter w;
  agent.save(w);
  w.write("agent_ckpt_test.bin");
  Agent agent2(cfg);
  CheckpointReader r("agent_ckpt_test.bin");
  agent2.load(r);
  CHECK(agent2.enc_store().value_hash() == agent.enc_store().value_hash());
  CHECK(agent2.actor_store().value_hash() == agent.actor_store().value_hash());
  CHECK(agent2.critic_store().value_hash() == agent.critic_store().value_hash());
  CHECK(agent2.aux_store().value_hash() == agent.aux_store().value_hash());
  CHECK(agent2.critic_target_store().value_hash() == agent.critic_target_store().value_hash());
  // identical continued updates
  auto s1 = agent.update(rb);
  auto s2 = agent2.update(rb);
  CHECK(s1.critic_loss == s2.critic_loss);
  CHECK(s1.aux_loss == s2.aux_loss);
  CHECK(agent2.enc_store().value_hash() == agent.enc_store().value_hash());
  std::remove("agent_ckpt_test.bin");
}

TEST_CASE("every auxiliary objective trains the encoder") {
  for (Objective obj : {Objective::Cresp, Objective::CrespT, Objective::CrespSum, Objective::Rsp,
                        Objective::RspSum, Objective::Tdp, Objective::Rdp, Objective::RdpBm}) {
    AgentConfig cfg = small_cfg(obj);
    if (obj == Objective::CrespT) cfg.predictor = PredictorKind::Transformer;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.dropout = obj == Objective::CrespT ? 0.1 : 0.0;
    Agent agent(cfg);
    ReplayBuffer rb(1000);
    fill_buffer(rb, 6, 2, 4, 20, 210);
    const uint64_t enc0 = agent.enc_store().value_hash();
    const double loss = agent.aux_update(rb);
    CHECK(std::isfinite(loss));
    CHECK(agent.enc_store().value_hash() != enc0);
  }
}

// ---- probes ---------------------------------------------------------------

TEST_CASE("classifier probe separates oracle features from noise") {
  Rng rng(70);
  const int n = 400, n_labels = 4;
  std::vector<std::vector<double>> oracle(n), noise(n);
  std::vector<int> labels(n);
  std::vector<int> train_idx, eval_idx;
  for (int i = 0; i < n; ++i) {
    labels[i] = (int)rng.uniform_int(n_labels);
    oracle[i].assign(n_labels, 0.0);
    oracle[i][labels[i]] = 1.0;
    noise[i].resize(n_labels);
    for (auto& v : noise[i]) v = rng.normal();
    (i % 5 == 4 ? eval_idx : train_idx).push_back(i);
  }
  ProbeOptions opt;
  opt.hidden = 64;
  ProbeResult good = train_classifier_probe(oracle, labels, n_labels, train_idx, eval_idx, 5, opt);
  ProbeResult bad = train_classifier_probe(noise, labels, n_labels, train_idx, eval_idx, 5, opt);
  CHECK(good.best_eval < 0.3);
  CHECK(bad.best_eval > std::log(4.0) - 0.3);
  CHECK(good.best_eval < bad.best_eval);
  CHECK(good.best_epoch >= 0);
}

TEST_CASE("regressor probe recovers identity features") {
  Rng rng(71);
  const int n = 400;
  std::vector<std::vector<double>> feats(n), noise(n);
  std::vector<std::vector<double>> targets(n);
  std::vector<int> train_idx, eval_idx;
  double var = 0;
  for (int i = 0; i < n; ++i) {
    targets[i] = {rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
    feats[i] = targets[i];
    noise[i] = {rng.normal(), rng.normal()};
    for (double v : targets[i]) var += v * v / (2 * n);
    (i % 5 == 4 ? eval_idx : train_idx).push_back(i);
  }
  ProbeOptions opt;
  opt.hidden = 64;
  ProbeResult good = train_regressor_probe(feats, targets, train_idx, eval_idx, 6, opt);
  ProbeResult bad = train_regressor_probe(noise, targets, train_idx, eval_idx, 6, opt);
  CHECK(good.best_eval < 0.03);
  CHECK(bad.best_eval > 0.5 * var);
}

TEST_CASE("probe data collection is balanced and leaves the encoder frozen") {
  EnvSpec spec;
  spec.family = Family::Grid;
  spec.seed = 33;
  spec.episode_len = 25;
  EnvFamily family = spawn_family(spec, 2, 0);
  AgentConfig cfg = small_cfg(Objective::None, 3 * 81);
  Agent agent(cfg);
  const uint64_t enc0 = agent.enc_store().value_hash();

  std::vector<Env*> envs = {family.train[0].get(), family.train[1].get()};
  Rng rng(72);
  ProbeDataset ds = collect_probe_dataset(agent, envs, 200, rng);
  CHECK(ds.z.size() == 200);
  CHECK(ds.env_label.size() == 200);
  CHECK(ds.n_env_labels == 2);
  CHECK(ds.n_latent_labels == 81);
  int env0 = 0;
  for (int e : ds.env_label) env0 += e == 0;
  CHECK(env0 == 100);
  CHECK(ds.train_idx.size() == 160);
  CHECK(ds.eval_idx.size() == 40);
  std::set<int> seen(ds.train_idx.begin(), ds.train_idx.end());
  for (int i : ds.eval_idx) CHECK(seen.count(i) == 0);
  for (int lab : ds.latent_label) {
    CHECK(lab >= 0);
    CHECK(lab < 81);
  }

  ProbeOptions opt;
  opt.epochs = 10;
  opt.eval_every = 5;
  opt.hidden = 32;
  ProbeResult env_probe = train_env_label_probe(ds, 7, opt);
  ProbeResult lat_probe = train_latent_probe(ds, 7, opt);
  CHECK(std::isfinite(env_probe.best_eval));
  CHECK(std::isfinite(lat_probe.best_eval));
  CHECK(agent.enc_store().value_hash() == enc0);
}

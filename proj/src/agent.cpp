#include "cresp/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace cresp {

using nn::Tensor;

Objective objective_from_string(const std::string& s) {
  if (s == "CRESP") return Objective::Cresp;
  if (s == "CRESP_T") return Objective::CrespT;
  if (s == "CRESP_SUM") return Objective::CrespSum;
  if (s == "RSP") return Objective::Rsp;
  if (s == "RSP_SUM") return Objective::RspSum;
  if (s == "TDP") return Objective::Tdp;
  if (s == "RDP") return Objective::Rdp;
  if (s == "RDP_BM") return Objective::RdpBm;
  if (s == "NONE") return Objective::None;
  throw std::invalid_argument("unknown objective: " + s);
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::Cresp: return "CRESP";
    case Objective::CrespT: return "CRESP_T";
    case Objective::CrespSum: return "CRESP_SUM";
    case Objective::Rsp: return "RSP";
    case Objective::RspSum: return "RSP_SUM";
    case Objective::Tdp: return "TDP";
    case Objective::Rdp: return "RDP";
    case Objective::RdpBm: return "RDP_BM";
    case Objective::None: return "NONE";
  }
  throw std::runtime_error("bad objective");
}

namespace {

Tensor elem_min(const Tensor& a, const Tensor& b) {
  return nn::scale(nn::sub(nn::add(a, b), nn::abs_t(nn::sub(a, b))), 0.5);
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  Tensor d = nn::sub(pred, target);
  return nn::mean(nn::mul(d, d));
}

double discounted_sum(const std::vector<double>& rewards, double gamma) {
  std::vector<double> ones(rewards.size(), 1.0);
  return discounted_inner(ones, rewards, gamma);
}

}  // namespace

Agent::Agent(const AgentConfig& cfg) : cfg_(cfg) {
  if (cfg.t_len < 1 || cfg.kappa < 1) throw std::invalid_argument("agent: t_len and kappa must be >= 1");
  if (cfg.tau <= 0 || cfg.tau > 1) throw std::invalid_argument("agent: tau must be in (0,1]");
  if (cfg.log_std_min >= cfg.log_std_max) throw std::invalid_argument("agent: log_std bounds out of order");
  ac_ = ActorCriticConfig{cfg.enc.repr_dim, cfg.act_dim, cfg.hidden, cfg.log_std_min, cfg.log_std_max};
  pred_ = PredictorConfig{cfg.predictor,
                          cfg.enc.repr_dim,
                          cfg.act_dim,
                          cfg.t_len,
                          cfg.objective == Objective::CrespSum ? 1 : cfg.t_len,
                          cfg.pred_hidden,
                          cfg.d_model,
                          cfg.n_heads,
                          cfg.d_ff,
                          cfg.dropout};
  adam_ = nn::AdamConfig{};
  adam_.lr = cfg.lr;

  Rng init_rng(Rng::derive(cfg.seed, "init", 0));
  update_rng_ = Rng(Rng::derive(cfg.seed, "update", 0));

  init_encoder(enc_, cfg_.enc, init_rng);
  init_actor(actor_, ac_, init_rng);
  init_critics(critic_, ac_, init_rng);
  init_alpha(alpha_, cfg.init_temperature);

  switch (cfg.objective) {
    case Objective::Cresp:
    case Objective::CrespT:
    case Objective::CrespSum:
      init_predictor(aux_, pred_, init_rng);
      break;
    case Objective::Rsp:
      init_reward_head(aux_, cfg.enc.repr_dim, cfg.act_dim, cfg.t_len, cfg.pred_hidden, cfg.t_len, init_rng);
      break;
    case Objective::RspSum:
      init_reward_head(aux_, cfg.enc.repr_dim, cfg.act_dim, cfg.t_len, cfg.pred_hidden, 1, init_rng);
      break;
    case Objective::Tdp:
      init_tdp(aux_, cfg.enc.repr_dim, init_rng);
      break;
    case Objective::Rdp:
      init_reward_head(aux_, cfg.enc.repr_dim, cfg.act_dim, cfg.t_len, cfg.pred_hidden, cfg.t_len, init_rng);
      init_tdp(aux_, cfg.enc.repr_dim, init_rng);
      break;
    case Objective::RdpBm:
      init_reward_head(aux_, cfg.enc.repr_dim, cfg.act_dim, cfg.t_len, cfg.pred_hidden, cfg.t_len, init_rng);
      init_tdp(aux_, cfg.enc.repr_dim, init_rng);
      init_bm(aux_, cfg.enc.repr_dim, cfg.act_dim, cfg.t_len, cfg.pred_hidden, init_rng);
      break;
    case Objective::None:
      break;
  }

  Rng tgt_rng(Rng::derive(cfg.seed, "init", 1));
  init_encoder(enc_tgt_, cfg_.enc, tgt_rng);
  init_critics(critic_tgt_, ac_, tgt_rng);
  enc_tgt_.copy_values_from(enc_);
  critic_tgt_.copy_values_from(critic_);
}

nn::Tensor Agent::obs_rows_flat(const std::vector<std::vector<double>>& flats, bool augment) {
  const auto& shape = cfg_.enc.obs_shape;
  const int64_t n = flats.empty() ? 0 : static_cast<int64_t>(flats[0].size());
  Tensor rows = Tensor::zeros({static_cast<int>(flats.size()), static_cast<int>(n)});
  const bool aug = augment && cfg_.augment && shape.size() == 3 && cfg_.max_shift > 0;
  for (size_t i = 0; i < flats.size(); ++i) {
    if (static_cast<int64_t>(flats[i].size()) != n) throw std::invalid_argument("agent: ragged observation batch");
    if (aug) {
      auto shifted = shift_augment(flats[i], shape[0], shape[1], shape[2], cfg_.max_shift, update_rng_);
      std::copy(shifted.begin(), shifted.end(), rows.data() + static_cast<int64_t>(i) * n);
    } else {
      std::copy(flats[i].begin(), flats[i].end(), rows.data() + static_cast<int64_t>(i) * n);
    }
  }
  return rows;
}

nn::Tensor Agent::obs_rows(const std::vector<Observation>& obs, bool augment) {
  std::vector<std::vector<double>> flats;
  flats.reserve(obs.size());
  for (const auto& o : obs) flats.push_back(o.data);
  return obs_rows_flat(flats, augment);
}

std::vector<double> Agent::act(const Observation& o, bool deterministic, Rng& rng) {
  Tensor row = obs_rows({o}, false);
  Tensor z = encode(enc_, cfg_.enc, row);
  Tensor a = deterministic ? actor_mean(actor_, ac_, z) : actor_sample(actor_, ac_, z, rng).a;
  return std::vector<double>(a.data(), a.data() + a.numel());
}

double Agent::alpha() const { return std::exp(alpha_.at("alpha.log").data()[0]); }

nn::Tensor Agent::encode_batch(const std::vector<Observation>& obs) {
  return encode(enc_, cfg_.enc, obs_rows(obs, false));
}

double Agent::sac_update(ReplayBuffer& buf) {
  auto batch = buf.sample_transitions(cfg_.batch, update_rng_);
  const int b = static_cast<int>(batch.size());
  std::vector<std::vector<double>> o1(b), o2(b);
  Tensor a_rows = Tensor::zeros({b, cfg_.act_dim});
  std::vector<double> rewards(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    o1[static_cast<size_t>(i)] = batch[static_cast<size_t>(i)].o.data;
    o2[static_cast<size_t>(i)] = batch[static_cast<size_t>(i)].o2.data;
    rewards[static_cast<size_t>(i)] = batch[static_cast<size_t>(i)].r;
    for (int j = 0; j < cfg_.act_dim; ++j)
      a_rows.data()[static_cast<int64_t>(i) * cfg_.act_dim + j] = batch[static_cast<size_t>(i)].a[static_cast<size_t>(j)];
  }
  Tensor o1_rows = obs_rows_flat(o1, true);
  Tensor o2_rows = obs_rows_flat(o2, true);

  // bootstrap target, tape-free (episodes end only by time limit)
  const double alpha_now = alpha();
  Tensor y = Tensor::zeros({b, 1});
  {
    Tensor z2 = encode(enc_tgt_, cfg_.enc, o2_rows);
    ActorSample pi2 = actor_sample(actor_, ac_, z2, update_rng_);
    auto [q1t, q2t] = critic_pair(critic_tgt_, ac_, z2, pi2.a);
    for (int i = 0; i < b; ++i) {
      const double qmin = std::min(q1t.data()[i], q2t.data()[i]);
      y.data()[i] = rewards[static_cast<size_t>(i)] + cfg_.gamma * (qmin - alpha_now * pi2.logp.data()[i]);
    }
  }

  double critic_loss_val = 0;
  {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    enc_.watch(tape);
    critic_.watch(tape);
    Tensor z = encode(enc_, cfg_.enc, o1_rows);
    auto [q1, q2] = critic_pair(critic_, ac_, z, a_rows);
    Tensor loss = nn::add(mse(q1, y), mse(q2, y));
    critic_loss_val = loss.item();
    tape.backward(loss);
    enc_.adam_step(tape, adam_);
    critic_.adam_step(tape, adam_);
  }

  sac_updates_ += 1;

  if (sac_updates_ % cfg_.actor_update_freq == 0) {
    Tensor logp_snapshot;
    {
      nn::Tape tape;
      nn::TapeScope scope(tape);
      actor_.watch(tape);
      Tensor z = encode(enc_, cfg_.enc, o1_rows);  // enc unwatched: constant input
      ActorSample pi = actor_sample(actor_, ac_, z, update_rng_);
      auto [q1, q2] = critic_pair(critic_, ac_, z, pi.a);
      Tensor loss = nn::mean(nn::sub(nn::scale(pi.logp, alpha_now), elem_min(q1, q2)));
      tape.backward(loss);
      actor_.adam_step(tape, adam_);
      logp_snapshot = nn::detach(pi.logp);
    }
    {
      nn::Tape tape;
      nn::TapeScope scope(tape);
      alpha_.watch(tape);
      const double target_entropy = -static_cast<double>(cfg_.act_dim);
      Tensor term = Tensor::zeros(logp_snapshot.shape);
      for (int64_t i = 0; i < term.numel(); ++i)
        term.data()[i] = -logp_snapshot.data()[i] - target_entropy;
      Tensor loss = nn::mean(nn::mul(term, alpha_value(alpha_)));
      tape.backward(loss);
      alpha_.adam_step(tape, adam_);
    }
  }

  if (sac_updates_ % cfg_.critic_target_update_freq == 0) {
    enc_tgt_.polyak_from(enc_, cfg_.tau);
    critic_tgt_.polyak_from(critic_, cfg_.tau);
  }
  return critic_loss_val;
}

double Agent::aux_loss_and_step(const std::vector<TrajectorySegment>& segs) {
  const int b = static_cast<int>(segs.size());
  const int t_len = cfg_.t_len;
  std::vector<std::vector<double>> o1(static_cast<size_t>(b)), onext(static_cast<size_t>(b));
  Tensor aseq = Tensor::zeros({b, t_len * cfg_.act_dim});
  std::vector<std::vector<double>> rseqs(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    const auto& s = segs[static_cast<size_t>(i)];
    if (static_cast<int>(s.actions.size()) != t_len) throw std::invalid_argument("aux: segment length mismatch");
    o1[static_cast<size_t>(i)] = s.o_start.data;
    onext[static_cast<size_t>(i)] = s.o_next_T.data;
    rseqs[static_cast<size_t>(i)] = s.rewards;
    for (int t = 0; t < t_len; ++t)
      for (int j = 0; j < cfg_.act_dim; ++j)
        aseq.data()[(static_cast<int64_t>(i) * t_len + t) * cfg_.act_dim + j] = s.actions[static_cast<size_t>(t)][static_cast<size_t>(j)];
  }
  Tensor o1_rows = obs_rows_flat(o1, true);

  const bool needs_next = cfg_.objective == Objective::Tdp || cfg_.objective == Objective::Rdp ||
                          cfg_.objective == Objective::RdpBm;
  Tensor znext;
  if (needs_next) znext = encode(enc_tgt_, cfg_.enc, obs_rows_flat(onext, true));

  nn::Tape tape;
  nn::TapeScope scope(tape);
  enc_.watch(tape);
  aux_.watch(tape);
  Tensor z = encode(enc_, cfg_.enc, o1_rows);
  Tensor loss;

  switch (cfg_.objective) {
    case Objective::Cresp:
    case Objective::CrespT: {
      OmegaBatch om = sample_omegas(cfg_.kappa, t_len, update_rng_);
      CfTargets targets = cf_targets(om, rseqs, cfg_.gamma);
      CfPred pred = predict_cf(aux_, pred_, z, aseq, om.omegas, true, update_rng_);
      loss = combined_loss(pred.cos_p, pred.sin_p, targets, cfg_.lambda);
      break;
    }
    case Objective::CrespSum: {
      OmegaBatch om = sample_omegas(cfg_.kappa, 1, update_rng_);
      CfTargets targets;
      targets.cos_t = Tensor::zeros({b, cfg_.kappa});
      targets.sin_t = Tensor::zeros({b, cfg_.kappa});
      for (int i = 0; i < b; ++i) {
        const double s = discounted_sum(rseqs[static_cast<size_t>(i)], cfg_.gamma);
        for (int j = 0; j < cfg_.kappa; ++j) {
          const double theta = om.omegas.data()[j] * s;
          targets.cos_t.data()[static_cast<int64_t>(i) * cfg_.kappa + j] = std::cos(theta);
          targets.sin_t.data()[static_cast<int64_t>(i) * cfg_.kappa + j] = std::sin(theta);
        }
      }
      CfPred pred = predict_cf(aux_, pred_, z, aseq, om.omegas, true, update_rng_);
      loss = combined_loss(pred.cos_p, pred.sin_p, targets, cfg_.lambda);
      break;
    }
    case Objective::Rsp:
    case Objective::RspSum: {
      Tensor target;
      if (cfg_.objective == Objective::Rsp) {
        target = Tensor::zeros({b, t_len});
        for (int i = 0; i < b; ++i)
          for (int t = 0; t < t_len; ++t)
            target.data()[static_cast<int64_t>(i) * t_len + t] = rseqs[static_cast<size_t>(i)][static_cast<size_t>(t)];
      } else {
        target = Tensor::zeros({b, 1});
        for (int i = 0; i < b; ++i) target.data()[i] = discounted_sum(rseqs[static_cast<size_t>(i)], cfg_.gamma);
      }
      loss = mse(reward_head(aux_, z, aseq), target);
      break;
    }
    case Objective::Tdp:
      loss = tdp_infonce(aux_, z, znext);
      break;
    case Objective::Rdp: {
      Tensor target = Tensor::zeros({b, t_len});
      for (int i = 0; i < b; ++i)
        for (int t = 0; t < t_len; ++t)
          target.data()[static_cast<int64_t>(i) * t_len + t] = rseqs[static_cast<size_t>(i)][static_cast<size_t>(t)];
      loss = nn::add(mse(reward_head(aux_, z, aseq), target), tdp_infonce(aux_, z, znext));
      break;
    }
    case Objective::RdpBm: {
      Tensor target = Tensor::zeros({b, t_len});
      Tensor sums = Tensor::zeros({b, 1});
      for (int i = 0; i < b; ++i) {
        sums.data()[i] = discounted_sum(rseqs[static_cast<size_t>(i)], cfg_.gamma);
        for (int t = 0; t < t_len; ++t)
          target.data()[static_cast<int64_t>(i) * t_len + t] = rseqs[static_cast<size_t>(i)][static_cast<size_t>(t)];
      }
      loss = nn::add(mse(reward_head(aux_, z, aseq), target), tdp_infonce(aux_, z, znext));

      BmOut bm = bm_forward(aux_, z, aseq);
      loss = nn::add(loss, mse(bm.rhat, sums));
      // Gaussian negative log likelihood of the target-encoder latent after T
      Tensor d = nn::div_t(nn::sub(znext, bm.mu), bm.std_dev);
      loss = nn::add(loss, nn::mean(nn::add(nn::scale(nn::mul(d, d), 0.5), nn::log_t(bm.std_dev))));

      // bisimulation regression against a shifted pairing, targets detached
      std::vector<int> shift(static_cast<size_t>(b));
      for (int i = 0; i < b; ++i) shift[static_cast<size_t>(i)] = (i + 1) % b;
      Tensor zj = nn::gather_rows(z, shift);
      Tensor dz = nn::sum_axis(nn::abs_t(nn::sub(z, zj)), 1);
      Tensor bis_target = Tensor::zeros({b, 1});
      for (int i = 0; i < b; ++i) {
        const int j = shift[static_cast<size_t>(i)];
        double w2 = 0;
        for (int k = 0; k < cfg_.enc.repr_dim; ++k) {
          const double dmu = bm.mu.data()[static_cast<int64_t>(i) * cfg_.enc.repr_dim + k] -
                             bm.mu.data()[static_cast<int64_t>(j) * cfg_.enc.repr_dim + k];
          const double ds = bm.std_dev.data()[static_cast<int64_t>(i) * cfg_.enc.repr_dim + k] -
                            bm.std_dev.data()[static_cast<int64_t>(j) * cfg_.enc.repr_dim + k];
          w2 += dmu * dmu + ds * ds;
        }
        bis_target.data()[i] = std::abs(bm.rhat.data()[i] - bm.rhat.data()[j]) + cfg_.gamma * std::sqrt(w2);
      }
      loss = nn::add(loss, mse(dz, bis_target));
      break;
    }
    case Objective::None:
      return 0.0;
  }

  const double loss_val = loss.item();
  tape.backward(loss);
  enc_.adam_step(tape, adam_);
  aux_.adam_step(tape, adam_);
  aux_updates_ += 1;
  return loss_val;
}

double Agent::aux_update(ReplayBuffer& buf) {
  if (cfg_.objective == Objective::None) return 0.0;
  auto segs = buf.sample_segments(cfg_.aux_batch, cfg_.t_len, update_rng_);
  return aux_loss_and_step(segs);
}

Agent::UpdateStats Agent::update(ReplayBuffer& buf) {
  UpdateStats st;
  st.critic_loss = sac_update(buf);
  st.aux_loss = aux_update(buf);
  st.alpha = alpha();
  return st;
}

void Agent::save(CheckpointWriter& w) const {
  enc_.save(w.section("agent.enc"));
  actor_.save(w.section("agent.actor"));
  critic_.save(w.section("agent.critic"));
  alpha_.save(w.section("agent.alpha"));
  aux_.save(w.section("agent.aux"));
  enc_tgt_.save(w.section("agent.enc_tgt"));
  critic_tgt_.save(w.section("agent.critic_tgt"));
  auto& meta = w.section("agent.meta");
  meta.write(reinterpret_cast<const char*>(&sac_updates_), sizeof sac_updates_);
  meta.write(reinterpret_cast<const char*>(&aux_updates_), sizeof aux_updates_);
  update_rng_.save(meta);
}

void Agent::load(CheckpointReader& r) {
  auto enc_in = r.open("agent.enc");
  enc_.load(enc_in);
  auto actor_in = r.open("agent.actor");
  actor_.load(actor_in);
  auto critic_in = r.open("agent.critic");
  critic_.load(critic_in);
  auto alpha_in = r.open("agent.alpha");
  alpha_.load(alpha_in);
  auto aux_in = r.open("agent.aux");
  aux_.load(aux_in);
  auto enc_tgt_in = r.open("agent.enc_tgt");
  enc_tgt_.load(enc_tgt_in);
  auto critic_tgt_in = r.open("agent.critic_tgt");
  critic_tgt_.load(critic_tgt_in);
  auto meta = r.open("agent.meta");
  if (!meta.read(reinterpret_cast<char*>(&sac_updates_), sizeof sac_updates_) ||
      !meta.read(reinterpret_cast<char*>(&aux_updates_), sizeof aux_updates_))
    throw std::runtime_error("agent checkpoint truncated");
  update_rng_.load(meta);
}

}  // namespace cresp

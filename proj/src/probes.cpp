#include "cresp/probes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cresp/params.hpp"

namespace cresp {

using nn::Tensor;

ProbeDataset collect_probe_dataset(Agent& agent, const std::vector<Env*>& envs, int n, Rng& rng) {
  if (n < 10) throw std::invalid_argument("probe dataset: need at least 10 transitions");
  if (envs.empty()) throw std::invalid_argument("probe dataset: no environments");
  ProbeDataset ds;
  const int per_env = n / static_cast<int>(envs.size());
  std::vector<Observation> pending;
  for (size_t e = 0; e < envs.size(); ++e) {
    Env* env = envs[e];
    int collected = 0;
    uint64_t episode = 0;
    Observation o;
    bool need_reset = true;
    while (collected < per_env) {
      if (need_reset) {
        o = env->reset(Rng::derive(rng.next_u64(), "probe_episode", episode++));
        need_reset = false;
      }
      pending.push_back(o);
      ds.latent_label.push_back(env->latent_label());
      ds.latent_vec.push_back(env->latent_vec());
      ds.env_label.push_back(static_cast<int>(e));
      auto a = agent.act(o, false, rng);
      auto sr = env->step(a);
      o = sr.obs;
      need_reset = sr.done;
      collected += 1;
    }
  }
  // encode in chunks
  const size_t chunk = 256;
  for (size_t i = 0; i < pending.size(); i += chunk) {
    std::vector<Observation> part(pending.begin() + static_cast<std::ptrdiff_t>(i),
                                  pending.begin() + static_cast<std::ptrdiff_t>(std::min(i + chunk, pending.size())));
    Tensor z = agent.encode_batch(part);
    const int d = z.shape[1];
    for (int r = 0; r < z.shape[0]; ++r)
      ds.z.emplace_back(z.data() + static_cast<int64_t>(r) * d, z.data() + static_cast<int64_t>(r + 1) * d);
  }
  ds.n_env_labels = static_cast<int>(envs.size());
  ds.n_latent_labels = envs[0]->spec().latent_label_count();

  std::vector<int> order(ds.z.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
  const size_t cut = order.size() * 4 / 5;
  ds.train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  ds.eval_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  return ds;
}

namespace {

Tensor rows_of(const std::vector<std::vector<double>>& data, const std::vector<int>& idx,
               size_t lo, size_t hi) {
  const int d = static_cast<int>(data[0].size());
  Tensor out = Tensor::zeros({static_cast<int>(hi - lo), d});
  for (size_t i = lo; i < hi; ++i) {
    const auto& row = data[static_cast<size_t>(idx[i])];
    std::copy(row.begin(), row.end(), out.data() + static_cast<int64_t>(i - lo) * d);
  }
  return out;
}

Tensor probe_forward(nn::ParamStore& p, const Tensor& x) {
  Tensor h = nn::relu(nn::add(nn::matmul(x, p.at("p.w1")), p.at("p.b1")));
  h = nn::relu(nn::add(nn::matmul(h, p.at("p.w2")), p.at("p.b2")));
  return nn::add(nn::matmul(h, p.at("p.w3")), p.at("p.b3"));
}

void init_probe(nn::ParamStore& p, int in, int hidden, int out, Rng& rng) {
  p.add("p.w1", {in, hidden}, std::sqrt(2.0 / in), &rng);
  p.add("p.b1", {1, hidden}, 0.0, nullptr);
  p.add("p.w2", {hidden, hidden}, std::sqrt(2.0 / hidden), &rng);
  p.add("p.b2", {1, hidden}, 0.0, nullptr);
  p.add("p.w3", {hidden, out}, std::sqrt(1.0 / hidden), &rng);
  p.add("p.b3", {1, out}, 0.0, nullptr);
}

Tensor ce_loss(const Tensor& logits, const std::vector<int>& labels) {
  const int b = logits.shape[0], k = logits.shape[1];
  Tensor mask = Tensor::zeros({b, k});
  for (int i = 0; i < b; ++i) mask.data()[static_cast<int64_t>(i) * k + labels[static_cast<size_t>(i)]] = 1.0;
  return nn::neg(nn::mean(nn::sum_axis(nn::mul(nn::log_softmax_rows(logits), mask), 1)));
}

template <typename LossOfBatch>
ProbeResult run_probe(const std::vector<std::vector<double>>& feats, int out_dim,
                      const std::vector<int>& train_idx, const std::vector<int>& eval_idx,
                      uint64_t seed, const ProbeOptions& opt, LossOfBatch loss_of) {
  if (train_idx.empty() || eval_idx.empty()) throw std::invalid_argument("probe: empty split");
  nn::ParamStore params;
  Rng rng(Rng::derive(seed, "probe", 0));
  init_probe(params, static_cast<int>(feats[0].size()), opt.hidden, out_dim, rng);
  nn::AdamConfig adam;
  adam.lr = opt.lr;

  auto eval_loss = [&]() {
    double total = 0;
    int64_t count = 0;
    const size_t chunk = 512;
    for (size_t lo = 0; lo < eval_idx.size(); lo += chunk) {
      const size_t hi = std::min(lo + chunk, eval_idx.size());
      Tensor x = rows_of(feats, eval_idx, lo, hi);
      Tensor l = loss_of(probe_forward(params, x), eval_idx, lo, hi);
      total += l.item() * static_cast<double>(hi - lo);
      count += static_cast<int64_t>(hi - lo);
    }
    return total / static_cast<double>(count);
  };

  ProbeResult best;
  best.best_eval = eval_loss();
  best.best_epoch = 0;
  std::vector<int> order = train_idx;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(opt.batch)) {
      const size_t hi = std::min(lo + static_cast<size_t>(opt.batch), order.size());
      nn::Tape tape;
      nn::TapeScope scope(tape);
      params.watch(tape);
      Tensor x = rows_of(feats, order, lo, hi);
      Tensor loss = loss_of(probe_forward(params, x), order, lo, hi);
      tape.backward(loss);
      params.adam_step(tape, adam);
    }
    if (epoch % opt.eval_every == 0 || epoch == opt.epochs) {
      const double e = eval_loss();
      if (e < best.best_eval) {
        best.best_eval = e;
        best.best_epoch = epoch;
      }
    }
  }
  return best;
}

}  // namespace

ProbeResult train_classifier_probe(const std::vector<std::vector<double>>& feats,
                                   const std::vector<int>& labels, int n_labels,
                                   const std::vector<int>& train_idx,
                                   const std::vector<int>& eval_idx, uint64_t seed,
                                   const ProbeOptions& opt) {
  if (n_labels < 2) throw std::invalid_argument("classifier probe: need at least 2 labels");
  return run_probe(feats, n_labels, train_idx, eval_idx, seed, opt,
                   [&](const Tensor& logits, const std::vector<int>& idx, size_t lo, size_t hi) {
                     std::vector<int> batch_labels;
                     batch_labels.reserve(hi - lo);
                     for (size_t i = lo; i < hi; ++i) batch_labels.push_back(labels[static_cast<size_t>(idx[i])]);
                     return ce_loss(logits, batch_labels);
                   });
}

ProbeResult train_regressor_probe(const std::vector<std::vector<double>>& feats,
                                  const std::vector<std::vector<double>>& targets,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& eval_idx, uint64_t seed,
                                  const ProbeOptions& opt) {
  const int out = static_cast<int>(targets[0].size());
  return run_probe(feats, out, train_idx, eval_idx, seed, opt,
                   [&](const Tensor& pred, const std::vector<int>& idx, size_t lo, size_t hi) {
                     Tensor t = rows_of(targets, idx, lo, hi);
                     Tensor d = nn::sub(pred, t);
                     return nn::mean(nn::mul(d, d));
                   });
}

ProbeResult train_env_label_probe(const ProbeDataset& ds, uint64_t seed, const ProbeOptions& opt) {
  if (ds.n_env_labels < 2) throw std::invalid_argument("env label probe: need at least 2 environments");
  return train_classifier_probe(ds.z, ds.env_label, ds.n_env_labels, ds.train_idx, ds.eval_idx,
                                seed, opt);
}

ProbeResult train_latent_probe(const ProbeDataset& ds, uint64_t seed, const ProbeOptions& opt) {
  if (ds.n_latent_labels > 0)
    return train_classifier_probe(ds.z, ds.latent_label, ds.n_latent_labels, ds.train_idx,
                                  ds.eval_idx, seed, opt);
  return train_regressor_probe(ds.z, ds.latent_vec, ds.train_idx, ds.eval_idx, seed, opt);
}

}  // namespace cresp

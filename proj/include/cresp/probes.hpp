#pragma once
#include <vector>

#include "cresp/agent.hpp"
#include "cresp/env.hpp"
#include "cresp/rng.hpp"

namespace cresp {

struct ProbeDataset {
  std::vector<std::vector<double>> z;
  std::vector<int> latent_label;               // -1 entries when latents are continuous
  std::vector<std::vector<double>> latent_vec;
  std::vector<int> env_label;
  std::vector<int> train_idx, eval_idx;        // disjoint 80/20 split
  int n_env_labels = 0;
  int n_latent_labels = 0;                     // 0 selects regression probes
};

// Roll the agent's stochastic policy in every listed env, n transitions total
// split evenly, and encode each visited observation once.
ProbeDataset collect_probe_dataset(Agent& agent, const std::vector<Env*>& envs, int n, Rng& rng);

struct ProbeResult {
  double best_eval = 0;
  int best_epoch = -1;
};

struct ProbeOptions {
  int epochs = 60;
  int eval_every = 10;
  int batch = 128;
  int hidden = 256;
  double lr = 1e-3;
};

// 3-layer MLP probes on frozen features. Classification reports eval cross
// entropy, regression reports eval MSE; the best checkpointed value over the
// eval cadence is returned.
ProbeResult train_classifier_probe(const std::vector<std::vector<double>>& feats,
                                   const std::vector<int>& labels, int n_labels,
                                   const std::vector<int>& train_idx,
                                   const std::vector<int>& eval_idx, uint64_t seed,
                                   const ProbeOptions& opt = {});
ProbeResult train_regressor_probe(const std::vector<std::vector<double>>& feats,
                                  const std::vector<std::vector<double>>& targets,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& eval_idx, uint64_t seed,
                                  const ProbeOptions& opt = {});

// Lower = more environment (task-irrelevant) information in z.
ProbeResult train_env_label_probe(const ProbeDataset& ds, uint64_t seed,
                                  const ProbeOptions& opt = {});
// Lower = more latent (task-relevant) information in z.
ProbeResult train_latent_probe(const ProbeDataset& ds, uint64_t seed,
                               const ProbeOptions& opt = {});

}  // namespace cresp

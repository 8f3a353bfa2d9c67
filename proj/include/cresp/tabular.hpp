#pragma once
#include <complex>
#include <vector>

#include "cresp/rng.hpp"

namespace cresp {

// Finite POMDP core: latent MDP with a finite reward support; reward and next
// state are drawn independently given (s, a). Observation layers live in the
// env module; everything here works on the latent chain directly.
struct TabularPOMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> reward_support;  // nR values
  std::vector<double> reward_prob;     // [s][a][k], rows sum to 1
  std::vector<double> trans;           // [s][a][s'], rows sum to 1
  double gamma = 0.9;
  double reward_bound = 1.0;  // rbar >= max |r|

  int n_rewards() const { return static_cast<int>(reward_support.size()); }
  double rp(int s, int a, int k) const {
    return reward_prob[(static_cast<size_t>(s) * n_actions + a) * n_rewards() + k];
  }
  double tp(int s, int a, int s2) const {
    return trans[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
  }
  double expected_reward(int s, int a) const;
  void validate() const;  // rows sum to 1, gamma in (0,1), bound covers support
};

TabularPOMDP random_pomdp(Rng& rng, int n_states, int n_actions, int n_rewards, double gamma);

struct RewardSeqDistribution {
  std::vector<std::vector<double>> seqs;
  std::vector<double> probs;
};

// Probabilities over reward-index sequences in lexicographic order (length
// n_rewards^t). Guarded: t * log2(n_rewards) must stay <= 20.
std::vector<double> exact_rsd_dense(const TabularPOMDP& m, int s, const std::vector<int>& aseq);

// Same distribution with zero-probability sequences dropped.
RewardSeqDistribution exact_rsd(const TabularPOMDP& m, int s, const std::vector<int>& aseq);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);
double total_variation(const RewardSeqDistribution& p, const RewardSeqDistribution& q);

// E[exp(j * sum_t gamma^t omega_t R_t)] from the exact distribution.
std::complex<double> exact_cf(const TabularPOMDP& m, int s, const std::vector<int>& aseq,
                              const std::vector<double>& omega);

// Monte Carlo draws of T-step reward sequences under the action sequence.
std::vector<std::vector<double>> sample_reward_seqs(const TabularPOMDP& m, int s,
                                                    const std::vector<int>& aseq, int n,
                                                    Rng& rng);

// Finest partition in which two states share a block iff their exact reward
// sequence distributions agree (TV < tol) for every action sequence of length
// t_len. Block ids are assigned in order of first appearance. Guarded:
// n_actions^t_len <= 2^20 enumerated sequences.
std::vector<int> t_level_partition(const TabularPOMDP& m, int t_len, double tol = 1e-10);

int n_blocks(const std::vector<int>& partition);

// Optimal value of the latent MDP; returned vector has sup-norm Bellman
// residual < 1e-10.
std::vector<double> value_iteration(const TabularPOMDP& m);

std::vector<int> greedy_policy(const TabularPOMDP& m, const std::vector<double>& v);

// Exact value of a stationary deterministic policy (linear solve).
std::vector<double> policy_value(const TabularPOMDP& m, const std::vector<int>& policy);

// Optimal value achievable while acting only on the block identity:
// pointwise max over (a) every stationary deterministic block-constant policy
// (enumerated; errors when n_actions^n_blocks exceeds 4096) and (b) the
// t_len-step chunked policy that replays the representative state's optimal
// action-sequence law per block (the construction behind the gap bound).
std::vector<double> aggregated_value(const TabularPOMDP& m, const std::vector<int>& partition,
                                     int t_len);

struct GapAudit {
  double max_gap = 0;
  double min_gap = 0;
  double bound = 0;
  bool pass = false;
};

// Audits 0 <= V*(s) - Vbar(s) <= 2 * gamma^t * rbar / (1 - gamma) over all
// states, with Vbar the aggregated value on the t-level partition.
GapAudit theorem1_gap(const TabularPOMDP& m, int t_len);

}  // namespace cresp

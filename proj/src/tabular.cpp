#include "cresp/tabular.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace cresp {

double TabularPOMDP::expected_reward(int s, int a) const {
  double acc = 0;
  for (int k = 0; k < n_rewards(); ++k) acc += rp(s, a, k) * reward_support[k];
  return acc;
}

void TabularPOMDP::validate() const {
  if (n_states < 1 || n_actions < 1 || reward_support.empty())
    throw std::invalid_argument("TabularPOMDP: empty state/action/reward sets");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("TabularPOMDP: gamma must lie in (0,1)");
  for (double r : reward_support)
    if (std::fabs(r) > reward_bound + 1e-12)
      throw std::invalid_argument("TabularPOMDP: reward support exceeds reward_bound");
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double pr = 0, pt = 0;
      for (int k = 0; k < n_rewards(); ++k) pr += rp(s, a, k);
      for (int s2 = 0; s2 < n_states; ++s2) pt += tp(s, a, s2);
      if (std::fabs(pr - 1.0) > 1e-9 || std::fabs(pt - 1.0) > 1e-9)
        throw std::invalid_argument("TabularPOMDP: rows must sum to 1");
    }
}

TabularPOMDP random_pomdp(Rng& rng, int n_states, int n_actions, int n_rewards, double gamma) {
  TabularPOMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.reward_support.resize(n_rewards);
  for (auto& r : m.reward_support) r = rng.uniform(-1.0, 1.0);
  std::sort(m.reward_support.begin(), m.reward_support.end());
  m.reward_bound = 0;
  for (double r : m.reward_support) m.reward_bound = std::max(m.reward_bound, std::fabs(r));
  auto fill_rows = [&rng](std::vector<double>& v, int rows, int width) {
    v.resize(static_cast<size_t>(rows) * width);
    for (int i = 0; i < rows; ++i) {
      double z = 0;
      for (int j = 0; j < width; ++j) {
        const double x = rng.uniform() + 0.05;  // keep rows bounded away from degenerate
        v[static_cast<size_t>(i) * width + j] = x;
        z += x;
      }
      for (int j = 0; j < width; ++j) v[static_cast<size_t>(i) * width + j] /= z;
    }
  };
  fill_rows(m.reward_prob, n_states * n_actions, n_rewards);
  fill_rows(m.trans, n_states * n_actions, n_states);
  m.validate();
  return m;
}

static void check_rsd_budget(const TabularPOMDP& m, size_t t_len) {
  const double bits = static_cast<double>(t_len) * std::log2(static_cast<double>(m.n_rewards()));
  if (bits > 20.0)
    throw std::invalid_argument("exact_rsd: t * log2(|R|) exceeds the budget of 20 bits");
}

std::vector<double> exact_rsd_dense(const TabularPOMDP& m, int s, const std::vector<int>& aseq) {
  if (s < 0 || s >= m.n_states) throw std::invalid_argument("exact_rsd: state out of range");
  for (int a : aseq)
    if (a < 0 || a >= m.n_actions) throw std::invalid_argument("exact_rsd: action out of range");
  if (aseq.empty()) throw std::invalid_argument("exact_rsd: empty action sequence");
  check_rsd_budget(m, aseq.size());

  const int nr = m.n_rewards();
  const int ns = m.n_states;
  // joint law over (reward prefix, current state); prefix-major layout
  std::vector<double> cur(ns, 0.0);
  cur[s] = 1.0;
  size_t prefixes = 1;
  for (int a : aseq) {
    std::vector<double> next(prefixes * nr * ns, 0.0);
    for (size_t p = 0; p < prefixes; ++p)
      for (int st = 0; st < ns; ++st) {
        const double w = cur[p * ns + st];
        if (w == 0.0) continue;
        for (int k = 0; k < nr; ++k) {
          const double wr = w * m.rp(st, a, k);
          if (wr == 0.0) continue;
          double* row = next.data() + ((p * nr + k) * ns);
          for (int s2 = 0; s2 < ns; ++s2) row[s2] += wr * m.tp(st, a, s2);
        }
      }
    cur.swap(next);
    prefixes *= nr;
  }
  std::vector<double> dense(prefixes, 0.0);
  for (size_t p = 0; p < prefixes; ++p)
    for (int st = 0; st < ns; ++st) dense[p] += cur[p * ns + st];
  return dense;
}

RewardSeqDistribution exact_rsd(const TabularPOMDP& m, int s, const std::vector<int>& aseq) {
  const auto dense = exact_rsd_dense(m, s, aseq);
  const int nr = m.n_rewards();
  const size_t t_len = aseq.size();
  RewardSeqDistribution out;
  for (size_t p = 0; p < dense.size(); ++p) {
    if (dense[p] <= 0.0) continue;
    std::vector<double> seq(t_len);
    size_t rem = p;
    for (size_t t = t_len; t-- > 0;) {
      seq[t] = m.reward_support[rem % nr];
      rem /= nr;
    }
    out.seqs.push_back(std::move(seq));
    out.probs.push_back(dense[p]);
  }
  return out;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("total_variation: distributions over different domains");
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) acc += std::fabs(p[i] - q[i]);
  return 0.5 * acc;
}

double total_variation(const RewardSeqDistribution& p, const RewardSeqDistribution& q) {
  std::map<std::vector<double>, double> diff;
  for (size_t i = 0; i < p.seqs.size(); ++i) diff[p.seqs[i]] += p.probs[i];
  for (size_t i = 0; i < q.seqs.size(); ++i) diff[q.seqs[i]] -= q.probs[i];
  double acc = 0;
  for (const auto& [_, d] : diff) acc += std::fabs(d);
  return 0.5 * acc;
}

std::complex<double> exact_cf(const TabularPOMDP& m, int s, const std::vector<int>& aseq,
                              const std::vector<double>& omega) {
  if (omega.size() != aseq.size())
    throw std::invalid_argument("exact_cf: omega length must match the action sequence");
  const auto dense = exact_rsd_dense(m, s, aseq);
  const int nr = m.n_rewards();
  const size_t t_len = aseq.size();
  // per-step discounted phase contributions, gamma^1 on the first reward
  std::vector<double> phase(t_len * nr);
  double g = m.gamma;
  for (size_t t = 0; t < t_len; ++t) {
    for (int k = 0; k < nr; ++k) phase[t * nr + k] = g * omega[t] * m.reward_support[k];
    g *= m.gamma;
  }
  std::complex<double> acc{0, 0};
  for (size_t p = 0; p < dense.size(); ++p) {
    if (dense[p] == 0.0) continue;
    double theta = 0;
    size_t rem = p;
    for (size_t t = t_len; t-- > 0;) {
      theta += phase[t * nr + rem % nr];
      rem /= nr;
    }
    acc += dense[p] * std::complex<double>{std::cos(theta), std::sin(theta)};
  }
  return acc;
}

std::vector<std::vector<double>> sample_reward_seqs(const TabularPOMDP& m, int s,
                                                    const std::vector<int>& aseq, int n,
                                                    Rng& rng) {
  auto draw = [&rng](const double* row, int width) {
    double u = rng.uniform();
    for (int i = 0; i < width; ++i) {
      u -= row[i];
      if (u < 0) return i;
    }
    return width - 1;
  };
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    int st = s;
    std::vector<double> seq(aseq.size());
    for (size_t t = 0; t < aseq.size(); ++t) {
      const int a = aseq[t];
      const int k = draw(&m.reward_prob[(static_cast<size_t>(st) * m.n_actions + a) *
                                        m.n_rewards()],
                         m.n_rewards());
      seq[t] = m.reward_support[k];
      st = draw(&m.trans[(static_cast<size_t>(st) * m.n_actions + a) * m.n_states],
                m.n_states);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<int> t_level_partition(const TabularPOMDP& m, int t_len, double tol) {
  if (t_len < 1) throw std::invalid_argument("t_level_partition: t_len must be >= 1");
  const double count = std::pow(static_cast<double>(m.n_actions), t_len);
  if (count > static_cast<double>(1 << 20))
    throw std::invalid_argument("t_level_partition: |A|^t exceeds the enumeration budget");
  check_rsd_budget(m, static_cast<size_t>(t_len));

  const size_t n_seq = static_cast<size_t>(count);
  // signature per state: concatenated dense RSDs over all action sequences
  std::vector<std::vector<double>> sig(m.n_states);
  std::vector<int> aseq(t_len, 0);
  for (size_t i = 0; i < n_seq; ++i) {
    size_t rem = i;
    for (int t = t_len - 1; t >= 0; --t) {
      aseq[t] = static_cast<int>(rem % m.n_actions);
      rem /= m.n_actions;
    }
    for (int s = 0; s < m.n_states; ++s) {
      auto d = exact_rsd_dense(m, s, aseq);
      sig[s].insert(sig[s].end(), d.begin(), d.end());
    }
  }
  const size_t block_len = sig.empty() ? 0 : sig[0].size() / n_seq;
  auto same = [&](int a, int b) {
    // max over action sequences of the TV between the two RSDs
    for (size_t i = 0; i < n_seq; ++i) {
      double acc = 0;
      const double* pa = sig[a].data() + i * block_len;
      const double* pb = sig[b].data() + i * block_len;
      for (size_t j = 0; j < block_len; ++j) acc += std::fabs(pa[j] - pb[j]);
      if (0.5 * acc >= tol) return false;
    }
    return true;
  };
  std::vector<int> block(m.n_states, -1);
  std::vector<int> reps;
  for (int s = 0; s < m.n_states; ++s) {
    for (size_t b = 0; b < reps.size(); ++b)
      if (same(reps[b], s)) {
        block[s] = static_cast<int>(b);
        break;
      }
    if (block[s] < 0) {
      block[s] = static_cast<int>(reps.size());
      reps.push_back(s);
    }
  }
  return block;
}

int n_blocks(const std::vector<int>& partition) {
  int mx = -1;
  for (int b : partition) mx = std::max(mx, b);
  return mx + 1;
}

std::vector<double> value_iteration(const TabularPOMDP& m) {
  m.validate();
  std::vector<double> v(m.n_states, 0.0), w(m.n_states, 0.0);
  const double tol = 1e-11;
  for (int it = 0; it < 1000000; ++it) {
    double res = 0;
    for (int s = 0; s < m.n_states; ++s) {
      double best = -1e300;
      for (int a = 0; a < m.n_actions; ++a) {
        double q = m.expected_reward(s, a);
        for (int s2 = 0; s2 < m.n_states; ++s2) q += m.gamma * m.tp(s, a, s2) * v[s2];
        best = std::max(best, q);
      }
      w[s] = best;
      res = std::max(res, std::fabs(w[s] - v[s]));
    }
    v.swap(w);
    if (res < tol) return v;
  }
  throw std::runtime_error("value_iteration: did not converge");
}

std::vector<int> greedy_policy(const TabularPOMDP& m, const std::vector<double>& v) {
  std::vector<int> pi(m.n_states, 0);
  for (int s = 0; s < m.n_states; ++s) {
    double best = -1e300;
    for (int a = 0; a < m.n_actions; ++a) {
      double q = m.expected_reward(s, a);
      for (int s2 = 0; s2 < m.n_states; ++s2) q += m.gamma * m.tp(s, a, s2) * v[s2];
      if (q > best + 1e-13) {
        best = q;
        pi[s] = a;
      }
    }
  }
  return pi;
}

std::vector<double> policy_value(const TabularPOMDP& m, const std::vector<int>& policy) {
  const int n = m.n_states;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int s = 0; s < n; ++s) {
    const int a = policy[s];
    b(s) = m.expected_reward(s, a);
    for (int s2 = 0; s2 < n; ++s2) A(s, s2) -= m.gamma * m.tp(s, a, s2);
  }
  const Eigen::VectorXd v = A.partialPivLu().solve(b);
  return {v.data(), v.data() + n};
}

namespace {

// t-step forward rollout of a fixed action sequence: expected discounted
// reward collected along the way plus the terminal state distribution.
void open_loop_stats(const TabularPOMDP& m, int s, const std::vector<int>& aseq,
                     double& reward_out, std::vector<double>& terminal_out) {
  std::vector<double> d(m.n_states, 0.0), nd(m.n_states);
  d[s] = 1.0;
  double acc = 0, g = 1.0;
  for (int a : aseq) {
    std::fill(nd.begin(), nd.end(), 0.0);
    for (int st = 0; st < m.n_states; ++st) {
      if (d[st] == 0.0) continue;
      acc += g * d[st] * m.expected_reward(st, a);
      for (int s2 = 0; s2 < m.n_states; ++s2) nd[s2] += d[st] * m.tp(st, a, s2);
    }
    d.swap(nd);
    g *= m.gamma;
  }
  reward_out = acc;
  terminal_out = d;
}

// Law over the action sequences the greedy policy emits in its first t steps
// when started from `s` (branching over stochastic transitions).
std::map<std::vector<int>, double> action_seq_law(const TabularPOMDP& m,
                                                  const std::vector<int>& pi, int s,
                                                  int t_len) {
  std::map<std::vector<int>, double> law;
  struct Item {
    int state;
    double prob;
    std::vector<int> aseq;
  };
  std::vector<Item> frontier{{s, 1.0, {}}};
  for (int t = 0; t < t_len; ++t) {
    std::vector<Item> next;
    for (auto& it : frontier) {
      const int a = pi[it.state];
      auto aseq = it.aseq;
      aseq.push_back(a);
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        const double p = m.tp(it.state, a, s2);
        if (p == 0.0) continue;
        next.push_back({s2, it.prob * p, aseq});
      }
    }
    frontier.swap(next);
  }
  for (const auto& it : frontier) law[it.aseq] += it.prob;
  return law;
}

}  // namespace

std::vector<double> aggregated_value(const TabularPOMDP& m, const std::vector<int>& partition,
                                     int t_len) {
  m.validate();
  if (static_cast<int>(partition.size()) != m.n_states)
    throw std::invalid_argument("aggregated_value: partition size mismatch");
  const int nb = n_blocks(partition);
  const double count = std::pow(static_cast<double>(m.n_actions), nb);
  if (count > 4096.0)
    throw std::invalid_argument("aggregated_value: |A|^n_blocks exceeds the enumeration budget");

  std::vector<double> vbar(m.n_states, -1e300);

  // (a) every stationary deterministic block-constant policy
  std::vector<int> assign(nb, 0), policy(m.n_states);
  const size_t total = static_cast<size_t>(count);
  for (size_t idx = 0; idx < total; ++idx) {
    size_t rem = idx;
    for (int b = 0; b < nb; ++b) {
      assign[b] = static_cast<int>(rem % m.n_actions);
      rem /= m.n_actions;
    }
    for (int s = 0; s < m.n_states; ++s) policy[s] = assign[partition[s]];
    const auto v = policy_value(m, policy);
    for (int s = 0; s < m.n_states; ++s) vbar[s] = std::max(vbar[s], v[s]);
  }

  // (b) chunked policy: per block, replay the representative state's optimal
  // t-step action-sequence law open loop, then repeat from the landing block.
  const auto vstar = value_iteration(m);
  const auto pi = greedy_policy(m, vstar);
  std::vector<int> rep(nb, -1);
  for (int s = 0; s < m.n_states; ++s)
    if (rep[partition[s]] < 0) rep[partition[s]] = s;

  std::vector<std::map<std::vector<int>, double>> laws(nb);
  for (int b = 0; b < nb; ++b) laws[b] = action_seq_law(m, pi, rep[b], t_len);

  const int n = m.n_states;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  const double gt = std::pow(m.gamma, t_len);
  double rwd;
  std::vector<double> terminal;
  for (int s = 0; s < n; ++s) {
    for (const auto& [aseq, q] : laws[partition[s]]) {
      open_loop_stats(m, s, aseq, rwd, terminal);
      c(s) += q * rwd;
      for (int s2 = 0; s2 < n; ++s2) A(s, s2) -= q * gt * terminal[s2];
    }
  }
  const Eigen::VectorXd vchunk = A.partialPivLu().solve(c);
  for (int s = 0; s < n; ++s) vbar[s] = std::max(vbar[s], vchunk(s));
  return vbar;
}

GapAudit theorem1_gap(const TabularPOMDP& m, int t_len) {
  const auto part = t_level_partition(m, t_len);
  const auto vstar = value_iteration(m);
  const auto vbar = aggregated_value(m, part, t_len);
  GapAudit audit;
  audit.max_gap = -1e300;
  audit.min_gap = 1e300;
  for (int s = 0; s < m.n_states; ++s) {
    const double gap = vstar[s] - vbar[s];
    audit.max_gap = std::max(audit.max_gap, gap);
    audit.min_gap = std::min(audit.min_gap, gap);
  }
  audit.bound = 2.0 * std::pow(m.gamma, t_len) * m.reward_bound / (1.0 - m.gamma);
  audit.pass = audit.min_gap >= -1e-8 && audit.max_gap <= audit.bound + 1e-8;
  return audit;
}

}  // namespace cresp

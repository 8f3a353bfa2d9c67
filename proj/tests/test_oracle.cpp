#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "cresp/rng.hpp"
#include "cresp/spectral.hpp"
#include "cresp/tabular.hpp"

using namespace cresp;

namespace {

// Independent reward-sequence law: brute force over all state paths. Index
// layout has the first reward most significant.
void path_rsd_rec(const TabularPOMDP& m, int s, const std::vector<int>& aseq, size_t t,
                  double prob, size_t ridx, std::vector<double>& out) {
  if (t == aseq.size()) {
    out[ridx] += prob;
    return;
  }
  const int a = aseq[t];
  for (int k = 0; k < m.n_rewards(); ++k) {
    const double pr = m.rp(s, a, k);
    if (pr == 0.0) continue;
    for (int s2 = 0; s2 < m.n_states; ++s2) {
      const double pt = m.tp(s, a, s2);
      if (pt == 0.0) continue;
      path_rsd_rec(m, s2, aseq, t + 1, prob * pr * pt, ridx * m.n_rewards() + k, out);
    }
  }
}

std::vector<double> path_rsd(const TabularPOMDP& m, int s, const std::vector<int>& aseq) {
  size_t n = 1;
  for (size_t i = 0; i < aseq.size(); ++i) n *= m.n_rewards();
  std::vector<double> out(n, 0.0);
  path_rsd_rec(m, s, aseq, 0, 1.0, 0, out);
  return out;
}

// deterministic chain: reward sequences of s0 and s3 first differ at step 3
TabularPOMDP split_at_three() {
  TabularPOMDP m;
  m.n_states = 6;
  m.n_actions = 1;
  m.reward_support = {0.0, 1.0};
  m.gamma = 0.9;
  m.reward_bound = 1.0;
  m.reward_prob.assign(6 * 1 * 2, 0.0);
  m.trans.assign(6 * 1 * 6, 0.0);
  auto chain_to = [&](int s, int s2) { m.trans[s * 6 + s2] = 1.0; };
  auto reward_one = [&](int s, bool one) { m.reward_prob[s * 2 + (one ? 1 : 0)] = 1.0; };
  // s0 -> s1 -> s2 absorbing, all reward 0
  reward_one(0, false), chain_to(0, 1);
  reward_one(1, false), chain_to(1, 2);
  reward_one(2, false), chain_to(2, 2);
  // s3 -> s4 -> s5 absorbing, reward 1 from s5 on
  reward_one(3, false), chain_to(3, 4);
  reward_one(4, false), chain_to(4, 5);
  reward_one(5, true), chain_to(5, 5);
  m.validate();
  return m;
}

std::vector<int> digits(int idx, int base, int len) {
  std::vector<int> d(len);
  for (int i = len - 1; i >= 0; --i) {
    d[i] = idx % base;
    idx /= base;
  }
  return d;
}

}  // namespace

TEST_CASE("reward sequence law matches brute-force path enumeration") {
  Rng rng(501);
  for (int inst = 0; inst < 12; ++inst) {
    TabularPOMDP m = random_pomdp(rng, 2 + (int)rng.uniform_int(4), 1 + (int)rng.uniform_int(3),
                                  2 + (int)rng.uniform_int(2), 0.9);
    for (int t = 1; t <= 3; ++t) {
      std::vector<int> aseq(t);
      for (auto& a : aseq) a = (int)rng.uniform_int(m.n_actions);
      const int s = (int)rng.uniform_int(m.n_states);
      const auto got = exact_rsd_dense(m, s, aseq);
      const auto want = path_rsd(m, s, aseq);
      REQUIRE(got.size() == want.size());
      double sum = 0, err = 0;
      for (size_t i = 0; i < got.size(); ++i) {
        sum += got[i];
        err = std::max(err, std::fabs(got[i] - want[i]));
      }
      CHECK(err < 1e-13);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("sparse law agrees with the dense vector") {
  Rng rng(502);
  TabularPOMDP m = random_pomdp(rng, 4, 2, 3, 0.95);
  std::vector<int> aseq = {1, 0};
  const auto dense = exact_rsd_dense(m, 1, aseq);
  const auto sparse = exact_rsd(m, 1, aseq);
  double mass = 0;
  for (size_t i = 0; i < sparse.seqs.size(); ++i) {
    REQUIRE(sparse.seqs[i].size() == 2);
    mass += sparse.probs[i];
    CHECK(sparse.probs[i] > 0.0);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < sparse.seqs.size(); ++i) {
    int idx = 0;
    for (double rv : sparse.seqs[i]) {
      int k = 0;
      while (m.reward_support[k] != rv) ++k;
      idx = idx * m.n_rewards() + k;
    }
    CHECK(sparse.probs[i] == doctest::Approx(dense[idx]).epsilon(1e-12));
  }
}

TEST_CASE("characteristic function matches direct summation and sampling") {
  Rng rng(503);
  for (int inst = 0; inst < 4; ++inst) {
    TabularPOMDP m = random_pomdp(rng, 4, 2, 3, 0.9);
    std::vector<int> aseq = {0, 1, 0};
    std::vector<double> omega = {0.8, -1.1, 0.4};
    const auto cf = exact_cf(m, 2, aseq, omega);
    // direct sum over the dense law
    const auto dense = exact_rsd_dense(m, 2, aseq);
    std::complex<double> want(0, 0);
    for (size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] == 0) continue;
      auto d = digits((int)i, m.n_rewards(), 3);
      std::vector<double> rs(3);
      for (int t = 0; t < 3; ++t) rs[t] = m.reward_support[d[t]];
      const double theta = discounted_inner(omega, rs, m.gamma);
      want += dense[i] * std::complex<double>(std::cos(theta), std::sin(theta));
    }
    CHECK(std::abs(cf - want) < 1e-12);

    auto samples = sample_reward_seqs(m, 2, aseq, 40000, rng);
    const auto mc = empirical_cf(samples, omega, m.gamma);
    CHECK(std::abs(mc - cf) < 0.02);
  }
}

TEST_CASE("sampled reward frequencies match the law") {
  Rng rng(504);
  TabularPOMDP m = random_pomdp(rng, 3, 2, 2, 0.9);
  std::vector<int> aseq = {1, 1};
  const auto dense = exact_rsd_dense(m, 0, aseq);
  auto samples = sample_reward_seqs(m, 0, aseq, 50000, rng);
  std::vector<double> freq(dense.size(), 0.0);
  for (const auto& seq : samples) {
    int idx = 0;
    for (double rv : seq) {
      int k = 0;
      while (m.reward_support[k] != rv) ++k;
      idx = idx * m.n_rewards() + k;
    }
    freq[idx] += 1.0 / samples.size();
  }
  for (size_t i = 0; i < dense.size(); ++i) CHECK(std::fabs(freq[i] - dense[i]) < 0.01);
}

TEST_CASE("total variation basics") {
  CHECK(total_variation({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(total_variation({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(total_variation({0.7, 0.3}, {0.5, 0.5}) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("partition splits the chain exactly at horizon three") {
  TabularPOMDP m = split_at_three();
  auto p1 = t_level_partition(m, 1);
  auto p2 = t_level_partition(m, 2);
  auto p3 = t_level_partition(m, 3);
  auto p4 = t_level_partition(m, 4);
  CHECK(n_blocks(p1) == 2);
  CHECK(n_blocks(p2) == 3);
  CHECK(n_blocks(p3) == 4);
  CHECK(n_blocks(p4) == 4);
  CHECK(p1[0] == p1[3]);
  CHECK(p2[0] == p2[3]);
  CHECK(p3[0] != p3[3]);
  // shorter horizons distinguish the later chain states
  CHECK(p1[2] != p1[5]);
  CHECK(p2[1] != p2[4]);
}

TEST_CASE("refining the horizon never merges blocks") {
  Rng rng(505);
  for (int inst = 0; inst < 6; ++inst) {
    TabularPOMDP m = random_pomdp(rng, 5, 2, 2, 0.9);
    int prev = 0;
    for (int t = 1; t <= 4; ++t) {
      const int b = n_blocks(t_level_partition(m, t));
      CHECK(b >= prev);
      prev = b;
    }
  }
}

TEST_CASE("partition is invariant to state relabeling in block structure") {
  TabularPOMDP m = split_at_three();
  auto p = t_level_partition(m, 3);
  // ids appear in first-appearance order
  int seen = 0;
  for (int b : p) {
    CHECK(b <= seen);
    if (b == seen) ++seen;
  }
  CHECK(seen == n_blocks(p));
}

TEST_CASE("optimal values match exhaustive policy enumeration") {
  Rng rng(506);
  for (int inst = 0; inst < 5; ++inst) {
    TabularPOMDP m = random_pomdp(rng, 4, 2, 3, 0.85);
    const auto vstar = value_iteration(m);
    std::vector<double> best(m.n_states, -1e100);
    for (int code = 0; code < 16; ++code) {
      std::vector<int> pol(4);
      for (int s = 0; s < 4; ++s) pol[s] = (code >> s) & 1;
      const auto v = policy_value(m, pol);
      for (int s = 0; s < 4; ++s) best[s] = std::max(best[s], v[s]);
    }
    for (int s = 0; s < 4; ++s) CHECK(std::fabs(vstar[s] - best[s]) < 1e-8);
  }
}

TEST_CASE("policy value solves the fixed point") {
  Rng rng(507);
  TabularPOMDP m = random_pomdp(rng, 5, 3, 2, 0.9);
  std::vector<int> pol = {0, 2, 1, 0, 2};
  const auto v = policy_value(m, pol);
  for (int s = 0; s < 5; ++s) {
    double rhs = m.expected_reward(s, pol[s]);
    for (int s2 = 0; s2 < 5; ++s2) rhs += m.gamma * m.tp(s, pol[s], s2) * v[s2];
    CHECK(v[s] == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("aggregation with singleton blocks recovers the optimum") {
  Rng rng(508);
  TabularPOMDP m = random_pomdp(rng, 4, 2, 2, 0.9);
  std::vector<int> singleton = {0, 1, 2, 3};
  const auto vbar = aggregated_value(m, singleton, 2);
  const auto vstar = value_iteration(m);
  for (int s = 0; s < 4; ++s) CHECK(std::fabs(vbar[s] - vstar[s]) < 1e-8);
}

TEST_CASE("one coarse block can be strictly suboptimal but stays bounded") {
  // two states that demand opposite actions
  TabularPOMDP m;
  m.n_states = 2;
  m.n_actions = 2;
  m.reward_support = {0.0, 1.0};
  m.gamma = 0.9;
  m.reward_bound = 1.0;
  m.reward_prob.assign(2 * 2 * 2, 0.0);
  m.trans.assign(2 * 2 * 2, 0.0);
  auto set_rp = [&](int s, int a, int k) { m.reward_prob[(s * 2 + a) * 2 + k] = 1.0; };
  set_rp(0, 0, 1);  // state 0 wants action 0
  set_rp(0, 1, 0);
  set_rp(1, 0, 0);  // state 1 wants action 1
  set_rp(1, 1, 1);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int s2 = 0; s2 < 2; ++s2) m.trans[(s * 2 + a) * 2 + s2] = 0.5;
  m.validate();

  const auto vstar = value_iteration(m);
  std::vector<int> coarse = {0, 0};
  const auto vbar = aggregated_value(m, coarse, 1);
  bool strictly_below = false;
  for (int s = 0; s < 2; ++s) {
    CHECK(vbar[s] <= vstar[s] + 1e-10);
    strictly_below |= (vstar[s] - vbar[s] > 1e-6);
  }
  CHECK(strictly_below);
  const double bound = 2 * m.gamma * m.reward_bound / (1 - m.gamma);
  for (int s = 0; s < 2; ++s) CHECK(vstar[s] - vbar[s] <= bound + 1e-10);
}

TEST_CASE("value gap audit holds on random instances") {
  Rng rng(509);
  for (int inst = 0; inst < 10; ++inst) {
    TabularPOMDP m = random_pomdp(rng, 2 + (int)rng.uniform_int(4), 1 + (int)rng.uniform_int(3),
                                  2 + (int)rng.uniform_int(2), inst % 2 ? 0.8 : 0.9);
    for (int t = 1; t <= 2; ++t) {
      const GapAudit g = theorem1_gap(m, t);
      CHECK(g.pass);
      CHECK(g.min_gap >= -1e-9);
      CHECK(g.max_gap <= g.bound + 1e-12);
      CHECK(g.bound ==
            doctest::Approx(2 * std::pow(m.gamma, t) * m.reward_bound / (1 - m.gamma)));
    }
  }
}

TEST_CASE("gap shrinks geometrically on the split chain") {
  TabularPOMDP m = split_at_three();
  double prev = 1e100;
  for (int t = 1; t <= 4; ++t) {
    const GapAudit g = theorem1_gap(m, t);
    CHECK(g.pass);
    CHECK(g.bound < prev);
    prev = g.bound;
  }
  // at t=4 the partition separates every behaviorally distinct state and the
  // chain is deterministic, so aggregation loses nothing
  const GapAudit g4 = theorem1_gap(m, 4);
  CHECK(g4.max_gap < 1e-8);
}

TEST_CASE("enumeration budgets are enforced") {
  Rng rng(510);
  TabularPOMDP m = random_pomdp(rng, 3, 3, 3, 0.9);
  CHECK_THROWS_AS(exact_rsd_dense(m, 0, std::vector<int>(14, 0)), std::invalid_argument);
  CHECK_THROWS_AS(t_level_partition(m, 13), std::invalid_argument);
  TabularPOMDP bad = m;
  bad.gamma = 1.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include "cresp/checkpoint.hpp"
#include "cresp/params.hpp"
#include "cresp/rng.hpp"
#include "cresp/spectral.hpp"
#include "cresp/tensor.hpp"

using namespace cresp;
using nn::Tensor;

TEST_CASE("rng streams repeat and diverge") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  Rng c(Rng::derive(42, "rollout", 0));
  Rng d(Rng::derive(42, "rollout", 1));
  Rng e(Rng::derive(42, "episode", 0));
  bool all_same_cd = true, all_same_ce = true;
  Rng c2(Rng::derive(42, "rollout", 0));
  for (int i = 0; i < 50; ++i) {
    const double x = c.uniform();
    all_same_cd &= (x == d.uniform());
    all_same_ce &= (x == e.uniform());
    CHECK(x == c2.uniform());
  }
  CHECK_FALSE(all_same_cd);
  CHECK_FALSE(all_same_ce);
}

TEST_CASE("rng state save restores mid-stream") {
  Rng r(7);
  for (int i = 0; i < 17; ++i) r.normal();
  std::stringstream ss;
  r.save(ss);
  std::vector<double> ahead(20);
  for (auto& x : ahead) x = r.uniform();
  Rng r2(0);
  r2.load(ss);
  for (double x : ahead) CHECK(r2.uniform() == x);
}

TEST_CASE("rng moments") {
  Rng r(123);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sn / n == doctest::Approx(0.0).epsilon(0.01));
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  int counts[5] = {0};
  for (int i = 0; i < 50000; ++i) counts[r.uniform_int(5)]++;
  for (int k = 0; k < 5; ++k) CHECK(counts[k] == doctest::Approx(10000).epsilon(0.05));
}

TEST_CASE("matmul and softmax forward values") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor c = nn::matmul(a, b);
  CHECK(c.data()[0] == 4.0);
  CHECK(c.data()[1] == 5.0);
  CHECK(c.data()[2] == 10.0);
  CHECK(c.data()[3] == 11.0);

  Tensor s = nn::softmax_rows(Tensor::from({1, 2}, {0, 0}));
  CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor ln = nn::layer_norm_rows(Tensor::from({1, 4}, {1, 2, 3, 4}));
  double m = 0, v = 0;
  for (int i = 0; i < 4; ++i) m += ln.data()[i] / 4;
  for (int i = 0; i < 4; ++i) v += ln.data()[i] * ln.data()[i] / 4;
  CHECK(m == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("attention with zero queries averages values") {
  Tensor q = Tensor::zeros({3, 4});
  Tensor k = Tensor::from({3, 4}, std::vector<double>(12, 0.3));
  Tensor v = Tensor::from({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor o = nn::scaled_dot_attention(q, k, v, 1, 3, 2);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col)
      CHECK(o.data()[row * 4 + col] == doctest::Approx(5.0 + col).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(nn::matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(nn::add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(nn::concat_cols({a, Tensor::zeros({3, 3})}), std::invalid_argument);
  CHECK_THROWS_AS(nn::log_t(Tensor::from({1, 1}, {0.0})), std::runtime_error);
}

namespace {

nn::FdReport fd(nn::ParamStore& ps, const std::function<Tensor()>& loss) {
  return nn::finite_diff_check(loss, ps, 1e-5, 64, 9001);
}

}  // namespace

TEST_CASE("gradients match finite differences per primitive") {
  Rng rng(11);
  nn::ParamStore ps;
  ps.add("w", {3, 4}, 0.7, &rng);
  ps.add("b", {1, 4}, 0.5, &rng);
  ps.add("u", {4, 2}, 0.6, &rng);
  Tensor x = Tensor::from({5, 3}, [] {
    std::vector<double> v(15);
    Rng r(3);
    for (auto& e : v) e = r.normal();
    return v;
  }());

  SUBCASE("dense relu chain") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::relu(nn::add(nn::matmul(x, ps.at("w")), ps.at("b")));
      return nn::mean(nn::matmul(h, ps.at("u")));
    });
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("tanh exp log sqrt abs") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::tanh_t(nn::matmul(x, ps.at("w")));
      Tensor e = nn::exp_t(nn::scale(h, 0.5));
      Tensor l = nn::log_t(nn::add_scalar(nn::abs_t(h), 1.0));
      Tensor s = nn::sqrt_t(nn::add_scalar(nn::mul(h, h), 0.3));
      return nn::mean(nn::add(nn::add(e, l), s));
    });
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("broadcast binary ops") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::matmul(x, ps.at("w"));
      Tensor col = nn::mean_axis(h, 1);
      Tensor row = nn::mean_axis(h, 0);
      Tensor d = nn::div_t(nn::sub(h, row), nn::add_scalar(nn::abs_t(col), 1.0));
      return nn::mean(nn::mul(d, nn::neg(h)));
    });
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("reshape concat slice gather tile") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::matmul(x, ps.at("w"));  // (5,4)
      Tensor g = nn::gather_rows(h, {4, 0, 2, 2});
      Tensor t = nn::tile_rows(nn::slice_cols(h, 1, 3), 2);  // (10,2)
      Tensor r = nn::repeat_rows_interleave(nn::slice_cols(g, 0, 1), 3);  // (12,1)
      Tensor cc = nn::concat_cols({g, g});  // (4,8)
      Tensor cr = nn::concat_rows({t, nn::reshape(cc, {16, 2}), nn::reshape(r, {6, 2})});
      return nn::add(nn::mean(nn::mul(cr, cr)), nn::mean(nn::transpose(t)));
    });
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("softmax and reductions") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::matmul(x, ps.at("w"));
      Tensor p = nn::softmax_rows(h);
      Tensor lp = nn::log_softmax_rows(nn::matmul(h, ps.at("u")));
      return nn::add(nn::mean(nn::mul(p, h)),
                     nn::sum(nn::scale(nn::sum_axis(lp, 1), 1e-2)));
    });
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("layer norm") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::layer_norm_rows(nn::matmul(x, ps.at("w")));
      return nn::mean(nn::mul(h, nn::matmul(x, ps.at("w"))));
    });
    CHECK(rep.max_rel_err < 1e-5);
  }
  SUBCASE("attention") {
    auto rep = fd(ps, [&] {
      Tensor h = nn::matmul(x, ps.at("w"));  // (5,4) = batch 1, len 5
      Tensor o = nn::scaled_dot_attention(h, nn::add(h, ps.at("b")), h, 1, 5, 2);
      return nn::mean(nn::mul(o, o));
    });
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv patch extraction gradients and shapes") {
  Rng rng(5);
  nn::ParamStore ps;
  ps.add("img", {2, 2 * 5 * 5}, 0.8, &rng);
  ps.add("k", {2 * 3 * 3, 3}, 0.5, &rng);
  Tensor patches = nn::im2col(ps.at("img"), 2, 5, 5, 3, 2, 1);
  CHECK(patches.shape[0] == 2 * 3 * 3);  // 5x5, k3 s2 p1 -> 3x3 output
  CHECK(patches.shape[1] == 2 * 3 * 3);
  auto rep = fd(ps, [&] {
    Tensor p = nn::im2col(ps.at("img"), 2, 5, 5, 3, 2, 1);
    Tensor y = nn::relu(nn::matmul(p, ps.at("k")));
    Tensor n = nn::cols_to_nchw(y, 2, 9, 3);
    CHECK(n.shape[0] == 2);
    CHECK(n.shape[1] == 27);
    return nn::mean(nn::mul(n, n));
  });
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("adam first step moves by lr and solves a quadratic") {
  nn::ParamStore ps;
  ps.add("w", {1, 1}, 0.0, nullptr);
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    ps.watch(tape);
    Tensor loss = nn::sum(ps.at("w"));
    tape.backward(loss);
    ps.adam_step(tape, cfg);
  }
  CHECK(ps.at("w").data()[0] == doctest::Approx(-0.1).epsilon(1e-9));

  ps.at("w").data()[0] = 0.0;
  for (int i = 0; i < 100; ++i) {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    ps.watch(tape);
    Tensor d = nn::add_scalar(ps.at("w"), -3.0);
    tape.backward(nn::sum(nn::mul(d, d)));
    ps.adam_step(tape, cfg);
  }
  CHECK(std::fabs(ps.at("w").data()[0] - 3.0) < 0.5);
}

TEST_CASE("loss built from unwatched params is constant and backward rejects it") {
  nn::ParamStore ps;
  Rng rng(1);
  ps.add("w", {2, 2}, 0.5, &rng);
  nn::Tape tape;
  nn::TapeScope scope(tape);
  Tensor loss = nn::mean(nn::mul(ps.at("w"), ps.at("w")));
  CHECK(loss.node < 0);
  CHECK_THROWS_WITH_AS(tape.backward(loss), "backward: loss is not tracked on this tape",
                       std::invalid_argument);
}

TEST_CASE("unwatched stores act as constants") {
  Rng rng(2);
  nn::ParamStore online, target;
  online.add("w", {2, 2}, 0.5, &rng);
  target.add("w", {2, 2}, 0.5, &rng);
  nn::Tape tape;
  nn::TapeScope scope(tape);
  online.watch(tape);
  Tensor loss = nn::mean(nn::mul(online.at("w"), target.at("w")));
  tape.backward(loss);
  auto g = online.grad_of(tape, "w");
  bool nonzero = false;
  for (double x : g) nonzero |= (x != 0.0);
  CHECK(nonzero);
  CHECK_FALSE(nn::tracked(target.at("w")));
}

TEST_CASE("polyak interpolates and tau=1 copies") {
  nn::ParamStore a, b;
  a.add("w", {1, 2}, 0.0, nullptr);
  b.add("w", {1, 2}, 0.0, nullptr);
  a.at("w").data()[0] = 1.0;
  a.at("w").data()[1] = -2.0;
  b.at("w").data()[0] = 3.0;
  b.at("w").data()[1] = 2.0;
  b.polyak_from(a, 0.25);
  CHECK(b.at("w").data()[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(b.at("w").data()[1] == doctest::Approx(1.0).epsilon(1e-15));
  b.polyak_from(a, 1.0);
  CHECK(b.value_hash() == a.value_hash());
}

TEST_CASE("param store save restores values adam state and hash") {
  Rng rng(9);
  nn::ParamStore ps;
  ps.add("a", {3, 3}, 0.4, &rng);
  ps.add("b", {1, 5}, 0.2, &rng);
  for (int i = 0; i < 3; ++i) {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    ps.watch(tape);
    tape.backward(nn::mean(nn::mul(ps.at("a"), ps.at("a"))));
    ps.adam_step(tape, nn::AdamConfig{});
  }
  const uint64_t h = ps.value_hash();
  std::stringstream ss;
  ps.save(ss);
  nn::ParamStore ps2;
  ps2.add("a", {3, 3}, 0.0, nullptr);
  ps2.add("b", {1, 5}, 0.0, nullptr);
  ps2.load(ss);
  CHECK(ps2.value_hash() == h);
  // one more identical step stays in lockstep (moments restored too)
  auto step = [](nn::ParamStore& s) {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    s.watch(tape);
    tape.backward(nn::mean(nn::mul(s.at("a"), s.at("a"))));
    s.adam_step(tape, nn::AdamConfig{});
  };
  step(ps);
  step(ps2);
  CHECK(ps2.value_hash() == ps.value_hash());
}

TEST_CASE("checkpoint sections round trip bit-exact") {
  const std::string path = "test_ckpt_roundtrip.bin";
  {
    CheckpointWriter w;
    auto& os = w.section("alpha");
    const double x = 0.1 + 0.2;
    os.write(reinterpret_cast<const char*>(&x), sizeof(x));
    w.section("beta") << "text payload";
    w.write(path);
  }
  CheckpointReader r(path);
  CHECK(r.has("alpha"));
  CHECK(r.has("beta"));
  CHECK_FALSE(r.has("gamma"));
  auto is = r.open("alpha");
  double x = 0;
  is.read(reinterpret_cast<char*>(&x), sizeof(x));
  CHECK(x == 0.1 + 0.2);
  std::stringstream ss;
  ss << r.open("beta").rdbuf();
  CHECK(ss.str() == "text payload");
  std::remove(path.c_str());
}

TEST_CASE("discounted inner product weights the first step by gamma") {
  CHECK(discounted_inner({1, 1}, {2, 4}, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(discounted_inner({3}, {2}, 0.9) == doctest::Approx(5.4).epsilon(1e-12));
  CHECK(discounted_inner({1, 0, 2}, {1, 5, 1}, 0.5) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("cf targets lie on the unit circle and match the inner product") {
  Rng rng(21);
  OmegaBatch om = sample_omegas(8, 3, rng);
  std::vector<std::vector<double>> rs = {{1, 0, -1}, {0.5, 0.5, 0.5}};
  CfTargets t = cf_targets(om, rs, 0.9);
  CHECK(t.cos_t.shape[0] == 2);
  CHECK(t.cos_t.shape[1] == 8);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 8; ++j) {
      const double c = t.cos_t.data()[i * 8 + j];
      const double s = t.sin_t.data()[i * 8 + j];
      CHECK(c * c + s * s == doctest::Approx(1.0).epsilon(1e-12));
      std::vector<double> w(3);
      for (int k = 0; k < 3; ++k) w[k] = om.omegas.data()[j * 3 + k];
      CHECK(c == doctest::Approx(std::cos(discounted_inner(w, rs[i], 0.9))).epsilon(1e-12));
    }
}

TEST_CASE("squared loss vanishes and similarity saturates at the targets") {
  Rng rng(33);
  OmegaBatch om = sample_omegas(16, 2, rng);
  std::vector<std::vector<double>> rs = {{1, 2}, {0, 1}, {-1, 0.5}};
  CfTargets t = cf_targets(om, rs, 0.8);
  Tensor w = wse_loss(t.cos_t, t.sin_t, t);
  Tensor s = scs_loss(t.cos_t, t.sin_t, t);
  CHECK(std::fabs(w.item()) <= 1e-12);
  CHECK(std::fabs(s.item() + 1.0) <= 1e-9);
  Tensor comb = combined_loss(t.cos_t, t.sin_t, t, 0.5);
  CHECK(comb.item() == doctest::Approx(w.item() + 0.5 * s.item()).epsilon(1e-12));
}

TEST_CASE("similarity is insensitive to predictor scale") {
  Rng rng(34);
  OmegaBatch om = sample_omegas(16, 2, rng);
  std::vector<std::vector<double>> rs = {{1, 2}, {0, 1}};
  CfTargets t = cf_targets(om, rs, 0.8);
  Rng prng(35);
  std::vector<double> pc(2 * 16), psn(2 * 16);
  for (auto& x : pc) x = prng.normal();
  for (auto& x : psn) x = prng.normal();
  double base = 0, worst = 0;
  for (double k : {1.0, 0.1, 10.0}) {
    std::vector<double> c(pc), s(psn);
    for (auto& x : c) x *= k;
    for (auto& x : s) x *= k;
    const double v =
        scs_loss(Tensor::from({2, 16}, c), Tensor::from({2, 16}, s), t).item();
    if (k == 1.0)
      base = v;
    else
      worst = std::max(worst, std::fabs(v - base));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("losses backpropagate through both heads") {
  Rng rng(36);
  OmegaBatch om = sample_omegas(8, 2, rng);
  std::vector<std::vector<double>> rs = {{0.3, -1}, {2, 0.1}};
  CfTargets t = cf_targets(om, rs, 0.9);
  nn::ParamStore ps;
  ps.add("c", {2, 8}, 0.5, &rng);
  ps.add("s", {2, 8}, 0.5, &rng);
  auto rep = nn::finite_diff_check(
      [&] { return combined_loss(ps.at("c"), ps.at("s"), t, 0.5); }, ps, 1e-5, 64, 77);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("monte carlo characteristic function matches a point mass") {
  std::vector<std::vector<double>> samples(5, std::vector<double>{1.0, -0.5});
  std::vector<double> omega = {0.7, 1.3};
  const double theta = discounted_inner(omega, samples[0], 0.9);
  std::complex<double> cf = empirical_cf(samples, omega, 0.9);
  CHECK(cf.real() == doctest::Approx(std::cos(theta)).epsilon(1e-12));
  CHECK(cf.imag() == doctest::Approx(std::sin(theta)).epsilon(1e-12));
  CHECK_THROWS_AS(empirical_cf({}, omega, 0.9), std::invalid_argument);
}

import math

import pytest

import cresplab as cl


def test_discounted_inner():
    assert cl.discounted_inner([1, 1], [2, 4], 0.5) == pytest.approx(2.0, abs=1e-12)
    assert cl.discounted_inner([3], [2], 0.9) == pytest.approx(5.4, abs=1e-12)


def test_losses_at_exact_targets():
    omegas = cl.sample_omegas(16, 2, seed=7)
    rseqs = [[1.0, 0.5], [0.0, -1.0], [0.25, 0.25]]
    cos_t, sin_t = cl.cf_targets(omegas, rseqs, 0.9)
    losses = cl.cf_losses(omegas, rseqs, 0.9, cos_t, sin_t, lam=0.5)
    assert losses["wse"] == pytest.approx(0.0, abs=1e-12)
    assert losses["scs"] == pytest.approx(-1.0, abs=1e-9)
    assert losses["combined"] == pytest.approx(losses["wse"] + 0.5 * losses["scs"], abs=1e-12)


def test_exact_cf_matches_sampling():
    m = cl.random_pomdp(seed=11, n_states=4, n_actions=2, n_rewards=3, gamma=0.9)
    aseq = [0, 1]
    omega = [0.7, -1.3]
    re, im = m.exact_cf(0, aseq, omega)
    assert re * re + im * im <= 1.0 + 1e-12
    draws = m.sample_reward_seqs(0, aseq, 30000, seed=5)
    acc_re = acc_im = 0.0
    for r in draws:
        th = cl.discounted_inner(omega, r, m.gamma)
        acc_re += math.cos(th)
        acc_im += math.sin(th)
    assert re == pytest.approx(acc_re / len(draws), abs=0.02)
    assert im == pytest.approx(acc_im / len(draws), abs=0.02)


def test_gap_audit_and_partition():
    m = cl.random_pomdp(seed=3, n_states=5, n_actions=2, n_rewards=2, gamma=0.8)
    prev = 0
    for t in (1, 2, 3):
        blocks = len(set(m.partition(t)))
        assert blocks >= prev
        prev = blocks
        audit = m.gap_audit(t)
        assert audit["pass"]
        assert audit["min_gap"] >= -1e-9
        assert audit["max_gap"] <= audit["bound"] + 1e-12


def test_oracle_verify():
    n_pass, n_total = cl.oracle_verify(instances=4, t_values=[1, 2], seed=9)
    assert (n_pass, n_total) == (8, 8)


def test_config_echo_is_fixpoint():
    text = "[run]\nsteps = 400\nobjective = RSP\n[aux]\nkappa = 8\n"
    echo = cl.validate_config(text)
    assert cl.validate_config(echo) == echo
    assert "objective = RSP" in echo
    with pytest.raises(RuntimeError, match="unknown key"):
        cl.validate_config("[run]\nstep = 1\n")


def test_tiny_training_run(tmp_path):
    cfg = f"""
[run]
out_dir = {tmp_path}/runs
steps = 300
eval_every = 150
eval_episodes = 2
checkpoint_every = 200
objective = RSP_SUM
replay_capacity = 2000

[env]
family = tabular
episode_len = 40

[agent]
batch = 16
aux_batch = 8
hidden = 32
enc_hidden = 32
repr_dim = 8
init_steps = 100

[aux]
T = 1
pred_hidden = 32
"""
    out = cl.train(cfg, seed=4)
    assert out["steps_done"] == 300
    assert len(out["eval_test_returns"]) >= 2
    assert (tmp_path / "runs").exists()
    assert math.isfinite(out["final_test_return"])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dagforge.dag_core import num_params
from dagforge.policy_opt import (
    AdamState,
    PolicyParams,
    TrainConfig,
    _continuous_grad,
    adam_step,
    continuous_loss,
    entropy,
    entropy_grad,
    log_prob,
    log_prob_grad,
    ppo_objective,
    ppo_objective_grad,
    sample_actions,
    train,
    train_continuous_st,
)
from dagforge.scoring import Dataset, NumericalError, ScoreConfig


def fd_grad(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def _random_params(rng, dim):
    return PolicyParams(rng.normal(size=dim), rng.normal(scale=0.5, size=dim))


def test_log_prob_gradient_fd():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        p = _random_params(rng, 6)
        z = rng.normal(size=6) * 2
        a = np.concatenate(log_prob_grad(p, z))
        f = fd_grad(lambda th: log_prob(p.with_flat(th), z), p.flat())
        worst = max(worst, rel_err(a, f))
    assert worst <= 1e-5


def test_entropy_gradient_fd():
    rng = np.random.default_rng(1)
    p = _random_params(rng, 5)
    a = np.concatenate(entropy_grad(p))
    f = fd_grad(lambda th: entropy(p.with_flat(th)), p.flat())
    assert rel_err(a, f) <= 1e-5


@pytest.mark.parametrize("ent", [0.0, 0.3])
def test_ppo_gradient_fd(ent):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        p = _random_params(rng, 4)
        old = PolicyParams(p.mu + rng.normal(scale=0.2, size=4), p.log_sigma + rng.normal(scale=0.1, size=4))
        z, _ = sample_actions(old, 16, rng)
        old_lp = log_prob(old, z)
        adv = rng.normal(size=16)
        a = np.concatenate(ppo_objective_grad(p, z, old_lp, adv, 0.2, ent))
        f = fd_grad(lambda th: ppo_objective(p.with_flat(th), z, old_lp, adv, 0.2, ent), p.flat())
        worst = max(worst, rel_err(a, f))
    assert worst <= 1e-5


def test_continuous_gradient_fd():
    # Straight-through is exact whenever the ordering is held fixed; check E entries plus L1.
    rng = np.random.default_rng(3)
    d = 4
    x = rng.normal(size=(50, d))
    gram = x.T @ x
    for _ in range(20):
        z = rng.normal(size=num_params(d))
        _, g = _continuous_grad(z, gram, 50, 0.01)
        f = fd_grad(lambda zz: continuous_loss(zz, gram, 50, 0.01), z)
        np.testing.assert_allclose(g[d:], f[d:], rtol=1e-5, atol=1e-7)


def test_gradient_at_zero_is_entropy_only():
    p = PolicyParams.init(3)
    z = np.zeros((4, 3))
    gm, gl = ppo_objective_grad(p, z, log_prob(p, z), np.zeros(4), 0.2, 0.0)
    assert not gm.any() and not gl.any()


def test_adam_first_step_sign():
    st_ = AdamState.zeros(3, 0.01)
    theta = adam_step(st_, np.zeros(3), np.array([5.0, -0.2, 0.0]))
    np.testing.assert_allclose(theta, [-0.01, 0.01, 0.0], rtol=1e-5)


def test_adam_rejects_nonfinite():
    with pytest.raises(NumericalError):
        adam_step(AdamState.zeros(2, 0.1), np.zeros(2), np.array([np.nan, 0.0]))


def test_sample_shapes_and_clamp():
    p = PolicyParams(np.array([20.0, 0.0]), np.zeros(2), gamma_clip=10.0)
    pre, act = sample_actions(p, 100, np.random.default_rng(0))
    assert pre.shape == act.shape == (100, 2)
    assert act[:, 0].max() <= 10.0 and pre[:, 0].min() > 10.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_clamp_transparent_when_far_from_bound(dim, seed):
    rng = np.random.default_rng(seed)
    mu = rng.uniform(-1, 1, size=dim)
    ls = rng.uniform(-2, np.log(1.5), size=dim)
    p = PolicyParams(mu, ls, gamma_clip=10.0)
    assert np.all(np.abs(mu) + 5 * np.exp(ls) < 10)
    pre, act = sample_actions(p, 10_000, rng)
    altered = np.any(pre != act, axis=1).mean()
    assert altered <= 0.01


def test_sample_count_validation():
    with pytest.raises(ValueError):
        sample_actions(PolicyParams.init(2), 0, np.random.default_rng())


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(algorithm="DQN")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig().lr == 3e-4
    assert TrainConfig(algorithm="a2c").lr == 7e-4


def _small_problem(seed=0, n=300):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    x1 = 1.5 * x0 + rng.normal(size=n)
    x2 = -x1 + rng.normal(size=n)
    return Dataset(np.column_stack([x0, x1, x2])), np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])


@pytest.mark.parametrize("algo", ["PPO", "A2C", "VPG"])
def test_deterministic(algo):
    data, _ = _small_problem()
    cfg = TrainConfig(algorithm=algo, total_steps=30, batch_size=16, seed=5)
    a, b = train(data, cfg), train(data, cfg)
    assert np.array_equal(a.best_dag, b.best_dag)
    assert [r.mean_reward for r in a.trace] == [r.mean_reward for r in b.trace]
    assert np.array_equal(a.params.mu, b.params.mu)


def test_trace_monotone_best():
    data, truth = _small_problem()
    res = train(data, TrainConfig(total_steps=50, batch_size=16), truth=truth)
    best = [r.best_reward for r in res.trace]
    assert best == sorted(best)
    assert len(res.trace) == 50 and res.trace[-1].best_shd is not None


def test_batch_size_one():
    data, _ = _small_problem()
    res = train(data, TrainConfig(total_steps=20, batch_size=1, ppo_minibatch=1))
    assert np.isfinite(res.best_reward)


def test_entropy_bonus_grows_sigma():
    data, _ = _small_problem()
    res = train(data, TrainConfig(total_steps=200, batch_size=8, entropy_coef=1.0))
    assert np.all(res.params.log_sigma > 0)


def test_early_stopping():
    data, _ = _small_problem()
    res = train(data, TrainConfig(total_steps=5000, batch_size=32, patience=50))
    assert res.steps_run < 5000


@pytest.mark.parametrize("algo", ["PPO", "A2C", "VPG"])
def test_recovers_chain(algo):
    data, truth = _small_problem(n=1000)
    res = train(data, TrainConfig(algorithm=algo, total_steps=600, batch_size=32, seed=1),
                ScoreConfig("BIC_EV"), truth=truth)
    assert res.trace[-1].best_shd == 0


def _zero_noise_pair():
    x1 = np.random.default_rng(0).normal(size=1000)
    return Dataset(np.column_stack([x1, 2 * x1]))


def test_continuous_two_node_weight():
    # Closed-form oracle for the selected orientation: 2 forward, 0.5 reverse.
    W, losses = train_continuous_st(_zero_noise_pair(), lr=1e-3, lambda1=0.0, max_iters=20_000, seed=0)
    oracle = 2.0 if W[0, 1] else 0.5
    assert W.max() == pytest.approx(oracle, abs=0.1)


def test_continuous_st_potential_gradient_points_to_tie():
    # With M_01 = E H(p1 - p0), the straight-through gradient on p1 is
    # +2 E^2 n / S in the forward state and -8 E^2 n / S in the reverse state.
    data = _zero_noise_pair()
    gram, n = data.x.T @ data.x, data.n
    E = 0.7
    for p, sign in (([0.0, 1.0], 1), ([1.0, 0.0], -1)):
        z = np.array([*p, E])
        _, g = _continuous_grad(z, gram, n, 0.0)
        assert np.sign(g[1]) == sign and g[0] == pytest.approx(-g[1])


def test_continuous_heavy_l1_is_edgeless():
    data, _ = _small_problem()
    W, _ = train_continuous_st(data, lr=1e-2, lambda1=1e3, max_iters=3000, seed=0)
    assert np.abs(W).max() < 0.3


@pytest.mark.slow
def test_reward_argmax_matches_truth_and_ppo_finds_it():
    from dagforge.dag_core import dag_to_vec, enumerate_dags
    from dagforge.scoring import ScoreCache, reward
    from dagforge.synth import GraphSpec, SemSpec, gen_graph, simulate

    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(40 + seed)
        G = gen_graph(GraphSpec(3, "ER", 1), rng)
        data = simulate(G, SemSpec(n=10_000), rng)
        cfg, cache = ScoreConfig("BIC_EV"), ScoreCache()
        best = max(enumerate_dags(3), key=lambda A: reward(data, dag_to_vec(A), cfg, cache))
        assert np.array_equal(best, G)
        res = train(data, TrainConfig(total_steps=5000, seed=seed, patience=500), cfg, cache=cache)
        hits += np.array_equal(res.best_dag, best)
    assert hits >= 4

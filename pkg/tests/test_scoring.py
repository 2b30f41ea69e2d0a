import math

import numpy as np
import pytest

from dagforge.dag_core import dag_to_vec, enumerate_dags, num_params
from dagforge.gp_kernel import GpConfig
from dagforge.scoring import (
    DataFormatError,
    Dataset,
    NumericalError,
    ScoreCache,
    ScoreConfig,
    batch_rewards,
    load_csv,
    reward,
    score,
    ssr,
)

TOY = Dataset(np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]))
EMPTY = np.zeros((2, 2), dtype=int)
ONE_TO_TWO = np.array([[0, 1], [0, 0]])


def test_ssr_empty_parents():
    assert ssr(TOY, 0, []) == pytest.approx(4.0)


def test_ssr_perfect_fit():
    x = np.linspace(-1, 1, 7)
    data = Dataset(np.column_stack([x, 2 * x]))
    assert ssr(data, 1, [0]) == pytest.approx(0.0, abs=1e-20)


def test_ssr_orthogonal_parent():
    assert ssr(TOY, 1, [0]) == pytest.approx(4.0)


def test_ssr_intercept_is_fitted():
    x = np.arange(6.0)
    data = Dataset(np.column_stack([x, 3 * x + 100]))
    assert ssr(data, 1, [0]) == pytest.approx(0.0, abs=1e-16)
    assert ssr(data, 1, [0], intercept=False) > 1.0


def test_ssr_rank_deficient_uses_pinv():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(20)
    x = np.column_stack([a, 2 * a, a + rng.standard_normal(20)])
    data = Dataset(x)
    val = ssr(data, 2, [0, 1])
    assert val == pytest.approx(ssr(data, 2, [0]), rel=1e-10)


def test_ssr_rejects_self_parent():
    with pytest.raises(ValueError):
        ssr(TOY, 0, [0])


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0, np.nan], [0.0, 1.0]]))


@pytest.mark.parametrize(
    "kind,graph,expected",
    [
        ("BIC_EV", EMPTY, 0.0),
        ("BIC_EV", ONE_TO_TWO, -math.log(4)),
        ("LS", EMPTY, -8.0),
        ("BIC_NV", EMPTY, 0.0),
    ],
)
def test_score_examples(kind, graph, expected):
    assert score(TOY, graph, ScoreConfig(kind=kind)) == pytest.approx(expected, abs=1e-12)


def test_reward_scaling():
    z = np.zeros(num_params(2))
    assert reward(TOY, z, ScoreConfig("BIC_EV")) == 0.0
    assert reward(TOY, z, ScoreConfig("LS")) == pytest.approx(-1.0)


def test_score_requires_matching_shape():
    with pytest.raises(ValueError):
        score(TOY, np.zeros((3, 3)), ScoreConfig())


def test_ssr_floor_avoids_log_zero():
    x = np.linspace(0, 1, 10)
    data = Dataset(np.column_stack([x, 2 * x]))
    s = score(data, ONE_TO_TWO, ScoreConfig("BIC_NV"))
    assert np.isfinite(s)


def test_config_validation():
    assert ScoreConfig("bic-ev").kind == "BIC_EV"
    with pytest.raises(ValueError):
        ScoreConfig("BDE")
    with pytest.raises(ValueError):
        ScoreConfig(lambda0=-1)


def _random_case(rng, d):
    n = int(rng.integers(5, 40))
    data = Dataset(rng.standard_normal((n, d)) * rng.uniform(0.5, 3, d))
    dags = enumerate_dags(d)
    return data, dags[rng.integers(len(dags))]


@pytest.mark.parametrize("kind", ["BIC_EV", "BIC_NV", "LS"])
def test_cache_is_bit_identical(kind):
    rng = np.random.default_rng(11)
    cfg = ScoreConfig(kind=kind, lambda0=0.5)
    for _ in range(1000 if kind == "BIC_EV" else 200):
        d = int(rng.integers(2, 5))
        data, A = _random_case(rng, d)
        cache = ScoreCache()
        first = score(data, A, cfg, cache)
        again = score(data, A, cfg, cache)
        fresh = score(data, A, cfg, None)
        assert first == again == fresh


def test_cache_lru_bound():
    cache = ScoreCache(maxsize=3)
    for k in range(5):
        cache.put((0, k), float(k))
    assert len(cache) == 3
    assert cache.get((0, 0)) is None and cache.get((0, 4)) == 4.0


def test_batch_rewards_match_single():
    rng = np.random.default_rng(5)
    d = 5
    data = Dataset(rng.standard_normal((50, d)))
    cfg = ScoreConfig("BIC_EV")
    Z = rng.standard_normal((40, num_params(d)))
    r, masks = batch_rewards(data, Z, cfg, ScoreCache())
    for k in range(40):
        assert r[k] == pytest.approx(reward(data, Z[k], cfg), rel=1e-13, abs=1e-15)
    assert masks.shape == (40, d)


def test_sparsity_monotonicity():
    # Parent column orthogonal to child and centred: OLS coefficient exactly 0.
    x1 = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    x2 = np.array([1.0, 1.0, -1.0, -1.0, 2.0, 2.0, -2.0, -2.0])
    data = Dataset(np.column_stack([x1, x2]))
    assert ssr(data, 1, [0]) == pytest.approx(ssr(data, 1, []), rel=1e-14)
    ln_n = math.log(data.n)
    for kind, delta in (("BIC_EV", ln_n), ("BIC_NV", ln_n), ("LS", 0.25)):
        cfg = ScoreConfig(kind, lambda0=0.25)
        drop = score(data, EMPTY, cfg) - score(data, ONE_TO_TWO, cfg)
        assert drop == pytest.approx(delta, rel=1e-9)


def test_reward_preserves_argmax():
    rng = np.random.default_rng(2)
    data = Dataset(rng.standard_normal((30, 3)))
    cfg = ScoreConfig("BIC_EV")
    dags = enumerate_dags(3)
    scores = [score(data, A, cfg) for A in dags]
    rewards = [reward(data, dag_to_vec(A), cfg) for A in dags]
    assert int(np.argmax(scores)) == int(np.argmax(rewards))


def test_gp_regressor_path():
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, 60)
    data = Dataset(np.column_stack([x, np.sin(x) + 0.05 * rng.standard_normal(60)]))
    cfg = ScoreConfig("BIC_NV", regressor="GP", gp=GpConfig(alpha=0.01))
    assert score(data, ONE_TO_TWO, cfg) > score(data, EMPTY, cfg)


def test_load_csv_header_detection(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    data = load_csv(p)
    assert data.x.tolist() == [[1, 2], [3, 4]]
    assert data.meta["columns"] == ["a", "b"]
    p.write_text("1,2\n3,4\n5,6\n")
    assert load_csv(p).n == 3


def test_load_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,4\n5\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_csv(p)
    p.write_text("1,2\n3,x\n")
    with pytest.raises(DataFormatError, match="line 2"):
        load_csv(p)


def test_numerical_error_type():
    assert issubclass(NumericalError, ArithmeticError)

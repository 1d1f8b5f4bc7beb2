import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from admmtrack.process import (AR1Process, ParameterState, ProcessConfig, ar1_step,
                               curvature_constants, dump_state_csv, load_state_csv,
                               local_gradient, stacked_gradient, stationary_sample)

from conftest import random_theta


def scalar_ar_variance(eps, steps, seed, burn=20_000):
    """Long-run variance of ``a' = (1 - eps) a + eps v`` run from zero."""
    v = np.random.default_rng(seed).standard_normal(steps + burn)
    a = lfilter([eps], [1.0, -(1.0 - eps)], v)
    return float(np.var(a[burn:]))


def test_stationary_variance_fixed_point():
    assert ProcessConfig(epsilon_ar=1.0).stationary_variance == 1.0
    cfg = ProcessConfig(epsilon_ar=0.01)
    assert cfg.stationary_variance == pytest.approx(0.01 / 1.99)
    assert cfg.stationary_variance == pytest.approx(5.025e-3, rel=1e-3)
    s = cfg.stationary_variance
    assert (1 - 0.01) ** 2 * s + 0.01 ** 2 == pytest.approx(s, rel=1e-14)


def test_stationary_variance_matches_long_scalar_recursion():
    emp = scalar_ar_variance(0.01, 4_000_000, seed=1)
    assert emp == pytest.approx(ProcessConfig(epsilon_ar=0.01).stationary_variance, rel=0.02)


def test_eps_one_is_standard_normal():
    cfg = ProcessConfig(n_nodes=200, rows_per_node=5, p=4, epsilon_ar=1.0)
    s = stationary_sample(cfg, np.random.default_rng(0))
    pooled = np.concatenate([s.H.ravel(), s.y.ravel()])
    assert pooled.var() == pytest.approx(1.0, rel=0.03)


def test_determinism():
    cfg = ProcessConfig()
    a = stationary_sample(cfg, np.random.default_rng(5))
    b = stationary_sample(cfg, np.random.default_rng(5))
    assert np.array_equal(a.H, b.H) and np.array_equal(a.y, b.y)
    a2 = ar1_step(a, cfg, np.random.default_rng(9))
    b2 = ar1_step(b, cfg, np.random.default_rng(9))
    assert np.array_equal(a2.H, b2.H) and np.array_equal(a2.y, b2.y)
    assert a2.k == 1


def test_eps_zero_is_identity():
    cfg = ProcessConfig(epsilon_ar=0.0)
    s = stationary_sample(cfg, np.random.default_rng(1))
    t = ar1_step(s, cfg, np.random.default_rng(2))
    assert np.array_equal(s.H, t.H) and np.array_equal(s.y, t.y)


def test_eps_one_forgets_input():
    cfg = ProcessConfig(epsilon_ar=1.0)
    a = stationary_sample(cfg, np.random.default_rng(1))
    b = stationary_sample(cfg, np.random.default_rng(2))
    a2 = ar1_step(a, cfg, np.random.default_rng(3))
    b2 = ar1_step(b, cfg, np.random.default_rng(3))
    assert np.array_equal(a2.H, b2.H) and np.array_equal(a2.y, b2.y)


def test_step_innovation_order():
    cfg = ProcessConfig(n_nodes=2, rows_per_node=2, p=3, epsilon_ar=1.0)
    s = ar1_step(stationary_sample(cfg, np.random.default_rng(0)), cfg, np.random.default_rng(4))
    draws = np.random.default_rng(4).standard_normal(cfg.draws_per_step)
    assert np.array_equal(s.H[0].ravel(), draws[:6])
    assert np.array_equal(s.y[0], draws[6:8])
    assert np.array_equal(s.H[1].ravel(), draws[8:14])


def test_iterated_chain_preserves_variance():
    cfg = ProcessConfig(n_nodes=100, rows_per_node=3, p=3, epsilon_ar=0.01)
    proc = AR1Process(cfg)
    rng = np.random.default_rng(2024)
    s = proc.stationary_sample(rng)
    acc = sq = 0.0
    count = 0
    for _ in range(1000):
        s = proc.step(s, rng)
        acc += s.H.sum() + s.y.sum()
        sq += (s.H ** 2).sum() + (s.y ** 2).sum()
        count += s.H.size + s.y.size
    var = sq / count - (acc / count) ** 2
    assert var == pytest.approx(cfg.stationary_variance, rel=0.02)


def test_state_validation():
    with pytest.raises(ValueError):
        ParameterState(np.zeros((2, 3, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ParameterState(np.full((1, 1, 1), np.nan), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        ProcessConfig(epsilon_ar=1.5)


def test_curvature_identity():
    s = ParameterState(np.tile(np.eye(3), (4, 1, 1)), np.zeros((4, 3)))
    assert curvature_constants(s) == pytest.approx((1.0, 1.0))


def test_curvature_rank_deficient():
    s = stationary_sample(ProcessConfig(rows_per_node=2, p=3), np.random.default_rng(0))
    mu, L = curvature_constants(s)
    assert mu == 0.0 and L > 0


def test_curvature_against_explicit_gram():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = random_theta(rng, 5, 3, 3)
        grams = [s.H[i].T @ s.H[i] for i in range(5)]
        eig = np.concatenate([scipy.linalg.eigh(G, eigvals_only=True) for G in grams])
        mu, L = curvature_constants(s)
        assert mu == pytest.approx(max(eig.min(), 0.0), abs=1e-12)
        assert L == pytest.approx(eig.max(), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), c=st.floats(0.1, 10.0))
def test_curvature_scales_quadratically(seed, c):
    s = random_theta(np.random.default_rng(seed), 3, 4, 3)
    mu, L = curvature_constants(s)
    mu_c, L_c = curvature_constants(ParameterState(c * s.H, s.y))
    assert mu_c == pytest.approx(c ** 2 * mu, rel=1e-8, abs=1e-12)
    assert L_c == pytest.approx(c ** 2 * L, rel=1e-10)


def test_gradient_trivial_cases():
    v = np.array([1.0, -2.0, 0.5])
    s = ParameterState(np.tile(np.eye(3), (2, 1, 1)), np.zeros((2, 3)))
    assert np.allclose(local_gradient(s, 1, v), v)
    z = ParameterState(np.zeros((2, 3, 3)), np.ones((2, 3)))
    assert np.array_equal(local_gradient(z, 0, v), np.zeros(3))
    with pytest.raises(IndexError):
        local_gradient(s, 2, v)


def test_gradient_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(100):
        s = random_theta(rng, 3, 4, 3)
        i = int(rng.integers(3))
        x = rng.standard_normal(3)

        def f(v):
            r = s.H[i] @ v - s.y[i]
            return 0.5 * r @ r

        fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)])
        assert np.allclose(local_gradient(s, i, x), fd, atol=1e-4)


def test_stacked_gradient_matches_local():
    rng = np.random.default_rng(8)
    s = random_theta(rng, 4, 3, 2)
    x = rng.standard_normal(8)
    expect = np.concatenate([local_gradient(s, i, x[2 * i:2 * i + 2]) for i in range(4)])
    assert np.allclose(stacked_gradient(s, x), expect, atol=1e-14)


def test_csv_dump_round_trip(tmp_path):
    s = ar1_step(stationary_sample(ProcessConfig(), np.random.default_rng(0)), ProcessConfig(),
                 np.random.default_rng(1))
    path = tmp_path / "theta.csv"
    dump_state_csv(s, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:4] == ["k", "node", "H_0_0", "H_0_1"]
    back = load_state_csv(path)
    assert np.array_equal(back.H, s.H) and np.array_equal(back.y, s.y) and back.k == 1

"""Surrogate bound: psi arithmetic, convexity, minimizer, constants, curves."""

import itertools

import numpy as np
import pytest

from streamfed import (
    BoundCoefficients,
    EstimatedConstants,
    emit_bound_curves,
    estimate_c_ratio,
    estimate_constants,
    even_split_sizes,
    l2_ball,
    minimize_psi,
    project_simplex,
    psi,
    psi_subgradient,
    squared_loss_spec,
    strategy_importance,
    write_curves_csv,
)


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng([2031, tag])


def _coeffs(rng, M=None, M_hist=None, c0=0.0):
    M = M or int(rng.integers(2, 9))
    if M_hist is None:
        M_hist = int(rng.integers(1, M))
    n = rng.dirichlet(np.ones(M)) + 0.02
    n /= n.sum()
    return BoundCoefficients(
        c0=c0, c1=float(rng.uniform(0.1, 2.0)), c2=float(rng.uniform(0.1, 2.0)),
        n=n, M_hist=M_hist,
    )


def test_psi_arithmetic_example():
    c = BoundCoefficients(c0=0.0, c1=1.0, c2=1.0, n=np.array([0.5, 0.5]), M_hist=1)
    # fresh norm sqrt(0.25) = 0.5; size term sqrt(0.25/0.5 + 0.25/0.5) = 1
    assert abs(psi(np.array([0.5, 0.5]), c) - 1.5) <= 1e-15


def test_psi_offset_and_scaling():
    rng = _rng(0)
    c = _coeffs(rng, M=4, M_hist=2)
    p = rng.dirichlet(np.ones(4))
    base = psi(p, c)
    shifted = BoundCoefficients(c0=0.7, c1=c.c1, c2=c.c2, n=c.n, M_hist=c.M_hist)
    assert abs(psi(p, shifted) - base - 0.7) <= 1e-14
    doubled = BoundCoefficients(c0=0.0, c1=2 * c.c1, c2=2 * c.c2, n=c.n, M_hist=c.M_hist)
    assert abs(psi(p, doubled) - 2 * base) <= 1e-12


def test_psi_is_convex_on_random_triples():
    rng = _rng(1)
    for _ in range(1000):
        c = _coeffs(rng)
        M = c.n.size
        p1 = rng.dirichlet(np.ones(M))
        p2 = rng.dirichlet(np.ones(M))
        a = float(rng.uniform())
        lhs = psi(a * p1 + (1 - a) * p2, c)
        rhs = a * psi(p1, c) + (1 - a) * psi(p2, c)
        assert lhs <= rhs + 1e-12


def test_psi_subgradient_matches_finite_differences_interior():
    # psi only accepts simplex points, so finite differences run along
    # tangent directions e_i - e_j where the sum constraint is preserved
    rng = _rng(2)
    h = 1e-7
    for _ in range(100):
        c = _coeffs(rng)
        M = c.n.size
        p = rng.dirichlet(np.full(M, 5.0))  # interior: all coordinates positive
        g = psi_subgradient(p, c)
        i, j = rng.choice(M, size=2, replace=False)
        step = np.zeros(M)
        step[i] = h
        step[j] = -h
        fd = (psi(p + step, c) - psi(p - step, c)) / (2 * h)
        want = g[i] - g[j]
        assert abs(fd - want) <= 1e-6 * max(1.0, abs(want))


def test_psi_subgradient_inequality_everywhere():
    # psi(p') >= psi(p) + <g, p' - p> must hold at kinks too
    rng = _rng(3)
    for _ in range(200):
        c = _coeffs(rng)
        M = c.n.size
        corner = np.zeros(M)
        corner[: c.M_hist] = c.n[: c.M_hist] / c.n[: c.M_hist].sum()
        p = corner if rng.uniform() < 0.3 else rng.dirichlet(np.ones(M))
        g = psi_subgradient(p, c)
        p2 = rng.dirichlet(np.ones(M))
        assert psi(p2, c) >= psi(p, c) + g @ (p2 - p) - 1e-10


def _qp_oracle(v: np.ndarray) -> np.ndarray:
    # exhaustive KKT solve: try every support set, check feasibility and
    # the multiplier condition for the dropped coordinates
    best = None
    for r in range(1, v.size + 1):
        for support in itertools.combinations(range(v.size), r):
            s = list(support)
            mu = (1.0 - v[s].sum()) / len(s)
            p = np.zeros(v.size)
            p[s] = v[s] + mu
            if np.any(p[s] < -1e-12):
                continue
            off = [j for j in range(v.size) if j not in support]
            if off and np.any(v[off] + mu > 1e-12):
                continue
            val = 0.5 * ((p - v) ** 2).sum()
            if best is None or val < best[0] - 1e-15:
                best = (val, p)
    return best[1]


def test_project_simplex_matches_qp_oracle():
    rng = _rng(4)
    for _ in range(100):
        M = int(rng.integers(1, 6))
        v = rng.normal(scale=2.0, size=M)
        assert np.allclose(project_simplex(v), _qp_oracle(v), atol=1e-8)


def test_minimize_psi_corner_cases():
    rng = _rng(5)
    for _ in range(10):
        c = _coeffs(rng, M=6, M_hist=3)
        only_fresh = BoundCoefficients(c0=0.0, c1=c.c1, c2=0.0, n=c.n, M_hist=3)
        p_star, _ = minimize_psi(only_fresh)
        assert p_star[:3].sum() >= 1.0 - 1e-4
        only_size = BoundCoefficients(c0=0.0, c1=0.0, c2=c.c2, n=c.n, M_hist=3)
        p_star, val = minimize_psi(only_size)
        assert np.all(np.abs(p_star - c.n) <= 1e-6)
        assert abs(val - c.c2) <= 1e-9  # sqrt(sum n^2/n) = 1


def test_minimize_psi_matches_grid_oracle_two_clients():
    rng = _rng(6)
    for _ in range(20):
        n = rng.dirichlet(np.ones(2)) + 0.05
        n /= n.sum()
        c = BoundCoefficients(
            c0=0.0, c1=float(rng.uniform(0.2, 2.0)), c2=float(rng.uniform(0.2, 2.0)),
            n=n, M_hist=1,
        )
        hs = np.linspace(0.0, 1.0, 100001)
        vals = c.c1 * (1 - hs) + c.c2 * np.sqrt(hs**2 / n[0] + (1 - hs) ** 2 / n[1])
        p_star, v_star = minimize_psi(c)
        assert v_star <= vals.min() + 1e-6
        assert abs(p_star[0] - hs[vals.argmin()]) <= 1e-3


def test_minimize_psi_certified_against_fresh_candidates():
    rng = _rng(7)
    for _ in range(10):
        c = _coeffs(rng)
        p_star, v_star = minimize_psi(c)
        assert abs(p_star.sum() - 1.0) <= 1e-9
        assert np.all(p_star >= -1e-12)
        for _ in range(50):
            q = rng.dirichlet(np.ones(c.n.size))
            assert v_star <= psi(q, c) + 1e-9


def test_estimate_c_ratio_arithmetic_and_scaling():
    k = EstimatedConstants(B_hat=1.0, G_hat=1.0, D_hat=1.0, d=4, N=4, M=3, M_hist=2)
    assert abs(estimate_c_ratio(k) - 2.0) <= 1e-15  # (1 + 1) / (1 * 1 * 1)
    k2 = EstimatedConstants(B_hat=1.0, G_hat=2.0, D_hat=3.0, d=4, N=4, M=3, M_hist=2)
    assert abs(estimate_c_ratio(k2) - 2.0 / 6.0) <= 1e-15
    with pytest.raises(ValueError):
        estimate_c_ratio(EstimatedConstants(B_hat=1, G_hat=0, D_hat=1, d=4, N=4, M=3, M_hist=2))


def test_estimate_constants_zero_warmup_and_one_step():
    X = np.array([[0.6, 0.0], [0.0, 0.8]])
    y = np.array([1.0, -1.0])
    loss = squared_loss_spec(1.0, 1.0, 1.0)
    dom = l2_ball(2)
    k0 = estimate_constants(loss, dom, [(X, y)], d=2, N=2, M=2, M_hist=1, warmup_steps=0)
    # no steps: nothing observed
    assert (k0.B_hat, k0.G_hat, k0.D_hat) == (0.0, 0.0, 0.0)
    k1 = estimate_constants(
        loss, dom, [(X, y)], d=2, N=2, M=2, M_hist=1,
        warmup_steps=1, warmup_eta=0.1, warmup_batch=8,
    )
    # one full-batch step from 0: losses 0.5*y^2, grad -X^T y / n
    g0 = -(X.T @ y) / 2
    assert abs(k1.B_hat - 0.5) <= 1e-15
    assert abs(k1.G_hat - np.linalg.norm(g0)) <= 1e-12
    assert abs(k1.D_hat - 0.1 * np.linalg.norm(g0)) <= 1e-12
    # determinism
    k1b = estimate_constants(
        loss, dom, [(X, y)], d=2, N=2, M=2, M_hist=1,
        warmup_steps=1, warmup_eta=0.1, warmup_batch=8,
    )
    assert (k1.B_hat, k1.G_hat, k1.D_hat) == (k1b.B_hat, k1b.G_hat, k1b.D_hat)


def test_even_split_sizes():
    n = even_split_sizes(4, 2, 0.2)
    assert np.allclose(n, [0.1, 0.1, 0.4, 0.4], atol=1e-15)
    with pytest.raises(ValueError):
        even_split_sizes(4, 0, 0.2)
    with pytest.raises(ValueError):
        even_split_sizes(4, 4, 0.2)


def test_strategy_importance_kinds():
    n = np.array([0.1, 0.3, 0.2, 0.4])
    assert np.array_equal(strategy_importance("uniform", n, 2), n)
    hist = strategy_importance("historical", n, 2)
    assert np.allclose(hist, [0.25, 0.75, 0.0, 0.0], atol=1e-15)
    fresh = strategy_importance("fresh", n, 2)
    assert np.allclose(fresh, [0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0], atol=1e-15)
    half = strategy_importance("fixed_p_hist", n, 2, p_hist=0.5)
    assert np.allclose(half, [0.125, 0.375, 1.0 / 6.0, 1.0 / 3.0], atol=1e-15)
    with pytest.raises(ValueError):
        strategy_importance("historical", n, 0)
    with pytest.raises(ValueError):
        strategy_importance("fresh", n, 4)


def test_emit_bound_curves_monotone_and_reproducible(tmp_path):
    ratios = np.logspace(-3, 1, 9)
    scenarios = [(0.2, even_split_sizes(10, 5, 0.2), 5)]
    rows = emit_bound_curves(ratios, scenarios)
    assert len(rows) == 9
    ph = [r["p_hist_star"] for r in rows]
    assert all(ph[i + 1] <= ph[i] + 1e-4 for i in range(len(ph) - 1))
    assert all(r["psi_hist"] >= r["psi_star"] - 1e-12 for r in rows)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_curves_csv(rows, a)
    write_curves_csv(emit_bound_curves(ratios, scenarios), b)
    assert a.read_bytes() == b.read_bytes()

"""Risk-bound surrogate over client importances and its minimization.

The surrogate is

    psi(p; c) = c0 + c1 * sqrt(sum over fresh clients of p_m^2)
                   + c2 * sqrt(sum over all clients of p_m^2 / n_m)

over the probability simplex, where ``n`` holds the relative dataset sizes
and the first ``M_hist`` positions are the historical clients. The second
term penalizes concentrating importance on few samples (an effective sample
size penalty); the first penalizes mass on fresh clients, whose samples are
seen only briefly. Both terms are convex, so the minimizer is found by
projected subgradient descent with diminishing steps, certified post hoc
against a candidate set.

Only the ratio c2/c1 moves the argmin; c0 shifts values only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import DomainSpec, LossSpec, batch_losses, project, weighted_grad
from .streams import Purpose, substream

__all__ = [
    "BoundCoefficients",
    "EstimatedConstants",
    "ConvergenceError",
    "psi",
    "psi_subgradient",
    "project_simplex",
    "minimize_psi",
    "estimate_c_ratio",
    "estimate_constants",
    "strategy_importance",
    "even_split_sizes",
    "emit_bound_curves",
    "write_curves_csv",
    "CURVE_COLUMNS",
]


@dataclass(frozen=True)
class BoundCoefficients:
    """Constants and client layout for one surrogate instance.

    ``n`` must be a probability vector with every entry positive (clients
    with no data are rejected at input); the first ``M_hist`` entries are
    the historical clients.
    """

    c0: float
    c1: float
    c2: float
    n: np.ndarray
    M_hist: int

    def __post_init__(self) -> None:
        if min(self.c0, self.c1, self.c2) < 0:
            raise ValueError("c0, c1, c2 must be >= 0")
        n = np.asarray(self.n, dtype=float)
        object.__setattr__(self, "n", n)
        if n.ndim != 1 or n.size < 1:
            raise ValueError("n must be a nonempty vector")
        if np.any(n <= 0) or abs(n.sum() - 1.0) > 1e-9:
            raise ValueError("n must be a probability vector with all entries > 0")
        if not 0 <= self.M_hist <= n.size:
            raise ValueError("M_hist must lie in [0, M]")

    @property
    def M(self) -> int:
        return self.n.size


@dataclass(frozen=True)
class EstimatedConstants:
    """Warmup-estimated scales entering the coefficient-ratio heuristic."""

    B_hat: float
    G_hat: float
    D_hat: float
    d: int
    N: int
    M: int
    M_hist: int

    def __post_init__(self) -> None:
        if self.B_hat < 0 or self.G_hat < 0 or self.D_hat < 0:
            raise ValueError("estimated constants must be >= 0")
        if self.d < 1 or self.N < 1 or not 0 <= self.M_hist <= self.M:
            raise ValueError("bad dimensions")


class ConvergenceError(RuntimeError):
    """Minimization failed certification; carries the best point found."""

    def __init__(self, message: str, best_p: np.ndarray, best_value: float):
        super().__init__(message)
        self.best_p = best_p
        self.best_value = best_value


def _check_p(p: np.ndarray, M: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (M,):
        raise ValueError(f"p has shape {p.shape}, expected ({M},)")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must lie on the probability simplex")
    return np.clip(p, 0.0, None)


def psi(p: np.ndarray, c: BoundCoefficients) -> float:
    """Surrogate value at importance vector ``p``."""
    p = _check_p(p, c.M)
    if np.any((c.n <= 0) & (p > 0)):
        raise ValueError("importance on a client with no samples")
    fresh_rad, neff_rad = _kernels.psi_terms(p, c.n, c.M_hist)
    return c.c0 + c.c1 * fresh_rad + c.c2 * neff_rad


def psi_subgradient(p: np.ndarray, c: BoundCoefficients) -> np.ndarray:
    """A subgradient of psi at ``p``; zero-radical terms contribute zero."""
    p = _check_p(p, c.M)
    return _kernels.psi_subgrad_arrays(p, c.n, c.M_hist, c.c1, c.c2)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    return _kernels.project_simplex(v)


def _batch_psi(P: np.ndarray, c: BoundCoefficients) -> np.ndarray:
    fresh = np.sqrt(np.sum(P[:, c.M_hist :] ** 2, axis=1))
    neff = np.sqrt(np.sum(P * P / c.n, axis=1))
    return c.c0 + c.c1 * fresh + c.c2 * neff


def _candidate_set(c: BoundCoefficients, n_random: int, seed: int) -> np.ndarray:
    cands = [c.n.copy()]
    if c.M_hist > 0:
        hist = np.zeros(c.M)
        hist[: c.M_hist] = c.n[: c.M_hist] / c.n[: c.M_hist].sum()
        cands.append(hist)
    if c.M_hist < c.M:
        fresh = np.zeros(c.M)
        fresh[c.M_hist :] = c.n[c.M_hist :] / c.n[c.M_hist :].sum()
        cands.append(fresh)
    if n_random > 0:
        rng = substream(seed, Purpose.CERTIFY, 0, 0)
        cands.append(rng.dirichlet(np.ones(c.M), size=n_random))
    return np.vstack([np.atleast_2d(x) for x in cands])


def minimize_psi(
    c: BoundCoefficients,
    tol: float = 1e-10,
    max_iters: int = 300_000,
    n_random: int = 1000,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Minimize psi over the simplex by projected subgradient descent.

    Steps follow eta_k = eta0 / sqrt(k) with eta0 = 1 / (c1 + c2); descent
    stops once the best value stops improving by more than ``tol`` over 100
    consecutive iterations. The result is certified to dominate the relative
    sizes vector, the pure historical and fresh splits, and ``n_random``
    uniform simplex points; failing certification raises
    :class:`ConvergenceError` carrying the best point.
    """
    if c.c1 + c.c2 <= 0:
        return c.n.copy(), psi(c.n, c)  # constant objective
    best_p, best_val, _ = _kernels.minimize_psi_loop(
        c.n.copy(), c.n, c.M_hist, c.c1, c.c2, tol, max_iters, 100
    )
    best_val = best_val + c.c0
    cands = _candidate_set(c, n_random, seed)
    cand_vals = _batch_psi(cands, c)
    k = int(np.argmin(cand_vals))
    if cand_vals[k] < best_val:
        # restart from the dominating candidate
        p2, v2, _ = _kernels.minimize_psi_loop(
            cands[k].copy(), c.n, c.M_hist, c.c1, c.c2, tol, max_iters, 100
        )
        v2 = v2 + c.c0
        if v2 < best_val:
            best_p, best_val = p2, v2
    slack = tol + 1e-12
    if best_val > float(cand_vals.min()) + slack:
        raise ConvergenceError(
            f"certification failed: best {best_val} vs candidate {cand_vals.min()}",
            best_p,
            best_val,
        )
    return best_p, float(best_val)


def estimate_c_ratio(k: EstimatedConstants) -> float:
    """Heuristic coefficient ratio (B + sqrt(d/N)) / (G * D * sqrt(M - M_hist))."""
    if k.M == k.M_hist:
        raise ValueError("ratio undefined without fresh clients (M == M_hist)")
    if k.G_hat <= 0 or k.D_hat <= 0:
        raise ValueError("G_hat and D_hat must be positive")
    return (k.B_hat + math.sqrt(k.d / k.N)) / (
        k.G_hat * k.D_hat * math.sqrt(k.M - k.M_hist)
    )


def estimate_constants(
    loss: LossSpec,
    domain: DomainSpec,
    client_data: list[tuple[np.ndarray, np.ndarray]],
    d: int,
    N: int,
    M: int,
    M_hist: int,
    warmup_steps: int = 5,
    warmup_eta: float = 0.01,
    warmup_batch: int = 32,
    seed: int = 0,
) -> EstimatedConstants:
    """Scale estimates from a short per-client warmup.

    ``client_data`` lists the historical clients' (features, labels) blocks.
    Each client runs ``warmup_steps`` projected SGD steps from the common
    start; the loss bound is the largest per-sample loss observed, the
    gradient bound the largest minibatch gradient norm, and the start-region
    size the largest distance travelled from the start.
    """
    if not client_data:
        raise ValueError("constant estimation needs at least one historical client")
    theta1 = project(domain, np.zeros(domain.dim))
    b_hat = 0.0
    g_hat = 0.0
    d_hat = 0.0
    for m, (X, y) in enumerate(client_data):
        if X.shape[0] < 1:
            raise ValueError(f"warmup client {m} has no samples")
        rng = substream(seed, Purpose.MINIBATCH, m, 0)
        theta = theta1.copy()
        for _ in range(warmup_steps):
            nb = min(warmup_batch, X.shape[0])
            pick = rng.choice(X.shape[0], size=nb, replace=False) if nb < X.shape[0] else np.arange(X.shape[0])
            losses = batch_losses(loss, theta, X[pick], y[pick])
            b_hat = max(b_hat, float(losses.max()))
            g = weighted_grad(loss, theta, X[pick], y[pick], np.full(nb, 1.0 / nb))
            g_hat = max(g_hat, float(np.linalg.norm(g)))
            theta = project(domain, theta - warmup_eta * g)
        d_hat = max(d_hat, float(np.linalg.norm(theta - theta1)))
    return EstimatedConstants(
        B_hat=b_hat, G_hat=g_hat, D_hat=d_hat, d=d, N=N, M=M, M_hist=M_hist
    )


def strategy_importance(
    kind: str,
    n: np.ndarray,
    M_hist: int,
    c: BoundCoefficients | None = None,
    p_hist: float | None = None,
) -> np.ndarray:
    """Client importance vector for one strategy.

    "uniform" returns the relative sizes; "historical" and "fresh" place all
    mass on one group proportionally to size; "fixed_p_hist" splits
    ``p_hist`` / (1 - ``p_hist``) across the groups proportionally to size;
    "ours" minimizes the surrogate (requires ``c``).
    """
    n = np.asarray(n, dtype=float)
    M = n.size
    if not 0 <= M_hist <= M:
        raise ValueError("M_hist out of range")
    if kind == "uniform":
        return n.copy()
    if kind == "historical":
        return strategy_importance("fixed_p_hist", n, M_hist, p_hist=1.0)
    if kind == "fresh":
        return strategy_importance("fixed_p_hist", n, M_hist, p_hist=0.0)
    if kind == "fixed_p_hist":
        if p_hist is None or not 0.0 <= p_hist <= 1.0:
            raise ValueError("fixed_p_hist needs p_hist in [0, 1]")
        if p_hist > 0 and M_hist == 0:
            raise ValueError("historical mass requested but there are no historical clients")
        if p_hist < 1 and M_hist == M:
            raise ValueError("fresh mass requested but there are no fresh clients")
        p = np.zeros(M)
        if M_hist > 0 and p_hist > 0:
            p[:M_hist] = p_hist * n[:M_hist] / n[:M_hist].sum()
        if M_hist < M and p_hist < 1:
            p[M_hist:] = (1.0 - p_hist) * n[M_hist:] / n[M_hist:].sum()
        return p
    if kind == "ours":
        if c is None:
            raise ValueError("'ours' needs bound coefficients")
        return minimize_psi(c)[0]
    raise ValueError(f"unknown strategy: {kind!r}")


def even_split_sizes(M: int, M_hist: int, hist_fraction: float) -> np.ndarray:
    """Relative sizes with the historical share spread evenly per group."""
    if not 0 < M_hist < M:
        raise ValueError("need both groups nonempty")
    if not 0.0 < hist_fraction < 1.0:
        raise ValueError("hist_fraction must lie strictly in (0, 1)")
    n = np.empty(M)
    n[:M_hist] = hist_fraction / M_hist
    n[M_hist:] = (1.0 - hist_fraction) / (M - M_hist)
    return n


CURVE_COLUMNS = (
    "c2_over_c1",
    "N_hist_over_N",
    "p_hist_star",
    "n_eff_term",
    "noise_term",
    "psi_star",
    "psi_hist",
    "psi_unif",
)


def emit_bound_curves(
    ratios: np.ndarray,
    scenarios: list[tuple[float, np.ndarray, int]],
    tol: float = 1e-10,
    seed: int = 0,
) -> list[dict[str, float]]:
    """Sweep the coefficient ratio across scenarios (hist_fraction, n, M_hist).

    Each row reports the optimal historical importance, its effective-size
    and fresh-noise terms, and the surrogate values of the optimum, the pure
    historical split, and the relative-sizes vector, at c0=0 and c1=1.
    """
    rows: list[dict[str, float]] = []
    for hist_fraction, n, M_hist in scenarios:
        for ratio in np.asarray(ratios, dtype=float):
            c = BoundCoefficients(c0=0.0, c1=1.0, c2=float(ratio), n=n, M_hist=M_hist)
            p_star, psi_star = minimize_psi(c, tol=tol, seed=seed)
            p_hist_vec = strategy_importance("historical", n, M_hist)
            p_unif = strategy_importance("uniform", n, M_hist)
            rows.append(
                {
                    "c2_over_c1": float(ratio),
                    "N_hist_over_N": float(hist_fraction),
                    "p_hist_star": float(p_star[:M_hist].sum()),
                    "n_eff_term": float(np.sum(p_star * p_star / n)),
                    "noise_term": float(np.sqrt(np.sum(p_star[M_hist:] ** 2))),
                    "psi_star": psi_star,
                    "psi_hist": psi(p_hist_vec, c),
                    "psi_unif": psi(p_unif, c),
                }
            )
    return rows


def write_curves_csv(rows: list[dict[str, float]], path) -> None:
    """Serialize curve rows with 17 significant digits."""
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            writer.writerow([f"{row[k]:.17g}" for k in CURVE_COLUMNS])

"""Federated training loop over client streams with bounded memories.

Each round the server broadcasts the current model; every client receives its
arrival batch, applies its memory rule, and (if selected and holding weight
mass) runs E local gradient steps on its weighted memory loss. The server
averages the local models with the round's mass-proportional weights and
projects back onto the domain. The returned model is the mass-weighted
average of the broadcast iterates across rounds.

The server step computes proj(sum_m p_m * theta_m) rather than
proj(theta + sum_m p_m (theta_m - theta)); the two coincide exactly in real
arithmetic because the weights sum to 1, and the former makes the
single-client full-batch case bit-identical to plain projected gradient
descent.

Partial participation (fraction < 1) renormalizes the round weights over the
selected clients so the average stays a convex combination; this is an
extension beyond the full-participation theory and is flagged as such.
Clients whose memory carries zero weight mass in a round are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .memory import MemoryRule, MemoryState, new_memory, update
from .model import DomainSpec, Example, LossSpec, batch_losses, project, weighted_grad
from .streams import ClientStream, Purpose, next_batch, substream
from .weighting import (
    RoundTrace,
    WeightScheme,
    coefficient_matrix,
    round_mass_share,
    round_weights,
    sample_weight,
)
from . import _kernels

__all__ = [
    "TrainConfig",
    "ClientSetup",
    "TrainResult",
    "minibatch_gradient",
    "local_update",
    "select_round_clients",
    "run",
    "estimate_sigma_bar_sq",
    "evaluate",
    "weighted_erm_minimum",
]


@dataclass(frozen=True)
class TrainConfig:
    T: int
    E: int = 1
    K: int = 2**31 - 1
    eta: float = 0.1
    participation: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 1 or self.E < 1 or self.K < 1:
            raise ValueError("T, E, and K must all be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not 0.0 < self.participation <= 1.0:
            raise ValueError("participation must lie in (0, 1]")


@dataclass
class ClientSetup:
    """One client's stream, memory rule, and capacity."""

    stream: ClientStream
    rule: MemoryRule
    capacity: int


@dataclass
class TrainResult:
    averaged_model: np.ndarray
    final_iterate: np.ndarray
    iterates: np.ndarray  # broadcast iterates, shape (T, d)
    trace: RoundTrace
    registry: dict[tuple[int, int], Example]
    sigma_hat_sq: float
    sigma_per_round: np.ndarray
    clamp_counts: dict[int, int]


def _memory_arrays(
    memory: MemoryState, scheme: WeightScheme, t: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack the memory into (X, y, lambdas, indices) in contents order."""
    n = len(memory)
    if n == 0:
        raise ValueError("empty memory")
    d = memory.contents[0].example.features.size
    X = np.empty((n, d))
    y = np.empty(n)
    lam = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    for k, s in enumerate(memory.contents):
        X[k] = s.example.features
        y[k] = s.example.label
        lam[k] = sample_weight(
            scheme, s.example.client_id, s.example.global_index, s.residence, t
        )
        idx[k] = s.example.global_index
    return X, y, lam, idx


def minibatch_gradient(
    loss: LossSpec,
    theta: np.ndarray,
    memory: MemoryState,
    scheme: WeightScheme,
    K: int,
    rng: np.random.Generator,
    t: int,
) -> np.ndarray:
    """Unbiased stochastic gradient of the client's weighted memory loss.

    Draws min(K, |I|) indices uniformly without replacement and scales by
    |I| / |batch|; the weight normalizer is the full memory's mass. A full
    batch (K >= |I|) consumes no randomness.
    """
    X, y, lam, _ = _memory_arrays(memory, scheme, t)
    total = lam.sum()
    if total <= 0:
        raise ValueError("memory holds zero weight mass")
    n = len(memory)
    if K >= n:
        return weighted_grad(loss, theta, X, y, lam / total)
    pick = rng.choice(n, size=K, replace=False)
    w = (n / K) * lam[pick] / total
    return weighted_grad(loss, theta, X[pick], y[pick], w)


def local_update(
    loss: LossSpec,
    theta_global: np.ndarray,
    memory: MemoryState,
    scheme: WeightScheme,
    eta: float,
    E: int,
    K: int,
    rng: np.random.Generator,
    t: int,
) -> np.ndarray:
    """E sequential stochastic steps from the broadcast model; no projection.

    Accepts eta = 0 (a no-op pass) even though full runs require a positive
    rate; eta < 0 is rejected.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    theta = theta_global.copy()
    for _ in range(E):
        g = minibatch_gradient(loss, theta, memory, scheme, K, rng, t)
        theta = theta - eta * g
    return theta


def select_round_clients(
    participation: float, seed: int, roster_size: int, t: int
) -> np.ndarray:
    """Roster positions participating at round ``t`` (full set at fraction 1)."""
    if participation >= 1.0:
        return np.arange(roster_size)
    n_pick = max(1, int(round(participation * roster_size)))
    rng = substream(seed, Purpose.PARTICIPATION, 0, t)
    return np.sort(rng.choice(roster_size, size=n_pick, replace=False))


def run(
    setups: list[ClientSetup],
    scheme: WeightScheme,
    domain: DomainSpec,
    loss: LossSpec,
    cfg: TrainConfig,
    theta_init: np.ndarray | None = None,
    sigma_probe_count: int = 0,
    round_callback: Callable[[int, np.ndarray], None] | None = None,
) -> TrainResult:
    """Run the full T-round training loop and the noise diagnostic."""
    if not setups:
        raise ValueError("need at least one client")
    roster = tuple(s.stream.client_id for s in setups)
    trace = RoundTrace(roster=roster)
    memories: list[MemoryState] = [new_memory(s.capacity) for s in setups]
    registry: dict[tuple[int, int], Example] = {}

    theta = np.zeros(domain.dim) if theta_init is None else np.asarray(theta_init, dtype=float)
    theta = project(domain, theta)
    iterates = np.empty((cfg.T, domain.dim))

    for t in range(1, cfg.T + 1):
        try:
            iterates[t - 1] = theta
            # arrivals and memory updates happen for every client
            for k, s in enumerate(setups):
                batch = next_batch(s.stream, t)
                for z in batch:
                    registry[(z.client_id, z.global_index)] = z
                memories[k] = update(memories[k], s.rule, batch, t)
            selected = select_round_clients(cfg.participation, cfg.seed, len(setups), t)

            contributions: list[tuple[int, np.ndarray, np.ndarray]] = []
            locals_: list[tuple[float, np.ndarray]] = []
            for k in selected:
                mem = memories[k]
                if len(mem) == 0:
                    continue
                X, y, lam, idx = _memory_arrays(mem, scheme, t)
                mass = float(lam.sum())
                if mass <= 0:
                    continue
                contributions.append((roster[k], idx, lam))
                rng = substream(cfg.seed, Purpose.MINIBATCH, roster[k], t)
                theta_m = local_update(loss, theta, mem, scheme, cfg.eta, cfg.E, cfg.K, rng, t)
                locals_.append((mass, theta_m))
            trace.record_round(t, contributions)
            p_t, _ = round_weights(trace, t)  # raises on zero total mass
            total = sum(m for m, _ in locals_)
            new_theta = np.zeros_like(theta)
            for mass, theta_m in locals_:
                new_theta += (mass / total) * theta_m
            theta = project(domain, new_theta)
            if not np.all(np.isfinite(theta)):
                raise FloatingPointError("model diverged to non-finite values")
            if round_callback is not None:
                round_callback(t, iterates[t - 1])
        except Exception as exc:
            raise RuntimeError(f"training failed at round {t}: {exc}") from exc

    q = round_mass_share(trace)
    averaged = (q[:, None] * iterates).sum(axis=0)
    sigma_total, sigma_rounds = estimate_sigma_bar_sq(
        loss, trace, iterates, registry, domain=domain,
        probe_count=sigma_probe_count, seed=cfg.seed,
    )
    return TrainResult(
        averaged_model=averaged,
        final_iterate=theta,
        iterates=iterates,
        trace=trace,
        registry=registry,
        sigma_hat_sq=sigma_total,
        sigma_per_round=sigma_rounds,
        clamp_counts={s.stream.client_id: s.stream.clamp_count for s in setups},
    )


def estimate_sigma_bar_sq(
    loss: LossSpec,
    trace: RoundTrace,
    iterates: np.ndarray,
    registry: dict[tuple[int, int], Example],
    domain: DomainSpec | None = None,
    probe_count: int = 0,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Plug-in estimate of the round-drift gradient noise.

    For each round, the deviation between the run-wide importance-weighted
    gradient and the round's aggregate memory gradient is evaluated at the
    broadcast iterate (a proxy for the supremum over the domain); rounds are
    combined with their mass shares. Samples whose round coefficient never
    varies cancel identically and are skipped, so a run whose memories and
    weights are static yields exactly 0.0 without touching sample data.

    ``probe_count > 0`` additionally evaluates each round's deviation at that
    many random domain points and takes the per-round maximum, tightening the
    proxy toward the supremum.
    """
    keys, A, q = coefficient_matrix(trace)
    if iterates.shape[0] != trace.T:
        raise ValueError("need one broadcast iterate per round")
    for key in keys:
        if key not in registry:
            raise ValueError(f"sample {key} missing from registry")
    delta = _kernels.centered_coefficient_deviation(A, q)
    per_round = np.zeros(trace.T)
    if not np.any(delta != 0.0):
        return 0.0, per_round

    feats = np.stack([registry[k].features for k in keys])
    labels = np.array([registry[k].label for k in keys])
    probes: list[np.ndarray] = []
    if probe_count > 0:
        if domain is None:
            raise ValueError("probe mode needs the domain")
        rng = substream(seed, Purpose.CERTIFY, 0, 0)
        for _ in range(probe_count):
            raw = rng.uniform(-1.0, 1.0, size=domain.dim) * domain.radius
            probes.append(project(domain, domain.center + raw))

    for ti in range(trace.T):
        col = delta[:, ti]
        nz = np.nonzero(col)[0]
        if nz.size == 0:
            continue
        best = 0.0
        for theta in [iterates[ti], *probes]:
            dev = weighted_grad(loss, theta, feats[nz], labels[nz], col[nz])
            best = max(best, float(dev @ dev))
        per_round[ti] = q[ti] * best
    return float(per_round.sum()), per_round


def evaluate(
    loss: LossSpec,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    accuracy: bool | None = None,
) -> tuple[float, float | None]:
    """Mean loss and 0/1 accuracy over an evaluation set.

    Accuracy is defined for the logistic loss only (score > 0 predicts 1);
    requesting it for another loss is a hard error. By default accuracy is
    computed exactly when the loss supports it.
    """
    if X.shape[0] == 0:
        raise ValueError("empty evaluation set")
    if accuracy is None:
        accuracy = loss.kind == "logistic"
    mean_loss = float(batch_losses(loss, theta, X, y).mean())
    if not accuracy:
        return mean_loss, None
    if loss.kind != "logistic":
        raise ValueError(f"accuracy undefined for {loss.kind} loss")
    preds = (X @ theta > 0).astype(float)
    return mean_loss, float((preds == y).mean())


def weighted_erm_minimum(
    loss: LossSpec,
    domain: DomainSpec,
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    tol: float = 1e-9,
    max_iters: int = 2_000_000,
    theta_init: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Long-horizon full-batch projected gradient descent on a weighted loss.

    Stops when the gradient-mapping norm ||theta - proj(theta - eta*g)|| / eta
    falls below ``tol``. The step size is 1 / smoothness_L.
    """
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive mass")
    w = w / total
    eta = 1.0 / loss.smoothness_L
    theta = project(domain, np.zeros(domain.dim) if theta_init is None else theta_init)
    for _ in range(max_iters):
        g = weighted_grad(loss, theta, X, y, w)
        nxt = project(domain, theta - eta * g)
        gap = float(np.linalg.norm(theta - nxt)) / eta
        theta = nxt
        if gap <= tol:
            break
    else:
        raise RuntimeError(f"weighted ERM solve did not reach tol={tol}")
    value = float(w @ batch_losses(loss, theta, X, y))
    return theta, value

"""Sample weights, aggregation weights, and relative-importance accounting.

Every round, each held sample carries a nonnegative weight. Client masses
(weight totals over the memory) induce the per-round aggregation weights,
their round totals induce the averaging weights across rounds, and the
accrued per-sample weight over the whole run induces each sample's relative
importance. The effective sample size is the inverse participation ratio of
that importance table.

Weight schemes see only metadata (client id, global index, residence, round),
never features or labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "WeightScheme",
    "unit_weights",
    "inverse_residence",
    "per_client_stationary",
    "explicit_table",
    "sample_weight",
    "RoundTrace",
    "round_weights",
    "round_mass_share",
    "sample_importance",
    "client_importance",
    "effective_sample_size",
    "importance_to_client_weights",
    "coefficient_matrix",
    "write_trace_csv",
]

_KINDS = ("unit", "inverse_residence", "per_client_stationary", "explicit_table")


@dataclass(frozen=True)
class WeightScheme:
    """Rule assigning each held sample its weight for the current round.

    kind "unit": every sample weighs 1.
    kind "inverse_residence": weight 1 / (consecutive rounds in memory).
    kind "per_client_stationary": fixed per-client weight, constant over
    rounds and samples.
    kind "explicit_table": explicit (client, round, index) -> weight map.
    """

    kind: str
    per_client: Mapping[int, float] | None = None
    table: Mapping[tuple[int, int, int], float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown weight scheme: {self.kind!r}")
        if self.kind == "per_client_stationary":
            if not self.per_client:
                raise ValueError("per_client_stationary needs per-client weights")
            if any(v < 0 for v in self.per_client.values()):
                raise ValueError("weights must be >= 0")
        if self.kind == "explicit_table" and self.table is None:
            raise ValueError("explicit_table needs a weight table")


def unit_weights() -> WeightScheme:
    return WeightScheme(kind="unit")


def inverse_residence() -> WeightScheme:
    return WeightScheme(kind="inverse_residence")


def per_client_stationary(lambdas: Mapping[int, float]) -> WeightScheme:
    return WeightScheme(kind="per_client_stationary", per_client=dict(lambdas))


def explicit_table(table: Mapping[tuple[int, int, int], float]) -> WeightScheme:
    return WeightScheme(kind="explicit_table", table=dict(table))


def sample_weight(
    scheme: WeightScheme, client_id: int, global_index: int, residence: int, t: int
) -> float:
    """Weight of one held sample at round ``t``. Metadata only."""
    if scheme.kind == "unit":
        return 1.0
    if scheme.kind == "inverse_residence":
        if residence < 1:
            raise ValueError("residence counts are 1-based")
        return 1.0 / residence
    if scheme.kind == "per_client_stationary":
        try:
            return float(scheme.per_client[client_id])  # type: ignore[index]
        except KeyError:
            raise KeyError(f"no stationary weight for client {client_id}") from None
    try:
        return float(scheme.table[(client_id, t, global_index)])  # type: ignore[index]
    except KeyError:
        raise KeyError(
            f"no table weight for client {client_id}, round {t}, index {global_index}"
        ) from None


@dataclass(frozen=True)
class RoundRecord:
    """One round's weighted memory snapshot across participating clients."""

    t: int
    client_ids: tuple[int, ...]
    index_sets: tuple[np.ndarray, ...]
    lambdas: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not (len(self.client_ids) == len(self.index_sets) == len(self.lambdas)):
            raise ValueError("misaligned round record")
        for idx, lam in zip(self.index_sets, self.lambdas):
            if idx.shape != lam.shape:
                raise ValueError("index set and weights misaligned")
            if np.any(lam < 0):
                raise ValueError("weights must be >= 0")

    def client_masses(self) -> np.ndarray:
        return np.array([float(lam.sum()) for lam in self.lambdas])

    def total_mass(self) -> float:
        return float(sum(lam.sum() for lam in self.lambdas))


@dataclass
class RoundTrace:
    """Append-only per-round record of masses and per-sample weights.

    ``roster`` fixes the client order used by all vector outputs; clients
    absent from a round contribute zero mass there.
    """

    roster: tuple[int, ...]
    records: list[RoundRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(set(self.roster)) != len(self.roster):
            raise ValueError("duplicate client ids in roster")

    @property
    def T(self) -> int:
        return len(self.records)

    def record_round(
        self, t: int, contributions: list[tuple[int, np.ndarray, np.ndarray]]
    ) -> RoundRecord:
        if t != len(self.records) + 1:
            raise ValueError(f"rounds must be recorded in order; expected {len(self.records) + 1}")
        known = set(self.roster)
        for cid, _, _ in contributions:
            if cid not in known:
                raise ValueError(f"client {cid} not in roster")
        rec = RoundRecord(
            t=t,
            client_ids=tuple(c for c, _, _ in contributions),
            index_sets=tuple(np.asarray(i, dtype=np.int64) for _, i, _ in contributions),
            lambdas=tuple(np.asarray(l, dtype=float) for _, _, l in contributions),
        )
        self.records.append(rec)
        return rec


def round_weights(trace: RoundTrace, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Aggregation weights for round ``t`` over the roster, plus raw masses."""
    rec = trace.records[t - 1]
    masses = np.zeros(len(trace.roster))
    pos = {cid: k for k, cid in enumerate(trace.roster)}
    for cid, lam in zip(rec.client_ids, rec.lambdas):
        masses[pos[cid]] += float(lam.sum())
    total = masses.sum()
    if total <= 0:
        raise ValueError(f"round {t} has zero total weight mass")
    return masses / total, masses


def round_mass_share(trace: RoundTrace) -> np.ndarray:
    """Share of the grand total weight mass carried by each round."""
    if trace.T < 1:
        raise ValueError("empty trace")
    totals = np.array([rec.total_mass() for rec in trace.records])
    grand = totals.sum()
    if grand <= 0:
        raise ValueError("zero grand total mass")
    return totals / grand


def sample_importance(trace: RoundTrace) -> dict[tuple[int, int], float]:
    """Relative importance of each (client, sample): accrued weight over the
    grand total mass. Values are nonnegative and sum to 1."""
    grand = sum(rec.total_mass() for rec in trace.records)
    if grand <= 0:
        raise ValueError("zero grand total mass")
    table: dict[tuple[int, int], float] = {}
    for rec in trace.records:
        for cid, idx, lam in zip(rec.client_ids, rec.index_sets, rec.lambdas):
            for j, w in zip(idx.tolist(), lam.tolist()):
                key = (cid, j)
                table[key] = table.get(key, 0.0) + w / grand
    return table


def client_importance(trace: RoundTrace) -> np.ndarray:
    """Per-client importance over the roster: row sums of the sample table."""
    table = sample_importance(trace)
    pos = {cid: k for k, cid in enumerate(trace.roster)}
    out = np.zeros(len(trace.roster))
    for (cid, _), v in table.items():
        out[pos[cid]] += v
    return out


def effective_sample_size(table: Mapping[tuple[int, int], float]) -> float:
    """Inverse participation ratio of the importance table, in (0, N]."""
    vals = np.array(list(table.values()))
    ssq = float(np.sum(vals * vals))
    if ssq <= 0:
        raise ValueError("importance table has no mass")
    return 1.0 / ssq


def importance_to_client_weights(
    p: np.ndarray, counts: np.ndarray, uses: np.ndarray | None = None
) -> np.ndarray:
    """Stationary per-client weights realizing target client importances.

    A client holding ``counts[m]`` samples, each appearing in ``uses[m]``
    rounds (default 1), accrues weight mass proportional to
    lambda_m * counts[m] * uses[m]; inverting gives
    lambda_m proportional to p[m] / (counts[m] * uses[m]), normalized so the
    largest weight is 1.
    """
    p = np.asarray(p, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if p.shape != counts.shape:
        raise ValueError("p and counts must align")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector")
    if np.any((p > 0) & (counts < 1)):
        raise ValueError("positive importance on a client with no samples")
    exposure = counts.copy()
    if uses is not None:
        uses = np.asarray(uses, dtype=float)
        if uses.shape != p.shape or np.any(uses[p > 0] <= 0):
            raise ValueError("uses must be positive where p is")
        exposure = exposure * uses
    lam = np.zeros_like(p)
    mask = p > 0
    lam[mask] = p[mask] / exposure[mask]
    peak = lam.max()
    if peak <= 0:
        raise ValueError("p has no mass")
    return lam / peak


def coefficient_matrix(trace: RoundTrace) -> tuple[list[tuple[int, int]], np.ndarray, np.ndarray]:
    """Per-round normalized sample coefficients and round shares.

    Returns (keys, A, q) where A[i, t] is sample i's share of round t+1's
    total mass (zero when absent) and q the round mass shares. The importance
    table equals A @ q.
    """
    q = round_mass_share(trace)
    keys = sorted(sample_importance(trace).keys())
    pos = {k: i for i, k in enumerate(keys)}
    A = np.zeros((len(keys), trace.T))
    for ti, rec in enumerate(trace.records):
        total = rec.total_mass()
        for cid, idx, lam in zip(rec.client_ids, rec.index_sets, rec.lambdas):
            for j, w in zip(idx.tolist(), lam.tolist()):
                A[pos[(cid, j)], ti] = w / total
    return keys, A, q


def write_trace_csv(trace: RoundTrace, path: str | Path) -> None:
    """Rows ``round,client,mass,p_mt,q_t`` over rounds and roster clients."""
    q = round_mass_share(trace)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "client", "mass", "p_mt", "q_t"])
        for t in range(1, trace.T + 1):
            p_t, masses = round_weights(trace, t)
            for k, cid in enumerate(trace.roster):
                writer.writerow(
                    [t, cid, f"{masses[k]:.17g}", f"{p_t[k]:.17g}", f"{q[t - 1]:.17g}"]
                )

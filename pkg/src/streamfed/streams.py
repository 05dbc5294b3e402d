"""Client arrival processes, synthetic data generation, and CSV corpora.

Every client owns an ordered sample list and a counting process that decides
how many samples arrive each round. Reproducibility relies on one root seed:
each random decision draws from a substream keyed by
``(root_seed, purpose, client_id, round)`` via ``numpy``'s SeedSequence
spawning, so the execution order of clients never changes results.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .model import Example

__all__ = [
    "Purpose",
    "substream",
    "CountingProcessSpec",
    "constant_rate",
    "single_pulse",
    "poisson_arrivals",
    "scheduled_arrivals",
    "arrival_count",
    "realized_arrivals",
    "SyntheticSpec",
    "SyntheticData",
    "RawSamples",
    "generate_synthetic",
    "ClientStream",
    "next_batch",
    "load_csv_corpus",
    "split_indices",
]


class Purpose(IntEnum):
    """Substream identifiers; fixed numbering is part of the on-disk contract."""

    DATA = 0
    MINIBATCH = 1
    PARTICIPATION = 2
    EVAL = 3
    CERTIFY = 4


def substream(seed: int, purpose: Purpose, client_id: int = 0, t: int = 0) -> np.random.Generator:
    """Independent generator for one (purpose, client, round) cell."""
    return np.random.default_rng([int(seed), int(purpose), int(client_id), int(t)])


@dataclass(frozen=True)
class CountingProcessSpec:
    """Per-round arrival counts for one client.

    kind "constant": ``batch_size`` samples every round.
    kind "single_pulse": ``pulse_size`` samples at round 1, none afterwards.
    kind "poisson": Poisson(``rate``) per round, clamped below by
    ``min_batch`` so batches are never empty; clamps are counted.
    kind "scheduled": explicit (round, count) pairs, used by constructed
    worst-case instances; rounds not listed deliver nothing.
    """

    kind: str
    batch_size: int = 0
    pulse_size: int = 0
    rate: float = 0.0
    min_batch: int = 1
    schedule: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.batch_size < 1:
                raise ValueError("constant rate needs batch_size >= 1")
        elif self.kind == "single_pulse":
            if self.pulse_size < 1:
                raise ValueError("single pulse needs pulse_size >= 1")
        elif self.kind == "poisson":
            if self.rate <= 0 or self.min_batch < 1:
                raise ValueError("poisson needs rate > 0 and min_batch >= 1")
        elif self.kind == "scheduled":
            if not self.schedule:
                raise ValueError("scheduled arrivals need at least one entry")
            rounds = [r for r, _ in self.schedule]
            if len(set(rounds)) != len(rounds) or any(r < 1 for r in rounds):
                raise ValueError("schedule rounds must be distinct and >= 1")
            if any(c < 1 for _, c in self.schedule):
                raise ValueError("schedule counts must be >= 1")
        else:
            raise ValueError(f"unknown counting process kind: {self.kind!r}")


def constant_rate(b: int) -> CountingProcessSpec:
    return CountingProcessSpec(kind="constant", batch_size=int(b))


def single_pulse(n0: int) -> CountingProcessSpec:
    return CountingProcessSpec(kind="single_pulse", pulse_size=int(n0))


def poisson_arrivals(rate: float, min_batch: int = 1) -> CountingProcessSpec:
    return CountingProcessSpec(kind="poisson", rate=float(rate), min_batch=int(min_batch))


def scheduled_arrivals(schedule: list[tuple[int, int]]) -> CountingProcessSpec:
    return CountingProcessSpec(
        kind="scheduled", schedule=tuple((int(r), int(c)) for r, c in schedule)
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Logistic synthetic task: d includes a trailing intercept coordinate."""

    d: int
    M: int
    epsilon: float
    per_client_counts: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("d must be >= 2 (features plus intercept)")
        if self.M < 1 or len(self.per_client_counts) != self.M:
            raise ValueError("per_client_counts must list one count per client")
        if any(n < 1 for n in self.per_client_counts):
            raise ValueError("all per-client counts must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def total(self) -> int:
        return sum(self.per_client_counts)


@dataclass(frozen=True)
class RawSamples:
    """Ordered unlabeled-with-metadata sample block for one client."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (n, d) and labels (n,)")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SyntheticData:
    theta0: np.ndarray
    client_params: np.ndarray
    samples: list[RawSamples]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Draw the logistic synthetic task.

    A shared parameter theta0 ~ N(0, I_d) is perturbed per client by
    epsilon * N(0, I_d). Features are uniform on [-1, 1] in the first d-1
    coordinates with a constant 1.0 intercept last; labels are Bernoulli with
    success probability sigmoid(<x, theta_m>).
    """
    root = substream(spec.seed, Purpose.DATA, client_id=0, t=0)
    theta0 = root.standard_normal(spec.d)
    client_params = np.empty((spec.M, spec.d))
    samples: list[RawSamples] = []
    for m in range(spec.M):
        rng = substream(spec.seed, Purpose.DATA, client_id=m + 1, t=0)
        theta_m = theta0 + spec.epsilon * rng.standard_normal(spec.d)
        client_params[m] = theta_m
        n = spec.per_client_counts[m]
        x = np.empty((n, spec.d))
        x[:, : spec.d - 1] = rng.uniform(-1.0, 1.0, size=(n, spec.d - 1))
        x[:, spec.d - 1] = 1.0
        probs = 1.0 / (1.0 + np.exp(-(x @ theta_m)))
        y = (rng.uniform(size=n) < probs).astype(float)
        samples.append(RawSamples(features=x, labels=y))
    return SyntheticData(theta0=theta0, client_params=client_params, samples=samples)


@dataclass
class ClientStream:
    """A client's ordered sample source consumed by its counting process.

    ``cursor`` counts emitted samples; global indexes are 1-based and
    sequential per client, so they partition [1, N_m] with no gaps.
    """

    client_id: int
    process: CountingProcessSpec
    source: RawSamples
    seed: int
    cursor: int = 0
    clamp_count: int = 0

    def remaining(self) -> int:
        return len(self.source) - self.cursor


def arrival_count(
    process: CountingProcessSpec, client_id: int, seed: int, t: int
) -> tuple[int, bool]:
    """Samples arriving at round ``t`` and whether a Poisson clamp fired."""
    if process.kind == "constant":
        return process.batch_size, False
    if process.kind == "single_pulse":
        return (process.pulse_size if t == 1 else 0), False
    if process.kind == "scheduled":
        for r, count in process.schedule:
            if r == t:
                return count, False
        return 0, False
    rng = substream(seed, Purpose.DATA, client_id, t)
    draw = int(rng.poisson(process.rate))
    if draw < process.min_batch:
        return process.min_batch, True
    return draw, False


def realized_arrivals(
    process: CountingProcessSpec, client_id: int, seed: int, T: int
) -> tuple[np.ndarray, int]:
    """Per-round arrival counts over [1, T] plus the number of clamp events.

    Draws the same substreams as :func:`next_batch`, so a later replay sees
    identical batch sizes.
    """
    sizes = np.zeros(T, dtype=np.int64)
    clamps = 0
    for t in range(1, T + 1):
        sizes[t - 1], clamped = arrival_count(process, client_id, seed, t)
        clamps += int(clamped)
    return sizes, clamps


def next_batch(stream: ClientStream, t: int) -> list[Example]:
    """Emit round ``t``'s batch, stamping arrival metadata.

    Raises if the pre-generated source cannot cover an active round.
    """
    if t < 1:
        raise ValueError("rounds are 1-based")
    size, clamped = arrival_count(stream.process, stream.client_id, stream.seed, t)
    if clamped:
        stream.clamp_count += 1
    if size == 0:
        return []
    if size > stream.remaining():
        raise RuntimeError(
            f"client {stream.client_id} stream exhausted at round {t}: "
            f"needs {size} samples, has {stream.remaining()}"
        )
    out: list[Example] = []
    for k in range(size):
        i = stream.cursor + k
        out.append(
            Example(
                features=stream.source.features[i],
                label=float(stream.source.labels[i]),
                client_id=stream.client_id,
                arrival_round=t,
                global_index=i + 1,
            )
        )
    stream.cursor += size
    return out


def load_csv_corpus(path: str | Path) -> tuple[list[int], list[RawSamples]]:
    """Load a sample corpus with header ``client_id,arrival_round,label,f0,...``.

    Rows are sorted by (client_id, arrival_round, file order); the
    arrival_round column only orders samples, actual emission timing comes
    from each client's counting process.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty corpus")
        expected = ["client_id", "arrival_round", "label"]
        if header[:3] != expected or len(header) < 4:
            raise ValueError(f"{path}: header must start with {expected} plus f0,f1,...")
        n_feat = len(header) - 3
        rows: list[tuple[int, int, int, float, list[float]]] = []
        for order, row in enumerate(reader):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {order + 2} has {len(row)} fields, expected {len(header)}")
            rows.append(
                (int(row[0]), int(row[1]), order, float(row[2]), [float(v) for v in row[3:]])
            )
    if not rows:
        raise ValueError(f"{path}: no data rows")
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    client_ids: list[int] = []
    blocks: list[RawSamples] = []
    start = 0
    for i in range(1, len(rows) + 1):
        if i == len(rows) or rows[i][0] != rows[start][0]:
            chunk = rows[start:i]
            feats = np.array([r[4] for r in chunk])
            labels = np.array([r[3] for r in chunk])
            client_ids.append(chunk[0][0])
            blocks.append(RawSamples(features=feats.reshape(len(chunk), n_feat), labels=labels))
            start = i
    return client_ids, blocks


def split_indices(
    n: int, seed: int, client_id: int, holdout: float = 0.2
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-client train/validation/test index split.

    Validation and test each take the ``holdout`` fraction (default 0.2,
    giving a 60/20/20 split); each part is nonempty whenever n >= 3.
    """
    if n < 1:
        raise ValueError("cannot split an empty client")
    if not 0.0 < holdout < 0.5:
        raise ValueError("holdout fraction must lie in (0, 0.5)")
    rng = substream(seed, Purpose.EVAL, client_id, t=0)
    perm = rng.permutation(n)
    if n >= 3:
        n_val = max(1, int(round(n * holdout)))
        n_test = max(1, int(round(n * holdout)))
    else:
        n_val = 0
        n_test = n - 1
    n_train = n - n_val - n_test
    train = perm[:n_train]
    val = perm[n_train : n_train + n_val]
    test = perm[n_train + n_val :]
    return np.sort(train), np.sort(val), np.sort(test)

"""Configuration-driven experiment runner.

Subcommands:

* ``run <config.json>``: train every configured strategy over every seed,
  writing per-sub-run ``metrics.csv`` / ``trace.csv`` and a top-level
  ``summary.json`` with means and 95% confidence half-widths over seeds.
* ``bounds <config.json>``: sweep the surrogate-coefficient ratio and write
  the optimal-importance curves CSV.
* ``adversarial --T ...``: run the constructed two-point worst case and check
  the optimization-error floor against the measured gradient-drift noise.
* ``tune <config.json>``: grid-search the learning rate per strategy on the
  validation split and write a tuned config.
* ``verify <run-dir>``: recompute summary aggregates from the metrics files.

Configs are single JSON documents validated fail-closed: unknown keys are
errors naming the offending field. Exit codes: 0 success, 2 config error,
3 numeric failure, 4 assertion failure. ``STREAMFED_THREADS`` caps the
worker pool used for independent sub-runs (default 1, sequential).

Per-round metrics report the running mass-weighted average of the broadcast
iterates, so the last row describes the algorithm's output model;
``train_loss`` is the round's own weighted memory objective at the broadcast
iterate.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bound import (
    BoundCoefficients,
    ConvergenceError,
    EstimatedConstants,
    emit_bound_curves,
    estimate_c_ratio,
    estimate_constants,
    even_split_sizes,
    minimize_psi,
    strategy_importance,
    write_curves_csv,
)
from .memory import MemoryRule, new_memory, update
from .model import (
    DomainSpec,
    Example,
    LossSpec,
    l2_ball,
    logistic_loss_spec,
    squared_loss_spec,
    two_point_box,
    two_point_erm_minimizer,
    two_point_erm_value,
    two_point_loss_spec,
)
from .streams import (
    ClientStream,
    CountingProcessSpec,
    Purpose,
    RawSamples,
    SyntheticData,
    SyntheticSpec,
    constant_rate,
    generate_synthetic,
    load_csv_corpus,
    realized_arrivals,
    scheduled_arrivals,
    single_pulse,
    split_indices,
    substream,
)
from .trainer import (
    ClientSetup,
    TrainConfig,
    evaluate,
    run,
    select_round_clients,
)
from .weighting import (
    client_importance,
    coefficient_matrix,
    effective_sample_size,
    importance_to_client_weights,
    per_client_stationary,
    round_mass_share,
    sample_importance,
    write_trace_csv,
)
from .model import batch_losses

__all__ = ["main", "ConfigError", "CheckFailure"]

ETA_GRID = tuple(10.0**e for e in (-3.5, -3.0, -2.5, -2.0, -1.5, -1.0))

# two-sided 95% Student-t critical values by degrees of freedom
_T95 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
    8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
    14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093,
    20: 2.086, 25: 2.060, 30: 2.042,
}

METRICS_COLUMNS = ("round", "train_loss", "test_loss", "test_acc", "sigma_hat_sq_partial", "q_t")


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


class CheckFailure(Exception):
    """A declared assertion did not hold; maps to exit code 4."""


def _t95(df: int) -> float:
    if df in _T95:
        return _T95[df]
    for cut in sorted(_T95):
        if df <= cut:
            return _T95[cut]
    return 1.960


def mean_ci(values: list[float]) -> tuple[float, float | None]:
    """Mean and 95% half-width over seeds (half-width None for one seed)."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    half = _t95(arr.size - 1) * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half


# ---------------------------------------------------------------------------
# config validation


def _expect_keys(d: object, path: str, required: tuple[str, ...], optional: tuple[str, ...]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}: missing required key '{k}'")
    return d


def _as_int(v: object, path: str, lo: int | None = None, hi: int | None = None) -> int:
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{path}: expected an integer")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}")
    return v


def _as_num(v: object, path: str, lo: float | None = None, hi: float | None = None,
            lo_open: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    x = float(v)
    if lo is not None and (x <= lo if lo_open else x < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and x > hi:
        raise ConfigError(f"{path}: must be <= {hi}")
    return x


@dataclass
class StrategySpec:
    label: str
    kind: str
    p_hist: float | None = None
    from_grid: bool = False


@dataclass
class RunSpec:
    """Fully validated run configuration."""

    raw: dict
    scenario_kind: str
    M: int
    M_hist: int
    hist_fraction: float | None
    plan_process: list[CountingProcessSpec | None]  # None: pulse sized at materialize
    plan_rule: list[MemoryRule]
    plan_capacity: list[int | None]
    dataset: dict
    strategies: list[StrategySpec]
    grid_labels: list[str]
    T: int
    E: int
    K: int
    eta: float | dict[str, float]
    participation: float
    holdout: float
    mc_eval_size: int
    bound: dict
    out_dir: Path
    seeds: list[int]


def _parse_process(obj: object, path: str) -> CountingProcessSpec:
    d = _expect_keys(obj, path, ("kind",), ("b", "n0", "rate", "min_batch", "schedule"))
    kind = d["kind"]
    try:
        if kind == "constant":
            _expect_keys(d, path, ("kind", "b"), ())
            return constant_rate(_as_int(d["b"], f"{path}.b", lo=1))
        if kind == "single_pulse":
            _expect_keys(d, path, ("kind", "n0"), ())
            return single_pulse(_as_int(d["n0"], f"{path}.n0", lo=1))
        if kind == "poisson":
            _expect_keys(d, path, ("kind", "rate"), ("min_batch",))
            return CountingProcessSpec(
                kind="poisson",
                rate=_as_num(d["rate"], f"{path}.rate", lo=0, lo_open=True),
                min_batch=_as_int(d.get("min_batch", 1), f"{path}.min_batch", lo=1),
            )
        if kind == "scheduled":
            _expect_keys(d, path, ("kind", "schedule"), ())
            sched = d["schedule"]
            if not isinstance(sched, list) or not sched:
                raise ConfigError(f"{path}.schedule: expected a nonempty list of [round, count]")
            return scheduled_arrivals([(int(r), int(c)) for r, c in sched])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown process kind {kind!r}")


def _parse_strategies(obj: object, path: str) -> tuple[list[StrategySpec], list[str]]:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(f"{path}: expected a nonempty list")
    out: list[StrategySpec] = []
    grid_labels: list[str] = []
    for i, entry in enumerate(obj):
        p = f"{path}[{i}]"
        if isinstance(entry, str):
            if entry not in ("uniform", "historical", "fresh", "ours"):
                raise ConfigError(f"{p}: unknown strategy {entry!r}")
            out.append(StrategySpec(label=entry, kind=entry))
            continue
        d = _expect_keys(entry, p, ("kind",), ("p_hist", "grid"))
        if d["kind"] == "fixed_p_hist":
            _expect_keys(d, p, ("kind", "p_hist"), ())
            h = _as_num(d["p_hist"], f"{p}.p_hist", lo=0.0, hi=1.0)
            out.append(StrategySpec(label=f"fixed_p_hist_{h:g}", kind="fixed_p_hist", p_hist=h))
        elif d["kind"] == "optimal_grid":
            _expect_keys(d, p, ("kind",), ("grid",))
            grid = d.get("grid", [0.0, 0.2, 0.5, 0.8, 1.0])
            if not isinstance(grid, list) or not grid:
                raise ConfigError(f"{p}.grid: expected a nonempty list")
            for g in grid:
                h = _as_num(g, f"{p}.grid", lo=0.0, hi=1.0)
                label = f"fixed_p_hist_{h:g}"
                grid_labels.append(label)
                if all(s.label != label for s in out):
                    out.append(StrategySpec(label=label, kind="fixed_p_hist", p_hist=h, from_grid=True))
        else:
            raise ConfigError(f"{p}.kind: unknown strategy kind {d['kind']!r}")
    labels = [s.label for s in out]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{path}: duplicate strategy labels")
    return out, grid_labels


def load_run_config(path: str | Path) -> RunSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    _expect_keys(
        raw, "config",
        ("scenario", "dataset", "strategies", "train", "output_dir", "seeds"),
        ("eval", "bound"),
    )

    sc = raw["scenario"]
    _expect_keys(sc, "scenario", ("kind",),
                 ("M", "M_hist", "N_hist_over_N", "fresh_rates", "clients"))
    plan_process: list[CountingProcessSpec | None] = []
    plan_rule: list[MemoryRule] = []
    plan_capacity: list[int | None] = []
    hist_fraction: float | None = None
    if sc["kind"] == "historical_fresh":
        _expect_keys(sc, "scenario", ("kind", "M", "M_hist"), ("N_hist_over_N", "fresh_rates"))
        M = _as_int(sc["M"], "scenario.M", lo=2)
        M_hist = _as_int(sc["M_hist"], "scenario.M_hist", lo=1, hi=M - 1)
        if "N_hist_over_N" in sc:
            hist_fraction = _as_num(sc["N_hist_over_N"], "scenario.N_hist_over_N", lo=0.0, hi=1.0, lo_open=True)
            if hist_fraction >= 1.0:
                raise ConfigError("scenario.N_hist_over_N: must be < 1")
        rates = sc.get("fresh_rates", 1)
        if isinstance(rates, list):
            if len(rates) != M - M_hist:
                raise ConfigError("scenario.fresh_rates: need one rate per fresh client")
            rate_list = [_as_int(r, "scenario.fresh_rates", lo=1) for r in rates]
        else:
            rate_list = [_as_int(rates, "scenario.fresh_rates", lo=1)] * (M - M_hist)
        for _ in range(M_hist):
            plan_process.append(None)  # single pulse sized by the train split
            plan_rule.append(MemoryRule("keep_all"))
            plan_capacity.append(None)
        for b in rate_list:
            plan_process.append(constant_rate(b))
            plan_rule.append(MemoryRule("fifo"))
            plan_capacity.append(b)
    elif sc["kind"] == "custom":
        _expect_keys(sc, "scenario", ("kind", "clients"), ())
        clients = sc["clients"]
        if not isinstance(clients, list) or len(clients) < 1:
            raise ConfigError("scenario.clients: expected a nonempty list")
        M = len(clients)
        hist_flags = []
        for i, cl in enumerate(clients):
            p = f"scenario.clients[{i}]"
            d = _expect_keys(cl, p, ("historical", "process", "rule", "capacity"), ())
            if not isinstance(d["historical"], bool):
                raise ConfigError(f"{p}.historical: expected a boolean")
            hist_flags.append(d["historical"])
            plan_process.append(_parse_process(d["process"], f"{p}.process"))
            if d["rule"] not in ("fifo", "replace_all", "keep_all"):
                raise ConfigError(f"{p}.rule: unknown rule {d['rule']!r}")
            plan_rule.append(MemoryRule(d["rule"]))
            plan_capacity.append(_as_int(d["capacity"], f"{p}.capacity", lo=1))
        M_hist = sum(hist_flags)
        if hist_flags != [True] * M_hist + [False] * (M - M_hist):
            raise ConfigError("scenario.clients: historical clients must be listed first")
    else:
        raise ConfigError(f"scenario.kind: unknown scenario {sc['kind']!r}")

    ds = raw["dataset"]
    _expect_keys(ds, "dataset", ("kind",), ("d", "epsilon", "N", "counts", "seed", "path", "loss"))
    if ds["kind"] == "synthetic":
        _expect_keys(ds, "dataset", ("kind", "d", "epsilon"), ("N", "counts", "seed"))
        _as_int(ds["d"], "dataset.d", lo=2)
        _as_num(ds["epsilon"], "dataset.epsilon", lo=0.0)
        if ("N" in ds) == ("counts" in ds):
            raise ConfigError("dataset: give exactly one of 'N' or 'counts'")
        if "N" in ds:
            if hist_fraction is None:
                raise ConfigError("dataset.N: requires scenario.N_hist_over_N to size the groups")
            _as_int(ds["N"], "dataset.N", lo=M)
        else:
            counts = ds["counts"]
            if not isinstance(counts, list) or len(counts) != M:
                raise ConfigError("dataset.counts: need one count per client")
            for c in counts:
                _as_int(c, "dataset.counts", lo=1)
        if "seed" in ds:
            _as_int(ds["seed"], "dataset.seed")
    elif ds["kind"] == "csv":
        _expect_keys(ds, "dataset", ("kind", "path"), ("loss", "seed"))
        if hist_fraction is not None:
            raise ConfigError("scenario.N_hist_over_N: applies to synthetic datasets only")
        if not isinstance(ds["path"], str):
            raise ConfigError("dataset.path: expected a string")
        if ds.get("loss", "logistic") not in ("logistic", "squared"):
            raise ConfigError("dataset.loss: must be 'logistic' or 'squared'")
        if "seed" in ds:
            _as_int(ds["seed"], "dataset.seed")
    else:
        raise ConfigError(f"dataset.kind: unknown dataset {ds['kind']!r}")

    strategies, grid_labels = _parse_strategies(raw["strategies"], "strategies")

    tr = _expect_keys(raw["train"], "train", ("T",), ("E", "K", "eta", "participation"))
    T = _as_int(tr["T"], "train.T", lo=1)
    E = _as_int(tr.get("E", 1), "train.E", lo=1)
    K = _as_int(tr.get("K", 2**31 - 1), "train.K", lo=1)
    participation = _as_num(tr.get("participation", 1.0), "train.participation", lo=0.0, hi=1.0, lo_open=True)
    eta_raw = tr.get("eta", 0.05)
    eta: float | dict[str, float]
    if isinstance(eta_raw, dict):
        eta = {}
        for label, v in eta_raw.items():
            eta[label] = _as_num(v, f"train.eta.{label}", lo=0.0, lo_open=True)
        for s in strategies:
            if s.label not in eta:
                raise ConfigError(f"train.eta: missing learning rate for strategy '{s.label}'")
        for label in eta:
            if all(s.label != label for s in strategies):
                raise ConfigError(f"train.eta: rate given for unknown strategy '{label}'")
    else:
        eta = _as_num(eta_raw, "train.eta", lo=0.0, lo_open=True)

    ev = _expect_keys(raw.get("eval", {}), "eval", (), ("holdout_fraction", "mc_eval_size"))
    holdout = _as_num(ev.get("holdout_fraction", 0.2), "eval.holdout_fraction", lo=0.0, hi=0.5, lo_open=True)
    if holdout >= 0.5:
        raise ConfigError("eval.holdout_fraction: must be < 0.5")
    default_mc = 20000 if ds["kind"] == "synthetic" else 0
    mc_eval_size = _as_int(ev.get("mc_eval_size", default_mc), "eval.mc_eval_size", lo=0)
    if ds["kind"] == "csv" and mc_eval_size > 0:
        raise ConfigError("eval.mc_eval_size: Monte-Carlo evaluation needs the synthetic generator")

    bd = _expect_keys(
        raw.get("bound", {}), "bound", (),
        ("warmup_steps", "warmup_eta", "warmup_fraction", "warmup_batch", "ratio_N"),
    )
    bound = {
        "warmup_steps": _as_int(bd.get("warmup_steps", 5), "bound.warmup_steps", lo=0),
        "warmup_eta": _as_num(bd.get("warmup_eta", 0.01), "bound.warmup_eta", lo=0.0, lo_open=True),
        "warmup_fraction": _as_num(bd.get("warmup_fraction", 0.5), "bound.warmup_fraction", lo=0.0, hi=1.0, lo_open=True),
        "warmup_batch": _as_int(bd.get("warmup_batch", 32), "bound.warmup_batch", lo=1),
        "ratio_N": bd.get("ratio_N", "streamed"),
    }
    if bound["ratio_N"] != "streamed":
        bound["ratio_N"] = _as_int(bound["ratio_N"], "bound.ratio_N", lo=1)

    if not isinstance(raw["output_dir"], str):
        raise ConfigError("output_dir: expected a string")
    seeds_raw = raw["seeds"]
    if not isinstance(seeds_raw, list) or not seeds_raw:
        raise ConfigError("seeds: expected a nonempty list of integers")
    seeds = [_as_int(s, "seeds", lo=0) for s in seeds_raw]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicate entries")

    return RunSpec(
        raw=raw, scenario_kind=sc["kind"], M=M, M_hist=M_hist, hist_fraction=hist_fraction,
        plan_process=plan_process, plan_rule=plan_rule, plan_capacity=plan_capacity,
        dataset=ds, strategies=strategies, grid_labels=grid_labels,
        T=T, E=E, K=K, eta=eta, participation=participation,
        holdout=holdout, mc_eval_size=mc_eval_size, bound=bound,
        out_dir=Path(raw["output_dir"]), seeds=seeds,
    )


# ---------------------------------------------------------------------------
# per-seed materialization


@dataclass
class SeedData:
    seed: int
    dataset_seed: int
    loss: LossSpec
    domain: DomainSpec
    train_blocks: list[RawSamples]  # sliced to exactly the streamed prefix
    procs: list[CountingProcessSpec]
    rules: list[MemoryRule]
    caps: list[int]
    needed: np.ndarray
    exposures: np.ndarray
    n_vec: np.ndarray
    streamed_N: int
    hist_train_blocks: list[tuple[np.ndarray, np.ndarray]]
    eval_X: np.ndarray
    eval_y: np.ndarray
    val_X: np.ndarray
    val_y: np.ndarray
    split_test_X: np.ndarray
    split_test_y: np.ndarray


def _synthetic_counts(spec: RunSpec) -> list[int]:
    if "counts" in spec.dataset:
        return [int(c) for c in spec.dataset["counts"]]
    N = int(spec.dataset["N"])
    N_hist = int(round(spec.hist_fraction * N))
    counts: list[int] = []
    for group_n, group_m in ((N_hist, spec.M_hist), (N - N_hist, spec.M - spec.M_hist)):
        if group_m == 0:
            continue
        base, rem = divmod(group_n, group_m)
        group = [base + (1 if i < rem else 0) for i in range(group_m)]
        if min(group) < 1:
            raise ConfigError(
                f"dataset.N: group of {group_m} clients gets only {group_n} samples"
            )
        counts.extend(group)
    return counts


def _replay_exposures(
    procs: list[CountingProcessSpec],
    rules: list[MemoryRule],
    caps: list[int],
    sizes: list[np.ndarray],
    T: int,
    participation: float,
    seed: int,
) -> np.ndarray:
    """Metadata-only arrival/memory/participation replay; returns per-client
    total held-sample rounds, the denominator for stationary weight targeting."""
    M = len(procs)
    mems = [new_memory(c) for c in caps]
    counters = [0] * M
    expo = np.zeros(M)
    feat = np.zeros(1)
    for t in range(1, T + 1):
        for m in range(M):
            b = int(sizes[m][t - 1])
            batch = [
                Example(features=feat, label=0.0, client_id=m,
                        arrival_round=t, global_index=counters[m] + k + 1)
                for k in range(b)
            ]
            counters[m] += b
            mems[m] = update(mems[m], rules[m], batch, t)
        for m in select_round_clients(participation, seed, M, t):
            expo[m] += len(mems[m])
    return expo


def _sigmoid(s: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-s))


def _mc_eval_set(
    data: SyntheticData, alpha: np.ndarray, size: int, dataset_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh draws from the client mixture for the true-risk estimate."""
    rng = substream(dataset_seed, Purpose.EVAL, 0, 1)
    d = data.theta0.size
    cids = rng.choice(alpha.size, size=size, p=alpha)
    X = np.empty((size, d))
    X[:, : d - 1] = rng.uniform(-1.0, 1.0, size=(size, d - 1))
    X[:, d - 1] = 1.0
    probs = _sigmoid(np.einsum("ij,ij->i", X, data.client_params[cids]))
    y = (rng.uniform(size=size) < probs).astype(float)
    return X, y


def materialize_seed(spec: RunSpec, seed: int) -> SeedData:
    base_seed = int(spec.dataset.get("seed", 0))
    dataset_seed = base_seed + seed  # reseeds data per run seed, shared by strategies
    domain_radius = 1.0

    if spec.dataset["kind"] == "synthetic":
        counts = _synthetic_counts(spec)
        if len(counts) != spec.M:
            raise ConfigError("dataset.counts: need one count per client")
        syn = generate_synthetic(
            SyntheticSpec(
                d=int(spec.dataset["d"]), M=spec.M,
                epsilon=float(spec.dataset["epsilon"]),
                per_client_counts=tuple(counts), seed=dataset_seed,
            )
        )
        blocks = syn.samples
        dim = int(spec.dataset["d"])
        max_feat = math.sqrt(dim)
        loss = logistic_loss_spec(domain_radius, max_feat)
    else:
        ids, blocks = load_csv_corpus(spec.dataset["path"])
        if len(ids) != spec.M:
            raise ConfigError(
                f"dataset.path: corpus has {len(ids)} clients, scenario declares {spec.M}"
            )
        syn = None
        dim = blocks[0].features.shape[1]
        max_feat = max(float(np.linalg.norm(b.features, axis=1).max()) for b in blocks)
        if spec.dataset.get("loss", "logistic") == "logistic":
            labels = np.concatenate([b.labels for b in blocks])
            if not np.all(np.isin(labels, (0.0, 1.0))):
                raise ConfigError("dataset.loss: logistic labels must be 0/1")
            loss = logistic_loss_spec(domain_radius, max_feat)
        else:
            max_lab = max(float(np.abs(b.labels).max()) for b in blocks)
            loss = squared_loss_spec(domain_radius, max_feat, max_lab)
    domain = l2_ball(dim, domain_radius)

    train_blocks: list[RawSamples] = []
    val_parts: list[tuple[np.ndarray, np.ndarray]] = []
    test_parts: list[tuple[np.ndarray, np.ndarray]] = []
    full_counts = np.array([len(b) for b in blocks], dtype=float)
    for m, block in enumerate(blocks):
        tr_idx, va_idx, te_idx = split_indices(len(block), dataset_seed, m, spec.holdout)
        train_blocks.append(
            RawSamples(features=block.features[tr_idx], labels=block.labels[tr_idx])
        )
        if va_idx.size:
            val_parts.append((block.features[va_idx], block.labels[va_idx]))
        if te_idx.size:
            test_parts.append((block.features[te_idx], block.labels[te_idx]))

    procs: list[CountingProcessSpec] = []
    caps: list[int] = []
    for m in range(spec.M):
        if spec.plan_process[m] is None:
            n0 = len(train_blocks[m])
            procs.append(single_pulse(n0))
            caps.append(n0)
        else:
            procs.append(spec.plan_process[m])
            caps.append(int(spec.plan_capacity[m]))

    sizes: list[np.ndarray] = []
    needed = np.zeros(spec.M, dtype=np.int64)
    for m in range(spec.M):
        s, _ = realized_arrivals(procs[m], m, seed, spec.T)
        sizes.append(s)
        needed[m] = int(s.sum())
        have = len(train_blocks[m])
        if needed[m] > have:
            raise ConfigError(
                f"train.T: client {m} streams {needed[m]} samples over T={spec.T} "
                f"rounds but its train split holds only {have}"
            )
        if needed[m] > 0:
            train_blocks[m] = RawSamples(
                features=train_blocks[m].features[: needed[m]],
                labels=train_blocks[m].labels[: needed[m]],
            )
    if needed.sum() <= 0:
        raise ConfigError("scenario: no client ever receives a sample")

    exposures = _replay_exposures(
        procs, spec.plan_rule, caps, sizes, spec.T, spec.participation, seed
    )
    n_vec = needed.astype(float) / float(needed.sum())

    hist_blocks: list[tuple[np.ndarray, np.ndarray]] = []
    frac = spec.bound["warmup_fraction"]
    for m in range(spec.M_hist):
        nb = len(train_blocks[m])
        k = max(1, int(math.ceil(frac * nb)))
        hist_blocks.append((train_blocks[m].features[:k], train_blocks[m].labels[:k]))

    if val_parts:
        val_X = np.vstack([x for x, _ in val_parts])
        val_y = np.concatenate([y for _, y in val_parts])
    else:
        raise ConfigError("eval.holdout_fraction: validation split is empty")
    if test_parts:
        te_X = np.vstack([x for x, _ in test_parts])
        te_y = np.concatenate([y for _, y in test_parts])
    else:
        raise ConfigError("eval.holdout_fraction: test split is empty")

    if spec.mc_eval_size > 0:
        alpha = full_counts / full_counts.sum()
        eval_X, eval_y = _mc_eval_set(syn, alpha, spec.mc_eval_size, dataset_seed)
    else:
        eval_X, eval_y = te_X, te_y

    return SeedData(
        seed=seed, dataset_seed=dataset_seed, loss=loss, domain=domain,
        train_blocks=train_blocks, procs=procs, rules=list(spec.plan_rule),
        caps=caps, needed=needed, exposures=exposures, n_vec=n_vec,
        streamed_N=int(needed.sum()), hist_train_blocks=hist_blocks,
        eval_X=eval_X, eval_y=eval_y, val_X=val_X, val_y=val_y,
        split_test_X=te_X, split_test_y=te_y,
    )


# ---------------------------------------------------------------------------
# bound-constant estimation and strategy targets


def estimate_bound(spec: RunSpec, sd: SeedData) -> dict:
    """Coefficient ratio and surrogate minimizer from the warmup heuristic."""
    if spec.M_hist == 0 or spec.M_hist == spec.M:
        raise ConfigError("bound estimation needs both historical and fresh clients")
    ratio_N = sd.streamed_N if spec.bound["ratio_N"] == "streamed" else int(spec.bound["ratio_N"])
    consts = estimate_constants(
        sd.loss, sd.domain, sd.hist_train_blocks,
        d=sd.domain.dim, N=ratio_N, M=spec.M, M_hist=spec.M_hist,
        warmup_steps=spec.bound["warmup_steps"], warmup_eta=spec.bound["warmup_eta"],
        warmup_batch=spec.bound["warmup_batch"], seed=sd.seed,
    )
    ratio = estimate_c_ratio(consts)
    c = BoundCoefficients(c0=0.0, c1=1.0, c2=ratio, n=sd.n_vec, M_hist=spec.M_hist)
    p_star, psi_star = minimize_psi(c, seed=sd.seed)
    return {
        "B_hat": consts.B_hat, "G_hat": consts.G_hat, "D_hat": consts.D_hat,
        "ratio_N": ratio_N, "c2_over_c1": ratio,
        "p_star": p_star, "psi_star": psi_star,
        "p_hist_star": float(p_star[: spec.M_hist].sum()),
    }


def target_importance(spec: RunSpec, sd: SeedData, strat: StrategySpec) -> np.ndarray:
    if strat.kind == "ours":
        return estimate_bound(spec, sd)["p_star"]
    return strategy_importance(strat.kind, sd.n_vec, spec.M_hist, p_hist=strat.p_hist)


# ---------------------------------------------------------------------------
# sub-run execution


def execute_sub_run(
    spec: RunSpec,
    sd: SeedData,
    label: str,
    p_target: np.ndarray,
    eta: float,
    out_dir: Path | None,
    with_metrics: bool = True,
) -> dict:
    lam = importance_to_client_weights(p_target, counts=sd.exposures)
    scheme = per_client_stationary({m: float(lam[m]) for m in range(spec.M)})
    setups = [
        ClientSetup(
            stream=ClientStream(
                client_id=m, process=sd.procs[m], source=sd.train_blocks[m], seed=sd.seed
            ),
            rule=sd.rules[m],
            capacity=sd.caps[m],
        )
        for m in range(spec.M)
    ]
    cfg = TrainConfig(
        T=spec.T, E=spec.E, K=spec.K, eta=eta,
        participation=spec.participation, seed=sd.seed,
    )
    result = run(setups, scheme, sd.domain, sd.loss, cfg)

    q = round_mass_share(result.trace)
    prefix = np.cumsum(q[:, None] * result.iterates, axis=0)
    weights = np.cumsum(q)
    averaged = prefix / weights[:, None]
    final_avg = averaged[-1]

    table = sample_importance(result.trace)
    n_eff = effective_sample_size(table)
    p_real = client_importance(result.trace)
    p_hist_real = float(p_real[: spec.M_hist].sum())

    is_classify = sd.loss.kind == "logistic"
    out: dict = {
        "label": label, "seed": sd.seed, "eta": eta,
        "sigma_hat_sq": result.sigma_hat_sq,
        "n_eff": n_eff, "p_hist_realized": p_hist_real,
        "clamp_counts": result.clamp_counts,
    }

    val_loss, val_acc = evaluate(sd.loss, final_avg, sd.val_X, sd.val_y, accuracy=is_classify)
    out["final_val_loss"] = val_loss
    out["final_val_acc"] = val_acc

    if not with_metrics:
        return out

    keys, A, _ = coefficient_matrix(result.trace)
    feats = np.stack([result.registry[k].features for k in keys])
    labels = np.array([result.registry[k].label for k in keys])

    test_loss = np.empty(spec.T)
    test_acc = np.full(spec.T, np.nan)
    train_loss = np.empty(spec.T)
    for t in range(spec.T):
        tl, ta = evaluate(sd.loss, averaged[t], sd.eval_X, sd.eval_y, accuracy=is_classify)
        test_loss[t] = tl
        if ta is not None:
            test_acc[t] = ta
        lv = batch_losses(sd.loss, result.iterates[t], feats, labels)
        train_loss[t] = float(lv @ A[:, t])

    sp_loss, sp_acc = evaluate(sd.loss, final_avg, sd.split_test_X, sd.split_test_y, accuracy=is_classify)
    out["final_test_loss"] = float(test_loss[-1])
    out["final_test_acc"] = float(test_acc[-1]) if is_classify else None
    out["final_split_test_loss"] = sp_loss
    out["final_split_test_acc"] = sp_acc

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "metrics.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for t in range(spec.T):
                writer.writerow([
                    t + 1,
                    f"{train_loss[t]:.17g}",
                    f"{test_loss[t]:.17g}",
                    f"{test_acc[t]:.17g}",
                    f"{result.sigma_per_round[t]:.17g}",
                    f"{q[t]:.17g}",
                ])
        write_trace_csv(result.trace, out_dir / "trace.csv")
        out["metrics_path"] = str(out_dir / "metrics.csv")
    return out


def _pool_map(fn, items: list) -> list:
    threads_env = os.environ.get("STREAMFED_THREADS", "1")
    try:
        threads = int(threads_env)
        if threads < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(
            f"STREAMFED_THREADS: expected a positive integer, got {threads_env!r}"
        ) from None
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands


def _resolve_eta(spec: RunSpec, label: str) -> float:
    if isinstance(spec.eta, dict):
        return spec.eta[label]
    return spec.eta


def _aggregate(per_seed: list[dict], field: str) -> dict:
    vals = [r[field] for r in per_seed]
    if any(v is None for v in vals):
        return {"mean": None, "ci95_half_width": None,
                "per_seed": {str(r["seed"]): r[field] for r in per_seed}}
    mean, half = mean_ci([float(v) for v in vals])
    return {"mean": mean, "ci95_half_width": half,
            "per_seed": {str(r["seed"]): float(r[field]) for r in per_seed}}


def cmd_run(config_path: str) -> int:
    spec = load_run_config(config_path)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    seed_data = {s: materialize_seed(spec, s) for s in spec.seeds}

    jobs = []
    for strat in spec.strategies:
        eta = _resolve_eta(spec, strat.label)
        for s in spec.seeds:
            sd = seed_data[s]
            p_target = target_importance(spec, sd, strat)
            jobs.append((strat.label, p_target, eta, sd))

    def _one(job):
        label, p_target, eta, sd = job
        sub_dir = spec.out_dir / label / f"seed{sd.seed}"
        return execute_sub_run(spec, sd, label, p_target, eta, sub_dir)

    results = _pool_map(_one, jobs)
    by_label: dict[str, list[dict]] = {}
    for r in results:
        by_label.setdefault(r["label"], []).append(r)

    metric = "final_test_acc" if seed_data[spec.seeds[0]].loss.kind == "logistic" else "final_test_loss"
    summary: dict = {"seeds": spec.seeds, "metric": metric, "strategies": {}}
    for strat in spec.strategies:
        rows = sorted(by_label[strat.label], key=lambda r: r["seed"])
        summary["strategies"][strat.label] = {
            "eta": _resolve_eta(spec, strat.label),
            "final_test_acc": _aggregate(rows, "final_test_acc"),
            "final_test_loss": _aggregate(rows, "final_test_loss"),
            "final_split_test_acc": _aggregate(rows, "final_split_test_acc"),
            "sigma_hat_sq": _aggregate(rows, "sigma_hat_sq"),
            "n_eff": _aggregate(rows, "n_eff"),
            "p_hist_realized": _aggregate(rows, "p_hist_realized"),
        }

    if 0 < spec.M_hist < spec.M:
        est = estimate_bound(spec, seed_data[spec.seeds[0]])
        summary["bound_estimate"] = {
            k: (float(est[k]) if not isinstance(est[k], np.ndarray) else [float(v) for v in est[k]])
            for k in ("B_hat", "G_hat", "D_hat", "ratio_N", "c2_over_c1", "p_hist_star", "psi_star")
        }
    else:
        summary["bound_estimate"] = None

    if spec.grid_labels:
        grid_rows = [
            (lbl, summary["strategies"][lbl][metric]["mean"]) for lbl in spec.grid_labels
        ]
        pick = max if metric == "final_test_acc" else min
        best = pick(grid_rows, key=lambda r: r[1])
        summary["optimal_grid"] = {
            "best_label": best[0],
            f"best_{metric}_mean": best[1],
            "grid": {lbl: v for lbl, v in grid_rows},
        }

    (spec.out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    width = max(len(s.label) for s in spec.strategies)
    print(f"{'strategy':<{width}}  {metric + ' (mean ± ci95)':<28}  sigma_hat_sq  n_eff")
    for strat in spec.strategies:
        block = summary["strategies"][strat.label]
        m = block[metric]["mean"]
        h = block[metric]["ci95_half_width"]
        ci = f"{m:.4f} ± {h:.4f}" if h is not None else f"{m:.4f}"
        print(
            f"{strat.label:<{width}}  {ci:<28}  "
            f"{block['sigma_hat_sq']['mean']:<12.6g}  {block['n_eff']['mean']:.4g}"
        )
    if summary["bound_estimate"]:
        be = summary["bound_estimate"]
        print(f"c2/c1 = {be['c2_over_c1']:.4g}, p_hist* = {be['p_hist_star']:.4g}")
    print(f"summary written to {spec.out_dir / 'summary.json'}")
    return 0


def cmd_tune(config_path: str) -> int:
    spec = load_run_config(config_path)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    seed_data = {s: materialize_seed(spec, s) for s in spec.seeds}
    is_classify = seed_data[spec.seeds[0]].loss.kind == "logistic"

    targets = {
        (strat.label, s): target_importance(spec, seed_data[s], strat)
        for strat in spec.strategies
        for s in spec.seeds
    }

    jobs = [
        (strat.label, eta, s)
        for strat in spec.strategies
        for eta in ETA_GRID
        for s in spec.seeds
    ]

    def _one(job):
        label, eta, s = job
        sd = seed_data[s]
        r = execute_sub_run(spec, sd, label, targets[(label, s)], eta, None, with_metrics=False)
        return (label, eta, s, r["final_val_acc"] if is_classify else r["final_val_loss"])

    results = _pool_map(_one, jobs)
    scores: dict[tuple[str, float], list[float]] = {}
    for label, eta, _, score in results:
        scores.setdefault((label, eta), []).append(float(score))

    best: dict[str, float] = {}
    table: dict[str, dict[float, float]] = {}
    for strat in spec.strategies:
        means = {eta: float(np.mean(scores[(strat.label, eta)])) for eta in ETA_GRID}
        table[strat.label] = means
        pick = max(means, key=lambda e: means[e]) if is_classify else min(means, key=lambda e: means[e])
        best[strat.label] = pick

    tuned = json.loads(json.dumps(spec.raw))
    tuned["train"]["eta"] = {label: best[label] for label in best}
    out_path = spec.out_dir / "tuned_config.json"
    out_path.write_text(json.dumps(tuned, indent=2) + "\n")

    crit = "val acc" if is_classify else "val loss"
    width = max(len(s.label) for s in spec.strategies)
    header = "  ".join(f"{eta:9.4g}" for eta in ETA_GRID)
    print(f"{'strategy':<{width}}  {header}   best eta ({crit})")
    for strat in spec.strategies:
        row = "  ".join(f"{table[strat.label][eta]:9.4f}" for eta in ETA_GRID)
        print(f"{strat.label:<{width}}  {row}   {best[strat.label]:g}")
    print(f"tuned config written to {out_path}")
    return 0


def load_bounds_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    _expect_keys(raw, "config", (), ("ratios", "scenarios", "output", "tol", "seed"))
    ratios_cfg = raw.get("ratios", {"min": 1e-3, "max": 10.0, "count": 40})
    if isinstance(ratios_cfg, list):
        if not ratios_cfg:
            raise ConfigError("ratios: expected a nonempty list")
        ratios = np.array([_as_num(r, "ratios", lo=0.0, lo_open=True) for r in ratios_cfg])
    else:
        d = _expect_keys(ratios_cfg, "ratios", (), ("min", "max", "count"))
        lo = _as_num(d.get("min", 1e-3), "ratios.min", lo=0.0, lo_open=True)
        hi = _as_num(d.get("max", 10.0), "ratios.max", lo=lo, lo_open=True)
        count = _as_int(d.get("count", 40), "ratios.count", lo=2)
        ratios = np.logspace(math.log10(lo), math.log10(hi), count)
    scenarios_cfg = raw.get(
        "scenarios",
        [{"M": 50, "M_hist": 25, "N_hist_over_N": f} for f in (0.05, 0.2, 0.5)],
    )
    if not isinstance(scenarios_cfg, list) or not scenarios_cfg:
        raise ConfigError("scenarios: expected a nonempty list")
    scenarios = []
    for i, s in enumerate(scenarios_cfg):
        p = f"scenarios[{i}]"
        d = _expect_keys(s, p, ("M", "M_hist", "N_hist_over_N"), ())
        M = _as_int(d["M"], f"{p}.M", lo=2)
        M_hist = _as_int(d["M_hist"], f"{p}.M_hist", lo=1, hi=M - 1)
        frac = _as_num(d["N_hist_over_N"], f"{p}.N_hist_over_N", lo=0.0, lo_open=True)
        if frac >= 1.0:
            raise ConfigError(f"{p}.N_hist_over_N: must be < 1")
        scenarios.append((frac, even_split_sizes(M, M_hist, frac), M_hist))
    return {
        "ratios": ratios,
        "scenarios": scenarios,
        "output": raw.get("output", "curves.csv"),
        "tol": _as_num(raw.get("tol", 1e-10), "tol", lo=0.0, lo_open=True),
        "seed": _as_int(raw.get("seed", 0), "seed"),
    }


def cmd_bounds(config_path: str) -> int:
    cfg = load_bounds_config(config_path)
    rows = emit_bound_curves(cfg["ratios"], cfg["scenarios"], tol=cfg["tol"], seed=cfg["seed"])
    out = Path(cfg["output"])
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_curves_csv(rows, out)
    print(f"{len(rows)} rows ({len(cfg['ratios'])} ratios x {len(cfg['scenarios'])} scenarios) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# adversarial check


def run_adversarial_check(
    T_values: list[int], eta: float | None = None, threshold: float = 3.0 / 20.0
) -> dict:
    """Run the constructed single-client two-point instance for each horizon.

    The client's FIFO memory of size 1 receives one sample at round 1 and the
    other at round T/2, so the round objective abruptly drifts mid-run. All
    four ordered sample pairs run; the optimization error of the averaged
    model is measured against the closed-form weighted-optimum, and the
    pair-averaged error is compared against ``threshold`` times the
    pair-averaged drift-noise estimate at the largest horizon.
    """
    loss = two_point_loss_spec()
    domain = two_point_box()
    report: dict = {"threshold": threshold, "horizons": []}
    for T in T_values:
        if T < 4 or T % 2 != 0:
            raise ConfigError(f"--T: horizons must be even and >= 4, got {T}")
        eta_T = eta if eta is not None else 1.0 / (loss.smoothness_L * math.sqrt(T))
        combos = []
        for a, b in ((1, 1), (1, 2), (2, 1), (2, 2)):
            src = RawSamples(features=np.zeros((2, 1)), labels=np.array([a, b], dtype=float))
            setup = ClientSetup(
                stream=ClientStream(
                    client_id=0,
                    process=scheduled_arrivals([(1, 1), (T // 2, 1)]),
                    source=src,
                    seed=0,
                ),
                rule=MemoryRule("fifo"),
                capacity=1,
            )
            cfg = TrainConfig(T=T, E=1, K=2**31 - 1, eta=eta_T, participation=1.0, seed=0)
            result = run([setup], per_client_stationary({0: 1.0}), domain, loss, cfg)
            table = sample_importance(result.trace)
            q1 = float(table[(0, 1)])  # realized importance of the first sample
            w1 = q1 * (1.0 if a == 1 else 0.0) + (1.0 - q1) * (1.0 if b == 1 else 0.0)
            theta_star = two_point_erm_minimizer(w1)
            erm_min = two_point_erm_value(w1, theta_star)
            erm_at_avg = two_point_erm_value(w1, result.averaged_model)
            combos.append({
                "pair": [a, b],
                "q_first_sample": q1,
                "profile1_weight": float(w1),
                "theta_star": [float(v) for v in theta_star],
                "averaged_model": [float(v) for v in result.averaged_model],
                "eps_opt": float(erm_at_avg - erm_min),
                "sigma_hat_sq": float(result.sigma_hat_sq),
            })
        eps_mean = float(np.mean([c["eps_opt"] for c in combos]))
        sigma_mean = float(np.mean([c["sigma_hat_sq"] for c in combos]))
        report["horizons"].append({
            "T": T, "eta": eta_T, "combos": combos,
            "eps_opt_mean": eps_mean, "sigma_hat_sq_mean": sigma_mean,
            "floor": threshold * sigma_mean,
            "passes": eps_mean >= threshold * sigma_mean,
        })
    return report


def cmd_adversarial(t_arg: str, eta: float | None, out: str | None) -> int:
    try:
        T_values = [int(t) for t in t_arg.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--T: expected comma-separated integers, got {t_arg!r}") from None
    if not T_values:
        raise ConfigError("--T: no horizons given")
    report = run_adversarial_check(T_values, eta=eta)
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)
    last = report["horizons"][-1]
    if not last["passes"]:
        raise CheckFailure(
            f"adversarial floor violated at T={last['T']}: "
            f"eps_opt={last['eps_opt_mean']:.6g} < (3/20)*sigma_hat_sq="
            f"{last['floor']:.6g} (sigma_hat_sq={last['sigma_hat_sq_mean']:.6g})"
        )
    print(
        f"ok: eps_opt={last['eps_opt_mean']:.6g} >= (3/20)*sigma_hat_sq={last['floor']:.6g}"
    )
    return 0


# ---------------------------------------------------------------------------
# verification


def _read_metrics(path: Path) -> dict[str, np.ndarray]:
    if not path.exists():
        raise ConfigError(f"missing metrics file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(METRICS_COLUMNS):
            raise ConfigError(f"{path}: unexpected metrics header {header}")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ConfigError(f"{path}: empty metrics file")
    arr = np.array(rows)
    return {name: arr[:, i] for i, name in enumerate(METRICS_COLUMNS)}


def cmd_verify(run_dir: str) -> int:
    base = Path(run_dir)
    summary_path = base / "summary.json"
    if not summary_path.exists():
        raise ConfigError(f"missing summary: {summary_path}")
    summary = json.loads(summary_path.read_text())
    tol = 1e-9
    failures: list[str] = []
    checks = 0
    for label, block in summary["strategies"].items():
        acc_per_seed = {}
        sig_per_seed = {}
        for seed in summary["seeds"]:
            m = _read_metrics(base / label / f"seed{seed}" / "metrics.csv")
            q_sum = float(m["q_t"].sum())
            checks += 1
            if abs(q_sum - 1.0) > tol:
                failures.append(f"{label}/seed{seed}: round shares sum to {q_sum}, not 1")
            acc_per_seed[str(seed)] = float(m["test_acc"][-1])
            sig_per_seed[str(seed)] = float(m["sigma_hat_sq_partial"].sum())
        metric_block = block["final_test_acc"]
        if metric_block["mean"] is not None:
            recomputed_mean, recomputed_half = mean_ci(list(acc_per_seed.values()))
            checks += 2
            if abs(recomputed_mean - metric_block["mean"]) > tol:
                failures.append(
                    f"{label}: final_test_acc mean {metric_block['mean']} != recomputed {recomputed_mean}"
                )
            stored_half = metric_block["ci95_half_width"]
            if (stored_half is None) != (recomputed_half is None) or (
                stored_half is not None and abs(stored_half - recomputed_half) > tol
            ):
                failures.append(f"{label}: final_test_acc ci95 mismatch")
            for seed_key, v in metric_block["per_seed"].items():
                checks += 1
                if abs(v - acc_per_seed[seed_key]) > tol:
                    failures.append(
                        f"{label}/seed{seed_key}: summary acc {v} != metrics {acc_per_seed[seed_key]}"
                    )
        for seed_key, v in block["sigma_hat_sq"]["per_seed"].items():
            checks += 1
            if abs(v - sig_per_seed[seed_key]) > tol:
                failures.append(
                    f"{label}/seed{seed_key}: summary sigma {v} != metrics column sum {sig_per_seed[seed_key]}"
                )
    if failures:
        raise CheckFailure(f"{len(failures)} of {checks} checks failed:\n  " + "\n  ".join(failures))
    print(f"ok: {checks} checks against {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamfed",
        description="Federated training over client data streams with bounded memories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train all configured strategies and seeds")
    p_run.add_argument("config", help="path to the run config JSON")
    p_bounds = sub.add_parser("bounds", help="sweep the surrogate-coefficient ratio")
    p_bounds.add_argument("config", help="path to the bounds config JSON")
    p_adv = sub.add_parser("adversarial", help="run the constructed worst-case check")
    p_adv.add_argument("--T", required=True, help="comma-separated even horizons, e.g. 1000,10000")
    p_adv.add_argument("--eta", type=float, default=None, help="override the step size")
    p_adv.add_argument("--out", default=None, help="also write the JSON report here")
    p_tune = sub.add_parser("tune", help="grid-search the learning rate per strategy")
    p_tune.add_argument("config", help="path to the run config JSON")
    p_verify = sub.add_parser("verify", help="recompute summary aggregates from metrics files")
    p_verify.add_argument("run_dir", help="directory written by 'run'")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "bounds":
            return cmd_bounds(args.config)
        if args.command == "adversarial":
            return cmd_adversarial(args.T, args.eta, args.out)
        if args.command == "tune":
            return cmd_tune(args.config)
        if args.command == "verify":
            return cmd_verify(args.run_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except ConvergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (FloatingPointError, ValueError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

"""Render simulator CSV artifacts into figures.

Reads only the documented CSV schemas (metrics.csv from runs, curves.csv
from coefficient-ratio sweeps) and never recomputes simulator quantities;
the one arithmetic applied is column differences for the PsiDiffs kind.
Rows are plotted in file order so every rendered series round-trips to the
source values exactly.

Usage:
    plot.py --kind AccuracyCurves --in out/uniform/seed0/metrics.csv \
            --in out/ours/seed0/metrics.csv --out acc.png
    plot.py --kind PHistVsRatio --in curves.csv --out phist.png

Kinds:
    AccuracyCurves  metrics.csv (one or more): test accuracy vs round,
                    one line per input file
    PHistVsRatio    curves.csv: optimal historical importance vs c2/c1,
                    log x, one line per N_hist_over_N
    PsiDiffs        curves.csv: psi_hist - psi_star and psi_hist - psi_unif
                    vs c2/c1, log x, two lines per N_hist_over_N
    NEffAndNoise    curves.csv: effective-size and fresh-noise radicals at
                    the optimum vs c2/c1, log x, two lines per N_hist_over_N

Rows containing NaN in a referenced column are skipped with a count warning
on stderr. An empty CSV or a missing referenced column is a hard error.
Exit codes: 0 ok, 2 bad arguments or bad input.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("AccuracyCurves", "PHistVsRatio", "PsiDiffs", "NEffAndNoise")


class PlotError(Exception):
    """Bad input: missing file, empty CSV, missing column, bad kind."""


@dataclass(frozen=True)
class PlotJob:
    inputs: tuple[str, ...]
    kind: str
    output: str
    style: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PlotError(f"unknown kind {self.kind!r}, expected one of {', '.join(KINDS)}")
        if not self.inputs:
            raise PlotError("at least one input CSV is required")
        if self.kind != "AccuracyCurves" and len(self.inputs) != 1:
            raise PlotError(f"{self.kind} takes exactly one input CSV")


def read_columns(path: str, columns: tuple[str, ...]) -> dict[str, list[float]]:
    """Read the referenced columns, skipping NaN rows with a warning."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            if header is None:
                raise PlotError(f"{path}: empty CSV")
            missing = [c for c in columns if c not in header]
            if missing:
                raise PlotError(f"{path}: missing columns {', '.join(missing)}")
            out: dict[str, list[float]] = {c: [] for c in columns}
            skipped = 0
            for row in reader:
                try:
                    values = [float(row[c]) for c in columns]
                except (TypeError, ValueError) as exc:
                    raise PlotError(f"{path}: non-numeric value in row {row}") from exc
                if any(math.isnan(v) for v in values):
                    skipped += 1
                    continue
                for c, v in zip(columns, values):
                    out[c].append(v)
    except OSError as exc:
        raise PlotError(f"{path}: {exc.strerror or exc}") from exc
    if skipped:
        print(f"warning: {path}: skipped {skipped} rows with NaN values", file=sys.stderr)
    if not out[columns[0]]:
        raise PlotError(f"{path}: no usable data rows")
    return out


def _series_label(path: str) -> str:
    p = Path(path)
    parts = [q.name for q in (p.parent.parent, p.parent) if q.name not in ("", ".", "/")]
    return "/".join(parts) if parts else p.stem


def _plot_line(ax, x, y, label):
    # a marker keeps single-row inputs visible
    ax.plot(x, y, marker="o", markersize=3, label=label)


def _groups(cols: dict[str, list[float]], key: str) -> list[tuple[float, list[int]]]:
    """Distinct values of ``key`` in first-appearance order with row indexes."""
    order: list[float] = []
    rows: dict[float, list[int]] = {}
    for i, v in enumerate(cols[key]):
        if v not in rows:
            order.append(v)
            rows[v] = []
        rows[v].append(i)
    return [(v, rows[v]) for v in order]


def render(job: PlotJob):
    """Render the job and write the image; returns the Figure."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if job.kind == "AccuracyCurves":
        for path in job.inputs:
            cols = read_columns(path, ("round", "test_acc"))
            _plot_line(ax, cols["round"], cols["test_acc"], _series_label(path))
        ax.set_xlabel("round")
        ax.set_ylabel("test accuracy of the running average model")
    else:
        wanted = {
            "PHistVsRatio": ("p_hist_star",),
            "PsiDiffs": ("psi_star", "psi_hist", "psi_unif"),
            "NEffAndNoise": ("n_eff_term", "noise_term"),
        }[job.kind]
        cols = read_columns(job.inputs[0], ("c2_over_c1", "N_hist_over_N") + wanted)
        for frac, idx in _groups(cols, "N_hist_over_N"):
            x = [cols["c2_over_c1"][i] for i in idx]
            if job.kind == "PHistVsRatio":
                y = [cols["p_hist_star"][i] for i in idx]
                _plot_line(ax, x, y, f"N_hist/N = {frac:g}")
            elif job.kind == "PsiDiffs":
                d_star = [cols["psi_hist"][i] - cols["psi_star"][i] for i in idx]
                d_unif = [cols["psi_hist"][i] - cols["psi_unif"][i] for i in idx]
                _plot_line(ax, x, d_star, f"psi_hist - psi_star, N_hist/N = {frac:g}")
                _plot_line(ax, x, d_unif, f"psi_hist - psi_unif, N_hist/N = {frac:g}")
            else:
                _plot_line(ax, x, [cols["n_eff_term"][i] for i in idx],
                           f"effective-size radical, N_hist/N = {frac:g}")
                _plot_line(ax, x, [cols["noise_term"][i] for i in idx],
                           f"fresh-noise radical, N_hist/N = {frac:g}")
        ax.set_xscale("log")
        ax.set_xlabel("c2 / c1")
        ax.set_ylabel(
            {
                "PHistVsRatio": "optimal historical importance",
                "PsiDiffs": "surrogate value difference",
                "NEffAndNoise": "radical at the optimum",
            }[job.kind]
        )
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(job.output, dpi=int(job.style.get("dpi", 150)))
    return fig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Render simulator CSV artifacts into figures."
    )
    parser.add_argument("--kind", required=True, help=", ".join(KINDS))
    parser.add_argument(
        "--in", dest="inputs", action="append", required=True,
        help="input CSV; repeat for multi-line AccuracyCurves",
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    try:
        fig = render(
            PlotJob(
                inputs=tuple(args.inputs), kind=args.kind,
                output=args.out, style={"dpi": args.dpi},
            )
        )
        plt.close(fig)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Delimited tables with a versioned header comment, and the companion figures."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

OUTPUT_SCHEMA = 1

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def header_line(table: str) -> str:
    return f"# leofl {table} schema={OUTPUT_SCHEMA}"


def write_table(path: str | Path, table: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with ',' delimiter, '.' decimals and LF endings; first line is the schema comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header_line(table) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row width {len(row)} does not match {len(columns)} columns")
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path: str | Path, table: str | None = None) -> tuple[list[str], list[dict[str, str]]]:
    """Read a table back, checking the schema comment."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        parts = first.split()
        if len(parts) != 4 or parts[:2] != ["#", "leofl"] or parts[3] != f"schema={OUTPUT_SCHEMA}":
            raise ValueError(f"{path}: missing or unsupported schema header {first!r}")
        if table is not None and parts[2] != table:
            raise ValueError(f"{path}: expected table {table!r}, found {parts[2]!r}")
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


# -- figures ----------------------------------------------------------------

def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_capacity(path: str | Path, distances_km: Sequence[float],
                  curves: Mapping[float, Sequence[float]]) -> Path:
    """Total capacity (Gbps) against distance, one line per transmit power (dBm)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for p_dbm, cap in sorted(curves.items()):
            ax.plot(distances_km, [c / 1e9 for c in cap], marker="o", ms=3, label=f"{p_dbm:g} dBm")
        ax.set_xlabel("distance (km)")
        ax.set_ylabel("total capacity (Gbps)")
        ax.set_yscale("log")
        ax.legend(frameon=False)
        return _save(fig, Path(path))


def plot_visibility(path: str | Path, rows: Sequence[Mapping]) -> Path:
    """Mean contact window per inclination, direct vs relayed, for the smallest constellation."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(6.4, 2.8))
        n_min = min(int(r["num_sats"]) for r in rows)
        sub = [r for r in rows if int(r["num_sats"]) == n_min]
        incls = sorted({float(r["inclination_deg"]) for r in sub})
        width = 0.38
        for j, (arch, label) in enumerate((("sat-gs", "Sat-GS"), ("sat-hap-gs", "Sat-HAP-GS"))):
            pick = {float(r["inclination_deg"]): r for r in sub if r["architecture"] == arch}
            xs = [i + (j - 0.5) * width for i in range(len(incls))]
            axes[0].bar(xs, [100 * float(pick[i]["visible_fraction"]) for i in incls], width, label=label)
            axes[1].bar(xs, [float(pick[i]["mean_window_s"]) for i in incls], width, label=label)
        for ax, ylab in zip(axes, ("visible satellites (%)", "mean contact window (s)")):
            ax.set_xticks(range(len(incls)))
            ax.set_xticklabels([f"{i:g}°" for i in incls])
            ax.set_xlabel("inclination")
            ax.set_ylabel(ylab)
        axes[0].legend(frameon=False)
        return _save(fig, Path(path))


def plot_accuracy(path: str | Path, curves: Mapping[str, Sequence[tuple[float, float]]]) -> Path:
    """Accuracy against simulated time (hours), one line per scheme."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for name, pts in curves.items():
            if pts:
                ax.plot([t / 3600.0 for t, _ in pts], [a for _, a in pts], label=name)
        ax.set_xlabel("simulated time (h)")
        ax.set_ylabel("mean local accuracy")
        ax.legend(frameon=False)
        return _save(fig, Path(path))

"""Elevation angles, line-of-sight indicators and contact windows."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .orbital import (
    CONSTANTS,
    AssetKind,
    BodyState,
    GroundAsset,
    OrbitalElements,
    PhysicalConstants,
    asset_positions,
    positions,
)

Interval = tuple[float, float]


@dataclass(frozen=True)
class VisibilityConfig:
    min_elev_sat_hap: float = math.radians(5.0)
    min_elev_sat_gs: float = math.radians(5.0)
    coarse_step: float = 1.0
    refine_tolerance: float = 1e-3

    def __post_init__(self):
        for th in (self.min_elev_sat_hap, self.min_elev_sat_gs):
            if not 0.0 <= th < math.pi / 2:
                raise ValueError("elevation thresholds must lie in [0, pi/2)")
        if self.coarse_step <= 0 or self.refine_tolerance <= 0:
            raise ValueError("coarse_step and refine_tolerance must be positive")

    def threshold(self, asset: GroundAsset) -> float:
        return self.min_elev_sat_hap if asset.kind is AssetKind.HAP else self.min_elev_sat_gs


@dataclass(frozen=True)
class ContactWindow:
    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        prev_end = -math.inf
        for s, e in self.intervals:
            if not s < e:
                raise ValueError("interval start must precede its end")
            if s < prev_end:
                raise ValueError("intervals must be sorted and disjoint")
            prev_end = e

    @property
    def total_duration(self) -> float:
        return float(sum(e - s for s, e in self.intervals))

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def contains(self, t: float) -> bool:
        return any(s <= t <= e for s, e in self.intervals)

    def next_contact(self, t: float) -> Interval | None:
        """The interval containing ``t`` (clipped to start at ``t``) or the next one."""
        for s, e in self.intervals:
            if e > t:
                return (max(s, t), e)
        return None

    def overlap(self, start: float, end: float) -> float:
        return float(sum(max(0.0, min(e, end) - max(s, start)) for s, e in self.intervals))

    def clipped(self, start: float, end: float) -> "ContactWindow":
        return ContactWindow(tuple((max(s, start), min(e, end)) for s, e in self.intervals
                                   if min(e, end) > max(s, start)))


def _as_pos(x) -> np.ndarray:
    return x.position if isinstance(x, BodyState) else np.asarray(x, dtype=float)


def elevation_array(target: np.ndarray, observer: np.ndarray) -> np.ndarray:
    """Elevation of ``target`` above the local horizontal at ``observer`` (rad).

    Zenith is +pi/2 and nadir -pi/2.
    """
    d = target - observer
    dn = np.linalg.norm(d, axis=-1)
    on = np.linalg.norm(observer, axis=-1)
    if np.any(on == 0):
        raise ValueError("observer at the origin has no local horizontal")
    if np.any(dn == 0):
        raise ValueError("target and observer coincide")
    c = np.einsum("...i,...i->...", d, observer) / (dn * on)
    return math.pi / 2 - np.arccos(np.clip(c, -1.0, 1.0))


def elevation(target, observer) -> float:
    return float(elevation_array(_as_pos(target), _as_pos(observer)))


def visible(target, observer, threshold: float) -> int:
    return int(elevation(target, observer) >= threshold)


def _indicator(sat: OrbitalElements, assets: Sequence[GroundAsset], cfg: VisibilityConfig, t,
               constants: PhysicalConstants) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    sat_pos = positions(sat, t)
    vis = np.zeros(t.shape, dtype=bool)
    for asset in assets:
        vis |= elevation_array(sat_pos, asset_positions(asset, t, constants)) >= cfg.threshold(asset)
    return vis


def _refine_all(f, lo: np.ndarray, hi: np.ndarray, lo_val: np.ndarray, tol: float) -> np.ndarray:
    """Bisect every bracket at once; invariant f(lo) == lo_val != f(hi)."""
    lo, hi = lo.copy(), hi.copy()
    while lo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        same = f(mid) == lo_val
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _windows_from_indicator(f, t_grid: np.ndarray, vis: np.ndarray, tol: float) -> ContactWindow:
    changes = np.nonzero(vis[1:] != vis[:-1])[0]
    edges = _refine_all(f, t_grid[changes], t_grid[changes + 1], vis[changes], tol)
    intervals: list[Interval] = []
    start = float(t_grid[0]) if vis[0] else None
    for k, edge in zip(changes, edges):
        edge = float(edge)
        if vis[k]:
            if edge > start:
                intervals.append((start, edge))
            start = None
        else:
            start = edge
    if start is not None and float(t_grid[-1]) > start:
        intervals.append((start, float(t_grid[-1])))
    return ContactWindow(tuple(intervals))


def contact_windows(sat: OrbitalElements, assets: Sequence[GroundAsset], cfg: VisibilityConfig,
                    horizon: float | None = None, start: float = 0.0,
                    constants: PhysicalConstants = CONSTANTS) -> ContactWindow:
    """Union-of-assets visibility over ``[start, start + horizon]``.

    Coarse stepping at ``cfg.coarse_step`` locates indicator flips; each flip
    is then bisected to ``cfg.refine_tolerance``. ``horizon`` defaults to the
    satellite's orbital period.
    """
    if horizon is None:
        horizon = sat.period
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not assets:
        return ContactWindow()
    end = start + horizon
    n = int(math.ceil(horizon / cfg.coarse_step))
    t_grid = np.minimum(start + np.arange(n + 1) * cfg.coarse_step, end)
    vis = _indicator(sat, assets, cfg, t_grid, constants)

    def f(t):
        return _indicator(sat, assets, cfg, t, constants)

    return _windows_from_indicator(f, t_grid, vis, cfg.refine_tolerance)


def union_intervals(windows: Iterable[ContactWindow]) -> ContactWindow:
    spans = sorted(iv for w in windows for iv in w.intervals)
    merged: list[list[float]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return ContactWindow(tuple((s, e) for s, e in merged))


def visibility_census(constellation: Sequence[OrbitalElements], assets: Sequence[GroundAsset],
                      cfg: VisibilityConfig, t: float,
                      constants: PhysicalConstants = CONSTANTS) -> tuple[int, float]:
    """Instantaneous count and fraction of satellites with the union indicator set."""
    if not constellation:
        return 0, 0.0
    count = sum(int(_indicator(s, assets, cfg, np.array([t]), constants)[0]) for s in constellation)
    return count, count / len(constellation)


def contact_census(windows: Sequence[ContactWindow], periods: Sequence[float],
                   epoch: float = 0.0) -> tuple[int, float, float]:
    """Satellites with any contact during one own-period span starting at ``epoch``.

    Returns ``(count, fraction, mean window over all satellites)``.
    """
    if not windows:
        return 0, 0.0, 0.0
    durations = np.array([w.overlap(epoch, epoch + p) for w, p in zip(windows, periods)])
    count = int(np.sum(durations > 0))
    return count, count / len(windows), float(durations.mean())


@dataclass
class TopologyRow:
    inclination_deg: float
    num_sats: int
    architecture: str
    visible_count: float
    visible_fraction: float
    mean_window_s: float
    instantaneous_fraction: float
    windows: list[ContactWindow] = field(default_factory=list, repr=False)


ARCHITECTURES = ("sat-gs", "sat-hap-gs")


def architecture_assets(assets: Sequence[GroundAsset], architecture: str) -> list[GroundAsset]:
    if architecture == "sat-gs":
        return [a for a in assets if a.kind is AssetKind.GS]
    if architecture == "sat-hap-gs":
        return list(assets)
    raise ValueError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")


def _grid_visibility(sat: OrbitalElements, asset_grid: Sequence[np.ndarray], thresholds: Sequence[float],
                     t_grid: np.ndarray) -> list[np.ndarray]:
    sat_pos = positions(sat, t_grid)
    return [elevation_array(sat_pos, pos) >= th for pos, th in zip(asset_grid, thresholds)]


def topology_rows(constellation: Sequence[OrbitalElements], assets: Sequence[GroundAsset],
                  cfg: VisibilityConfig, architectures: Sequence[str] = ARCHITECTURES,
                  epoch_step: float = 300.0, span: float | None = None,
                  constants: PhysicalConstants = CONSTANTS) -> dict[str, TopologyRow]:
    """Time-averaged visibility census and mean contact window per architecture.

    Windows are extracted once over ``span`` (default: one sidereal day) plus
    the longest period. Every epoch on the ``epoch_step`` grid then counts a
    satellite as visible when it has any contact inside one of its own
    orbital periods, and contributes that contact time to the mean window.
    """
    for arch in architectures:
        architecture_assets(assets, arch)
    span = constants.sidereal_day if span is None else span
    periods = [s.period for s in constellation]
    horizon = span + (max(periods) if periods else 0.0)
    n = int(math.ceil(horizon / cfg.coarse_step))
    t_grid = np.minimum(np.arange(n + 1) * cfg.coarse_step, horizon)
    asset_grid = [asset_positions(a, t_grid, constants) for a in assets]
    thresholds = [cfg.threshold(a) for a in assets]
    windows: dict[str, list[ContactWindow]] = {arch: [] for arch in architectures}
    for sat in constellation:
        per_asset = _grid_visibility(sat, asset_grid, thresholds, t_grid)
        for arch in architectures:
            used = architecture_assets(assets, arch)
            vis = np.zeros_like(t_grid, dtype=bool)
            for asset, v in zip(assets, per_asset):
                if asset in used:
                    vis |= v

            def f(t, used=used, sat=sat):
                return _indicator(sat, used, cfg, t, constants)

            windows[arch].append(_windows_from_indicator(f, t_grid, vis, cfg.refine_tolerance))
    epochs = np.arange(0.0, span, epoch_step)
    incl = math.degrees(constellation[0].inclination) if constellation else float("nan")
    rows = {}
    for arch in architectures:
        wins = windows[arch]
        counts, fracs, means, inst = [], [], [], []
        for t0 in epochs:
            c, fr, m = contact_census(wins, periods, float(t0))
            counts.append(c)
            fracs.append(fr)
            means.append(m)
            inst.append(np.mean([w.contains(float(t0)) for w in wins]) if wins else 0.0)
        rows[arch] = TopologyRow(
            inclination_deg=incl,
            num_sats=len(constellation),
            architecture=arch,
            visible_count=float(np.mean(counts)) if counts else 0.0,
            visible_fraction=float(np.mean(fracs)) if fracs else 0.0,
            mean_window_s=float(np.mean(means)) if means else 0.0,
            instantaneous_fraction=float(np.mean(inst)) if inst else 0.0,
            windows=wins,
        )
    return rows


def topology_statistics(constellation: Sequence[OrbitalElements], assets: Sequence[GroundAsset],
                        cfg: VisibilityConfig, architecture: str, epoch_step: float = 300.0,
                        span: float | None = None,
                        constants: PhysicalConstants = CONSTANTS) -> TopologyRow:
    return topology_rows(constellation, assets, cfg, (architecture,), epoch_step, span,
                         constants)[architecture]


def write_window_csv(path, rows: Iterable[tuple[int, str, ContactWindow]]) -> None:
    """rows: (sat_id, asset_id or "union", window)."""
    with open(path, "w", newline="") as fh:
        fh.write("# leofl windows schema=1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sat_id", "asset_id", "start_s", "end_s"])
        for sat_id, asset_id, window in rows:
            for s, e in window.intervals:
                w.writerow([sat_id, asset_id, f"{s:.6f}", f"{e:.6f}"])

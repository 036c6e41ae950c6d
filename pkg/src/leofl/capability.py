"""Normalised compute/memory/communication capabilities and the min-envelope budget."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ContactWindow

BUDGET_TIERS = (1.0, 0.75, 0.5, 0.25)


@dataclass(frozen=True)
class ResourceProfile:
    """Per-satellite resources.

    ``compute_schedule`` is a piecewise-constant FLOP/s schedule as
    ``((t_start, rate), ...)`` sorted by start time; the first rate also
    applies before its start.
    """

    compute_schedule: tuple[tuple[float, float], ...]
    local_epochs: int
    flops_per_batch: float
    memory: float                # bytes
    global_model_size: float     # bytes
    local_model_size: float      # bytes
    proxy_model_size: float      # bytes
    dataset_size: int

    def __post_init__(self):
        if not self.compute_schedule or any(r <= 0 for _, r in self.compute_schedule):
            raise ValueError("compute rates must be positive")
        starts = [t for t, _ in self.compute_schedule]
        if starts != sorted(starts):
            raise ValueError("compute schedule must be sorted by time")
        for name in ("local_epochs", "flops_per_batch", "memory", "global_model_size",
                     "local_model_size", "proxy_model_size", "dataset_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.proxy_model_size > self.local_model_size:
            raise ValueError("the proxy must not be larger than the local model")

    @classmethod
    def constant(cls, rate: float, **kw) -> "ResourceProfile":
        return cls(compute_schedule=((0.0, float(rate)),), **kw)

    def compute_rate(self, t: float) -> float:
        rate = self.compute_schedule[0][1]
        for start, r in self.compute_schedule:
            if t >= start:
                rate = r
            else:
                break
        return rate

    def compute_integral(self, start: float, end: float) -> float:
        """Exact integral of the piecewise-constant FLOP/s schedule."""
        if end <= start:
            return 0.0
        knots = [start] + [t for t, _ in self.compute_schedule if start < t < end] + [end]
        return float(sum(self.compute_rate(a) * (b - a) for a, b in zip(knots[:-1], knots[1:])))

    @property
    def round_flops(self) -> float:
        return self.local_epochs * self.flops_per_batch


@dataclass(frozen=True)
class CapabilityVector:
    cmp: float
    mem: float
    com: float

    def __post_init__(self):
        for v in (self.cmp, self.mem, self.com):
            if not 0.0 <= v <= 1.0:
                raise ValueError("capabilities must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.cmp, self.mem, self.com])


@dataclass(frozen=True)
class Budget:
    value: float

    def __float__(self) -> float:
        return self.value


def window_integral(window: ContactWindow, rate: Callable[[float], float], step: float = 1.0) -> float:
    """Trapezoid integral of ``rate(t)`` over every interval of ``window``."""
    total = 0.0
    for s, e in window.intervals:
        n = max(1, int(np.ceil((e - s) / step)))
        t = np.linspace(s, e, n + 1)
        y = np.array([rate(float(x)) for x in t])
        total += float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))
    return total


def compute_capability(profile: ResourceProfile, window: ContactWindow,
                       capacity_trace: Callable[[float], float], step: float = 1.0,
                       comm_normalizer: str = "local") -> CapabilityVector:
    """Capability vector of one satellite over its contact window.

    ``capacity_trace`` gives link capacity in bit/s at time t; sizes are in
    bytes, so the communicated volume is converted to bytes before
    normalising. ``comm_normalizer="proxy"`` divides by the proxy size
    instead of the local model size.
    """
    mem = min(1.0, profile.memory / profile.global_model_size)
    if not window:
        return CapabilityVector(0.0, mem, 0.0)
    flops = sum(profile.compute_integral(s, e) for s, e in window.intervals)
    cmp_ = min(1.0, flops / profile.round_flops)
    volume = window_integral(window, capacity_trace, step) / 8.0
    if comm_normalizer == "local":
        norm = profile.local_model_size
    elif comm_normalizer == "proxy":
        norm = profile.proxy_model_size
    else:
        raise ValueError("comm_normalizer must be 'local' or 'proxy'")
    return CapabilityVector(cmp_, mem, min(1.0, volume / norm))


def budget(rho: CapabilityVector) -> Budget:
    return Budget(float(min(rho.cmp, rho.mem, rho.com)))


def snap_to_tier(value: float, tiers: Sequence[float] = BUDGET_TIERS) -> float:
    """Largest tier not exceeding ``value`` (smallest tier if none)."""
    below = [t for t in tiers if t <= value + 1e-12]
    return max(below) if below else min(tiers)

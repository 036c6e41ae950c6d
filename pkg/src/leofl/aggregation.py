"""Topology-aware grouping, asynchronous Stage-I and proximal Stage-II aggregation,
and the delayed-gradient convergence checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import quad

from .numerics import cross_entropy, one_hot, softmax

B_MIN_CLAMP = 1e-3


# -- grouping -----------------------------------------------------------

@dataclass
class GroupAssignment:
    groups: dict[int, set[int]]
    timestamp: float = 0.0

    def __post_init__(self):
        seen: set[int] = set()
        for members in self.groups.values():
            if seen & members:
                raise ValueError("a satellite appears in more than one group")
            seen |= members

    def group_of(self, sat_id: int) -> int | None:
        for hap, members in self.groups.items():
            if sat_id in members:
                return hap
        return None

    @property
    def assigned(self) -> set[int]:
        return set().union(*self.groups.values()) if self.groups else set()


def load_penalty(group_load: Iterable[tuple[float, float]], b_min: float = B_MIN_CLAMP) -> float:
    """Sum of proxy_size / budget over a HAP's current members."""
    return float(sum(size / max(b, b_min) for size, b in group_load))


def utility(capacity_integral: float, group_load: Iterable[tuple[float, float]], mu_bal: float,
            b_min: float = B_MIN_CLAMP) -> float:
    """Window capacity integral minus the balance-weighted relay workload.

    ``group_load`` holds (proxy_size, budget) for every current member of
    the HAP; zero budgets are clamped to ``b_min``.
    """
    if mu_bal < 0:
        raise ValueError("mu_bal must be non-negative")
    if mu_bal == 0:
        return float(capacity_integral)
    return float(capacity_integral) - mu_bal * load_penalty(group_load, b_min)


def assign_groups(utilities: np.ndarray, visible: np.ndarray, sat_ids: Sequence[int],
                  hap_ids: Sequence[int], t: float = 0.0) -> GroupAssignment:
    """Argmax-utility association; ties go to the lowest HAP id.

    ``utilities`` and ``visible`` are (n_sats, n_haps). Satellites that see
    no HAP stay unassigned.
    """
    if len(hap_ids) < 1:
        raise ValueError("need at least one HAP")
    utilities = np.asarray(utilities, dtype=float)
    visible = np.asarray(visible, dtype=bool)
    order = np.argsort(np.asarray(hap_ids), kind="stable")
    groups: dict[int, set[int]] = {h: set() for h in hap_ids}
    for row, sat in enumerate(sat_ids):
        best, best_u = None, -math.inf
        for col in order:
            if visible[row, col] and utilities[row, col] > best_u:
                best, best_u = hap_ids[col], utilities[row, col]
        if best is not None:
            groups[best].add(sat)
    return GroupAssignment(groups, t)


@dataclass(frozen=True)
class SatelliteStateVector:
    rho_cmp: float
    rho_mem: float
    rho_com: float
    budget: float
    model_size: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho_cmp, self.rho_mem, self.rho_com, self.budget, self.model_size])


@dataclass
class GroupMetrics:
    sizes: dict[int, int]
    intra_distances: dict[int, list[float]]
    centroids: dict[int, np.ndarray]
    inter_centroid: dict[tuple[int, int], float]
    skipped: list[int] = field(default_factory=list)


def group_metrics(assignment: GroupAssignment, states: Mapping[int, SatelliteStateVector]) -> GroupMetrics:
    sizes, intra, cents, skipped = {}, {}, {}, []
    for hap, members in sorted(assignment.groups.items()):
        sizes[hap] = len(members)
        if not members:
            skipped.append(hap)
            continue
        vecs = [states[s].as_array() for s in sorted(members)]
        intra[hap] = [float(np.linalg.norm(a - b)) for a, b in itertools.combinations(vecs, 2)]
        cents[hap] = np.mean(vecs, axis=0)
    inter = {(h, k): float(np.linalg.norm(cents[h] - cents[k]))
             for h, k in itertools.combinations(sorted(cents), 2)}
    return GroupMetrics(sizes, intra, cents, inter, skipped)


# -- Stage I ------------------------------------------------------------

@dataclass(frozen=True)
class StalenessRecord:
    """Generation time, event time and orbital volatility (1/s, constant or callable)."""

    t_gen: float
    t_event: float
    volatility: float | Callable[[float], float] = 0.0

    def __post_init__(self):
        if self.t_event < self.t_gen:
            raise ValueError("event time precedes the model generation time")
        if not callable(self.volatility) and self.volatility < 0:
            raise ValueError("volatility must be non-negative")

    @property
    def staleness(self) -> float:
        return self.t_event - self.t_gen

    def decay_exponent(self) -> float:
        if callable(self.volatility):
            val, _ = quad(self.volatility, self.t_gen, self.t_event, limit=200)
            return float(val)
        return self.volatility * self.staleness


def stage1_weight(record: StalenessRecord, budget_i: float, group_budgets: Sequence[float]) -> float:
    """Hardware share within the group times exponential staleness decay.

    ``group_budgets`` are the budgets of every member of the group at the
    event time, the uploader included.
    """
    total = float(sum(group_budgets))
    if total <= 0 or budget_i < 0:
        raise ValueError("budgets must be positive")
    return budget_i / total * math.exp(-record.decay_exponent())


@dataclass(frozen=True)
class HapState:
    params: np.ndarray
    last_update: float = 0.0


def stage1_update(hap: HapState, incoming: np.ndarray, eta: float, t: float | None = None) -> HapState:
    incoming = np.asarray(incoming, dtype=float)
    if incoming.shape != hap.params.shape:
        raise ValueError(f"dimension mismatch {incoming.shape} vs {hap.params.shape}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    # convex form is exact at both endpoints (eta = 0 keeps, eta = 1 copies)
    new = (1.0 - eta) * hap.params + eta * incoming
    return HapState(new, hap.last_update if t is None else t)


# -- Stage II -----------------------------------------------------------

def per_example_gradients(model, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rows are flattened CE gradients of each example w.r.t. ``model.parameters()``."""
    params = model.parameters()
    rows = []
    for k in range(len(x)):
        for p in params:
            p.grad = None
        loss = cross_entropy(softmax(model(x[k:k + 1])), one_hot(y[k:k + 1], model.num_classes))
        loss.backward()
        rows.append(np.concatenate([(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel()
                                    for p in params]))
    for p in params:
        p.grad = None
    return np.array(rows)


def fisher_trace(model, x: np.ndarray, y: np.ndarray) -> float:
    """Empirical Fisher trace: mean squared norm of per-example loss gradients."""
    if len(x) == 0:
        raise ValueError("empty probe batch")
    g = per_example_gradients(model, x, y)
    return float(np.mean(np.sum(g * g, axis=1)))


def info_yield(fisher_tr: float, segments: Sequence[tuple[float, float, float]], t_prev: float,
               t_k: float, kappa: float) -> float:
    """Accumulated information yield of one group over ``[t_prev, t_k]``.

    ``segments`` is the event-resolved membership trace: (start, end, mass)
    with mass = sum of |D_i| * B_i over members during that span. The
    integrand is piecewise constant times an exponential, so each span is
    integrated in closed form.
    """
    if t_k <= t_prev:
        raise ValueError("t_k must follow t_prev")
    if fisher_tr < 0 or kappa < 0:
        raise ValueError("fisher trace and kappa must be non-negative")
    total = 0.0
    for a, b, mass in segments:
        a, b = max(a, t_prev), min(b, t_k)
        if b <= a or mass == 0:
            continue
        if kappa == 0:
            total += mass * (b - a)
        else:
            total += mass * (math.exp(-kappa * (t_k - b)) - math.exp(-kappa * (t_k - a))) / kappa
    return math.log(fisher_tr + 1.0) * total


def stage2_weights(yields: Sequence[float], mu_prox: float) -> tuple[np.ndarray, float]:
    """Convex coefficients on the HAP models and on the previous global model."""
    g = np.asarray(yields, dtype=float)
    if np.any(g < 0) or mu_prox < 0:
        raise ValueError("yields and mu_prox must be non-negative")
    denom = 2.0 * g.sum() + mu_prox
    if denom <= 0:
        raise ValueError("all-zero yields with zero proximal weight")
    return 2.0 * g / denom, mu_prox / denom


def stage2_aggregate(hap_params: Sequence[np.ndarray], yields: Sequence[float], prev_global: np.ndarray,
                     mu_prox: float) -> np.ndarray:
    if len(hap_params) < 1:
        raise ValueError("need at least one group")
    w_h, w_prev = stage2_weights(yields, mu_prox)
    out = w_prev * np.asarray(prev_global, dtype=float)
    for w, p in zip(w_h, hap_params):
        out = out + w * np.asarray(p, dtype=float)
    return out


def stage2_objective(w: np.ndarray, hap_params: Sequence[np.ndarray], yields: Sequence[float],
                     prev_global: np.ndarray, mu_prox: float) -> float:
    val = sum(g * float(np.sum((w - p) ** 2)) for g, p in zip(yields, hap_params))
    return val + 0.5 * mu_prox * float(np.sum((w - prev_global) ** 2))


def stage2_gradient(w: np.ndarray, hap_params: Sequence[np.ndarray], yields: Sequence[float],
                    prev_global: np.ndarray, mu_prox: float) -> np.ndarray:
    grad = mu_prox * (w - prev_global)
    for g, p in zip(yields, hap_params):
        grad = grad + 2.0 * g * (w - p)
    return grad


def fedavg(params: Sequence[np.ndarray], weights: Sequence[float] | None = None) -> np.ndarray:
    w = np.ones(len(params)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    return sum(wi * np.asarray(p, dtype=float) for wi, p in zip(w, params))


# -- convergence --------------------------------------------------------

def convergence_bound(gap: float, smoothness: float, sigma2: float, etas: Sequence[float],
                      tau_max: float) -> float:
    """Right-hand side of the K-step averaged squared gradient bound."""
    etas = np.asarray(etas, dtype=float)
    k = etas.size
    if k == 0:
        raise ValueError("need at least one step")
    if min(gap, smoothness, sigma2, tau_max) < 0 or np.any(etas < 0):
        raise ValueError("inputs must be non-negative")
    eta_bar = float(etas.mean())
    if eta_bar <= 0:
        raise ValueError("mean step size must be positive")
    return (2.0 * gap / (eta_bar * k) + eta_bar * smoothness * sigma2
            + 2.0 * smoothness ** 2 * sigma2 / k * float(np.sum(etas ** 2)) * tau_max ** 2)


@dataclass(frozen=True)
class QuadraticObjective:
    """F(w) = 0.5 (w - w*)^T diag(eigs) (w - w*) with max eigenvalue = L."""

    eigenvalues: np.ndarray
    optimum: np.ndarray

    @classmethod
    def random(cls, dim: int, smoothness: float, rng: np.random.Generator,
               condition: float = 10.0) -> "QuadraticObjective":
        eigs = np.geomspace(smoothness / condition, smoothness, dim) if dim > 1 else np.array([smoothness])
        return cls(eigs, rng.normal(size=dim))

    @property
    def smoothness(self) -> float:
        return float(self.eigenvalues.max())

    def value(self, w: np.ndarray) -> float:
        d = w - self.optimum
        return 0.5 * float(np.sum(self.eigenvalues * d * d))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.eigenvalues * (w - self.optimum)


@dataclass
class DescentReport:
    lemma_lhs: np.ndarray        # E F(w_{k+1}) per step
    lemma_rhs: np.ndarray        # per-step descent bound, right-hand side
    avg_grad_sq: float           # (1/K) sum_k E ||grad F(w_k)||^2
    bound: float
    etas: np.ndarray
    tau_max: int

    @property
    def lemma_holds(self) -> np.ndarray:
        return self.lemma_lhs <= self.lemma_rhs + 1e-12 * np.maximum(1.0, np.abs(self.lemma_rhs))

    @property
    def bound_holds(self) -> bool:
        return self.avg_grad_sq <= self.bound

    def to_dict(self) -> dict:
        return {
            "steps": int(self.etas.size),
            "tau_max": self.tau_max,
            "lemma_fraction_holding": float(np.mean(self.lemma_holds)),
            "avg_grad_sq": self.avg_grad_sq,
            "bound": self.bound,
            "bound_holds": bool(self.bound_holds),
        }


def delay_schedule(steps: int, tau_max: int, rng: np.random.Generator, mode: str = "uniform") -> np.ndarray:
    if mode == "max":
        taus = np.full(steps, tau_max)
    elif mode == "uniform":
        taus = rng.integers(0, tau_max + 1, size=steps)
    else:
        raise ValueError("mode must be 'uniform' or 'max'")
    # the first iterates cannot look further back than the start
    return np.minimum(taus, np.arange(steps))


def run_descent_check(objective: QuadraticObjective, etas: Sequence[float], taus: Sequence[int],
                      sigma: float, seeds: Sequence[int], w0: np.ndarray | None = None) -> DescentReport:
    """Delayed SGD w_{k+1} = w_k - eta_k g(w_{k - tau_k}); expectations by seed averaging.

    Gradient noise is isotropic Gaussian with E||noise||^2 = sigma^2.
    """
    etas = np.asarray(etas, dtype=float)
    taus = np.asarray(taus, dtype=int)
    L = objective.smoothness
    if np.any(etas > 1.0 / (2.0 * L) + 1e-15):
        raise ValueError("step sizes must satisfy eta_k <= 1/(2L)")
    if np.any(taus < 0) or np.any(taus > np.arange(len(taus))):
        raise ValueError("delays must be non-negative and reach no earlier than the first iterate")
    K = etas.size
    dim = objective.optimum.size
    w_start = np.zeros(dim) if w0 is None else np.asarray(w0, dtype=float)
    n = len(seeds)
    if n == 0:
        raise ValueError("need at least one seed")
    if sigma > 0:
        noise = np.stack([np.random.default_rng(s).normal(size=(K, dim)) for s in seeds], axis=1)
        noise *= sigma / math.sqrt(dim)
    else:
        noise = np.zeros((K, n, dim))
    eig = objective.eigenvalues
    opt = objective.optimum

    def value(w):
        d = w - opt
        return 0.5 * np.sum(eig * d * d, axis=-1)

    # rows are seeds; each seed keeps its own trajectory
    hist = np.empty((K + 1, n, dim))
    hist[0] = w_start
    f_next, f_cur, gnorm, stale = (np.zeros(K) for _ in range(4))
    for k in range(K):
        w = hist[k]
        g_true = eig * (w - opt)
        g_old = eig * (hist[k - taus[k]] - opt)
        w_new = w - etas[k] * (g_old + noise[k])
        hist[k + 1] = w_new
        f_cur[k] = value(w).mean()
        f_next[k] = value(w_new).mean()
        gnorm[k] = np.sum(g_true * g_true, axis=1).mean()
        stale[k] = np.sum((g_true - g_old) ** 2, axis=1).mean()
    rhs = f_cur - etas / 2 * gnorm + etas / 2 * stale + L * etas ** 2 / 2 * sigma ** 2
    gap = objective.value(w_start)  # F* = 0 at the optimum
    bound = convergence_bound(gap, L, sigma ** 2, etas, int(taus.max()) if K else 0)
    return DescentReport(f_next, rhs, float(gnorm.mean()), bound, etas, int(taus.max()) if K else 0)

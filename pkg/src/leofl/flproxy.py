"""Local/proxy learners and the attention bridges that move knowledge between them.

A satellite holds a budget-tiered local model, a copy of the shared proxy,
a knowledge transmitter (local -> proxy, used while distilling) and a
knowledge receiver (proxy -> local, used while injecting). Only proxy
parameters ever leave the satellite.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import (
    SGD,
    Tensor,
    as_tensor,
    cross_entropy,
    flatten,
    glorot,
    kl_divergence,
    one_hot,
    parameter,
    softmax,
    unflatten_into,
)

TIER_WIDTHS = {1.0: 256, 0.75: 192, 0.5: 128, 0.25: 64}
PROXY_WIDTH = 32


def tier_width(budget: float) -> int:
    """Hidden width of the local body for a budget; snaps down to the nearest tier."""
    eligible = [b for b in TIER_WIDTHS if b <= budget + 1e-12]
    if not eligible:
        return TIER_WIDTHS[min(TIER_WIDTHS)]
    return TIER_WIDTHS[max(eligible)]


class DenseNet:
    """One hidden tanh layer (the body) followed by an affine head."""

    def __init__(self, in_dim: int, width: int, num_classes: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.width = width
        self.num_classes = num_classes
        self.w1 = parameter(glorot(rng, in_dim, width))
        self.b1 = parameter(np.zeros((1, width)))
        self.w2 = parameter(glorot(rng, width, num_classes))
        self.b2 = parameter(np.zeros((1, num_classes)))

    @property
    def feature_dim(self) -> int:
        return self.width

    def body_params(self) -> list[Tensor]:
        return [self.w1, self.b1]

    def head_params(self) -> list[Tensor]:
        return [self.w2, self.b2]

    def parameters(self) -> list[Tensor]:
        return self.body_params() + self.head_params()

    def body(self, x) -> Tensor:
        return (as_tensor(x) @ self.w1 + self.b1).tanh()

    def head(self, features: Tensor) -> Tensor:
        return features @ self.w2 + self.b2

    def __call__(self, x) -> Tensor:
        return self.head(self.body(x))

    def get_vector(self) -> np.ndarray:
        return flatten(self.parameters()).copy()

    def set_vector(self, vec: np.ndarray) -> None:
        unflatten_into(self.parameters(), vec)

    def named_arrays(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        names = ["body.w", "body.b", "head.w", "head.b"]
        return [(prefix + n, p.data) for n, p in zip(names, self.parameters())]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class LocalModel(DenseNet):
    """Budget-tiered local learner."""

    def __init__(self, in_dim: int, num_classes: int, budget: float, rng: np.random.Generator):
        super().__init__(in_dim, tier_width(budget), num_classes, rng)
        self.budget = budget


class ProxyModel(DenseNet):
    """The shared lightweight proxy; identical layout on every satellite."""

    def __init__(self, in_dim: int, num_classes: int, rng: np.random.Generator, width: int = PROXY_WIDTH):
        super().__init__(in_dim, width, num_classes, rng)


def _attention(query: Tensor, key: Tensor, value: Tensor, scale: float) -> Tensor:
    return softmax((query @ key.T) * scale) @ value


class KnowledgeReceiver:
    """Injects proxy features into the local stream; residual lands in D_loc."""

    def __init__(self, d_loc: int, d_p: int, rng: np.random.Generator):
        self.d_loc, self.d_p = d_loc, d_p
        self.w_d = parameter(glorot(rng, d_loc, d_p))
        self.w_q = parameter(glorot(rng, d_p, d_p))
        self.w_k = parameter(glorot(rng, d_p, d_p))
        self.w_v = parameter(glorot(rng, d_p, d_p))
        # zero value path: the bridge starts as an exact identity
        self.w_out = parameter(np.zeros((d_p, d_loc)))

    def parameters(self) -> list[Tensor]:
        return [self.w_d, self.w_q, self.w_k, self.w_v, self.w_out]

    def attention(self, i_loc, i_p) -> Tensor:
        i_loc, i_p = as_tensor(i_loc), as_tensor(i_p)
        return softmax(((i_loc @ self.w_d @ self.w_q) @ (i_p @ self.w_k).T) * (1.0 / np.sqrt(self.d_p)))

    def __call__(self, i_loc, i_p) -> Tensor:
        return receiver_forward(i_loc, i_p, self)


class KnowledgeTransmitter:
    """Distils local features into the proxy stream; no output projection."""

    def __init__(self, d_loc: int, d_p: int, rng: np.random.Generator):
        self.d_loc, self.d_p = d_loc, d_p
        self.w_d = parameter(glorot(rng, d_loc, d_p))
        self.w_q = parameter(glorot(rng, d_p, d_p))
        self.w_k = parameter(glorot(rng, d_p, d_p))
        self.w_v = parameter(np.zeros((d_p, d_p)))

    def parameters(self) -> list[Tensor]:
        return [self.w_d, self.w_q, self.w_k, self.w_v]

    def attention(self, i_p, i_loc) -> Tensor:
        i_p, i_loc = as_tensor(i_p), as_tensor(i_loc)
        return softmax(((i_p @ self.w_q) @ (i_loc @ self.w_d @ self.w_k).T) * (1.0 / np.sqrt(self.d_p)))

    def __call__(self, i_p, i_loc) -> Tensor:
        return transmitter_forward(i_p, i_loc, self)


def receiver_forward(i_loc, i_p, rec: KnowledgeReceiver) -> Tensor:
    i_loc, i_p = as_tensor(i_loc), as_tensor(i_p)
    if i_loc.data.ndim != 2 or i_p.data.ndim != 2 or i_loc.shape[0] != i_p.shape[0]:
        raise ValueError(f"feature batches do not conform: {i_loc.shape} vs {i_p.shape}")
    if i_loc.shape[1] != rec.d_loc or i_p.shape[1] != rec.d_p:
        raise ValueError("feature widths do not match the receiver")
    q = i_loc @ rec.w_d @ rec.w_q
    k = i_p @ rec.w_k
    v = i_p @ rec.w_v
    return i_loc + _attention(q, k, v, 1.0 / np.sqrt(rec.d_p)) @ rec.w_out


def transmitter_forward(i_p, i_loc, tx: KnowledgeTransmitter) -> Tensor:
    i_p, i_loc = as_tensor(i_p), as_tensor(i_loc)
    if i_loc.data.ndim != 2 or i_p.data.ndim != 2 or i_loc.shape[0] != i_p.shape[0]:
        raise ValueError(f"feature batches do not conform: {i_p.shape} vs {i_loc.shape}")
    if i_loc.shape[1] != tx.d_loc or i_p.shape[1] != tx.d_p:
        raise ValueError("feature widths do not match the transmitter")
    aligned = i_loc @ tx.w_d
    q = i_p @ tx.w_q
    k = aligned @ tx.w_k
    v = aligned @ tx.w_v
    return i_p + _attention(q, k, v, 1.0 / np.sqrt(tx.d_p))


@dataclass
class DistillConfig:
    temperature: float = 3.0
    weight_ce: float = 1.0
    weight_kl: float = 1.0
    lr_proxy: float = 1e-4
    lr_transmitter: float = 1e-3
    batch_size: int = 128

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.weight_ce < 0 or self.weight_kl < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class InjectConfig:
    temperature: float = 3.0
    alpha: float = 0.5
    lr_local: float = 1e-3
    lr_receiver: float = 1e-3
    batch_size: int = 128

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("injection coefficient must lie in (0, 1]")


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.x) == 0:
            raise ValueError("empty batch")

    @property
    def onehot(self) -> np.ndarray:
        return one_hot(self.y, self.num_classes)


def local_logits(local: LocalModel, x, proxy: ProxyModel | None = None,
                 receiver: KnowledgeReceiver | None = None) -> Tensor:
    """Satellite prediction: through the receiver when a global proxy is held."""
    feats = local.body(x)
    if proxy is not None and receiver is not None:
        feats = receiver_forward(feats, Tensor(proxy.body(x).data), receiver)
    return local.head(feats)


def distill_loss(local: LocalModel, proxy: ProxyModel, transmitter: KnowledgeTransmitter,
                 batch: Batch, cfg: DistillConfig,
                 local_proxy: ProxyModel | None = None,
                 receiver: KnowledgeReceiver | None = None) -> Tensor:
    # frozen side: detached copies of local features and logits
    i_loc = Tensor(local.body(batch.x).data)
    z_l = Tensor(local_logits(local, batch.x, local_proxy, receiver).data)
    i_p = proxy.body(batch.x)
    z_p = proxy.head(transmitter_forward(i_p, i_loc, transmitter))
    loss = cfg.weight_ce * cross_entropy(softmax(z_p), batch.onehot)
    if cfg.weight_kl:
        tau = cfg.temperature
        kl = kl_divergence(softmax(z_l, tau), softmax(z_p, tau))
        loss = loss + (cfg.weight_kl * tau * tau) * kl
    return loss


def distill_step(local: LocalModel, proxy: ProxyModel, transmitter: KnowledgeTransmitter,
                 batch: Batch, cfg: DistillConfig,
                 local_proxy: ProxyModel | None = None,
                 receiver: KnowledgeReceiver | None = None) -> float:
    """One SGD step on proxy + transmitter; the local model is never touched."""
    loss = distill_loss(local, proxy, transmitter, batch, cfg, local_proxy, receiver)
    opt = SGD([(proxy.parameters(), cfg.lr_proxy), (transmitter.parameters(), cfg.lr_transmitter)])
    opt.zero_grad()
    loss.backward()
    opt.step()
    return loss.item()


def inject_loss(global_proxy: ProxyModel, local: LocalModel, receiver: KnowledgeReceiver,
                batch: Batch, cfg: InjectConfig) -> Tensor:
    gp_feats = global_proxy.body(batch.x)
    z_gp = Tensor(global_proxy.head(gp_feats).data)
    feats = receiver_forward(local.body(batch.x), Tensor(gp_feats.data), receiver)
    z_l = local.head(feats)
    loss = cfg.alpha * cross_entropy(softmax(z_l), batch.onehot)
    if cfg.alpha < 1.0:
        tau = cfg.temperature
        kl = kl_divergence(softmax(z_gp, tau), softmax(z_l, tau))
        loss = loss + ((1.0 - cfg.alpha) * tau * tau) * kl
    return loss


def inject_step(global_proxy: ProxyModel, local: LocalModel, receiver: KnowledgeReceiver,
                batch: Batch, cfg: InjectConfig) -> float:
    """One SGD step on local + receiver; the global proxy stays frozen."""
    loss = inject_loss(global_proxy, local, receiver, batch, cfg)
    opt = SGD([(local.parameters(), cfg.lr_local), (receiver.parameters(), cfg.lr_receiver)])
    opt.zero_grad()
    loss.backward()
    opt.step()
    for p in global_proxy.parameters():
        p.grad = None
    return loss.item()


def minibatches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def local_train(local: LocalModel, x: np.ndarray, y: np.ndarray, num_classes: int, epochs: int,
                lr: float, batch_size: int, rng: np.random.Generator | None = None,
                proxy: ProxyModel | None = None, receiver: KnowledgeReceiver | None = None) -> list[float]:
    """Minibatch CE descent on the local model; returns mean loss per epoch.

    With ``rng=None`` batches are taken in fixed order (full batch when
    ``batch_size >= len(x)``), which makes the run deterministic without a
    generator.
    """
    if len(x) == 0:
        raise ValueError("empty shard")
    history = []
    opt = SGD([(local.parameters(), lr)])
    for _ in range(epochs):
        total = 0.0
        for idx in minibatches(len(x), batch_size, rng):
            logits = local_logits(local, x[idx], proxy, receiver)
            loss = cross_entropy(softmax(logits), one_hot(y[idx], num_classes))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(x))
    if receiver is not None:
        for p in receiver.parameters():
            p.grad = None
    if proxy is not None:
        for p in proxy.parameters():
            p.grad = None
    return history


def accuracy(logits: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == y))


def evaluate_local(local: LocalModel, x: np.ndarray, y: np.ndarray, batch_size: int,
                   proxy: ProxyModel | None = None, receiver: KnowledgeReceiver | None = None) -> float:
    correct = 0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        z = local_logits(local, xb, proxy, receiver).data
        correct += int(np.sum(np.argmax(z, axis=1) == y[start:start + batch_size]))
    return correct / len(x)


def evaluate_proxy(proxy: ProxyModel, x: np.ndarray, y: np.ndarray) -> float:
    return accuracy(proxy(x).data, y)


# -- data ---------------------------------------------------------------

@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes)


def make_synthetic(num_train: int, num_test: int, num_classes: int = 10, dim: int = 32,
                   separation: float = 1.6, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Gaussian class clusters pushed through a fixed random tanh map.

    ``separation`` scales the distance between class means; smaller values
    make the task harder.
    """
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True) * np.sqrt(dim) / 4
    mix = rng.normal(size=(dim, dim)) / np.sqrt(dim)

    def draw(n):
        y = rng.integers(0, num_classes, size=n)
        z = means[y] + rng.normal(size=(n, dim))
        return np.tanh(z @ mix) + 0.05 * rng.normal(size=(n, dim)), y

    xtr, ytr = draw(num_train)
    xte, yte = draw(num_test)
    return Dataset(xtr, ytr, num_classes), Dataset(xte, yte, num_classes)


def shard_split(data: Dataset, num_clients: int, num_shards: int = 240, iid: bool = False,
                seed: int = 0) -> list[Dataset]:
    """IID shuffle-split, or sort-by-label into shards dealt equally."""
    rng = np.random.default_rng(seed)
    n = len(data)
    if iid:
        parts = np.array_split(rng.permutation(n), num_clients)
        return [data.subset(np.sort(p)) for p in parts]
    if num_shards % num_clients:
        raise ValueError("shard count must divide evenly among clients")
    order = np.argsort(data.y, kind="stable")
    shards = np.array_split(order, num_shards)
    deal = rng.permutation(num_shards).reshape(num_clients, -1)
    return [data.subset(np.sort(np.concatenate([shards[s] for s in row]))) for row in deal]


def load_feature_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    """Rows of ``label,f1,f2,...``; a non-numeric first row is taken as a header."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if k == 0:
                    continue
                raise
    arr = np.asarray(rows)
    y = arr[:, 0].astype(int)
    return Dataset(arr[:, 1:], y, num_classes or int(y.max()) + 1)


@dataclass
class SatelliteLearner:
    """Everything one satellite trains: local model, proxy copy, both bridges."""

    local: LocalModel
    proxy: ProxyModel
    transmitter: KnowledgeTransmitter
    receiver: KnowledgeReceiver
    data: Dataset
    global_proxy: ProxyModel | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @classmethod
    def build(cls, in_dim: int, num_classes: int, budget: float, data: Dataset, seed: int,
              proxy_width: int = PROXY_WIDTH) -> "SatelliteLearner":
        rng = np.random.default_rng(seed)
        local = LocalModel(in_dim, num_classes, budget, rng)
        proxy = ProxyModel(in_dim, num_classes, rng, proxy_width)
        tx = KnowledgeTransmitter(local.feature_dim, proxy.feature_dim, rng)
        rx = KnowledgeReceiver(local.feature_dim, proxy.feature_dim, rng)
        return cls(local, proxy, tx, rx, data, None, rng)

    def _batches(self, batch_size: int):
        for idx in minibatches(len(self.data), batch_size, self.rng):
            yield Batch(self.data.x[idx], self.data.y[idx], self.data.num_classes)

    def train_local(self, epochs: int, lr: float, batch_size: int) -> list[float]:
        return local_train(self.local, self.data.x, self.data.y, self.data.num_classes, epochs, lr,
                           batch_size, self.rng, self.global_proxy,
                           self.receiver if self.global_proxy is not None else None)

    def distill(self, cfg: DistillConfig, epochs: int = 1) -> float:
        rx = self.receiver if self.global_proxy is not None else None
        losses = [distill_step(self.local, self.proxy, self.transmitter, b, cfg, self.global_proxy, rx)
                  for _ in range(epochs) for b in self._batches(cfg.batch_size)]
        return float(np.mean(losses))

    def inject(self, global_vector: np.ndarray, cfg: InjectConfig, epochs: int = 1) -> float:
        if self.global_proxy is None:
            self.global_proxy = ProxyModel(self.proxy.in_dim, self.proxy.num_classes,
                                           np.random.default_rng(0), self.proxy.width)
        self.global_proxy.set_vector(global_vector)
        # the local proxy restarts from the received global model
        self.proxy.set_vector(global_vector)
        losses = [inject_step(self.global_proxy, self.local, self.receiver, b, cfg)
                  for _ in range(epochs) for b in self._batches(cfg.batch_size)]
        return float(np.mean(losses))

    def accept_global(self, global_vector: np.ndarray) -> None:
        """Take the global proxy without the injection loss (used by ablations)."""
        self.proxy.set_vector(global_vector)

    def evaluate(self, test: Dataset, batch_size: int = 128) -> float:
        rx = self.receiver if self.global_proxy is not None else None
        return evaluate_local(self.local, test.x, test.y, batch_size, self.global_proxy, rx)

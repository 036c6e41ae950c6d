"""Small reverse-mode autodiff over float64 numpy arrays, plus loss primitives.

Only what the desk-scale learners need: affine layers, tanh/relu, row softmax
with temperature, logs, reductions and the two attention bridges built from
those pieces. Every node checks its forward value for NaN/Inf.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

EPS = 1e-12

_MAGIC = b"LEOFLPRM"
_FORMAT_VERSION = 1


class NonFiniteError(FloatingPointError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    ``data`` is always a float64 ndarray. Leaves created with
    ``requires_grad=True`` accumulate into ``grad`` on :meth:`backward`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        op: str = "",
    ):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite value produced by op {op or 'leaf'!r}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    # -- graph plumbing -------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + g

    def backward(self) -> None:
        """Populate ``.grad`` on every leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node._accumulate(g)
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else prev + pg

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other), op="add")
        a, b = self.shape, other.shape
        out._backward = lambda g: (_unbroadcast(g, a), _unbroadcast(g, b))
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, _parents=(self,), op="neg")
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other), op="mul")
        x, y = self.data, other.data
        out._backward = lambda g: (
            _unbroadcast(g * y, x.shape),
            _unbroadcast(g * x, y.shape),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data / other.data, _parents=(self, other), op="div")
        x, y = self.data, other.data
        out._backward = lambda g: (
            _unbroadcast(g / y, x.shape),
            _unbroadcast(-g * x / (y * y), y.shape),
        )
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul expects 2-D operands")
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"matmul shape mismatch {self.shape} @ {other.shape}")
        out = Tensor(self.data @ other.data, _parents=(self, other), op="matmul")
        x, y = self.data, other.data
        out._backward = lambda g: (g @ y.T, x.T @ g)
        return out

    @property
    def T(self) -> "Tensor":
        out = Tensor(self.data.T, _parents=(self,), op="transpose")
        out._backward = lambda g: (g.T,)
        return out

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), op="sum")
        shape = self.shape

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        out._backward = _bw
        return out

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, _parents=(self,), op="tanh")
        out._backward = lambda g: (g * (1.0 - y * y),)
        return out

    def relu(self) -> "Tensor":
        mask = self.data > 0
        out = Tensor(self.data * mask, _parents=(self,), op="relu")
        out._backward = lambda g: (g * mask,)
        return out

    def log(self, eps: float = EPS) -> "Tensor":
        """Natural log with the input clamped below at ``eps``."""
        x = np.maximum(self.data, eps)
        out = Tensor(np.log(x), _parents=(self,), op="log")
        live = self.data >= eps
        out._backward = lambda g: (g * live / x,)
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


def softmax(z: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Row softmax of ``z / temperature``, stabilised by max subtraction."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    s = z.data / temperature
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p, _parents=(z,), op="softmax")

    def _bw(g):
        inner = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - inner) / temperature,)

    out._backward = _bw
    return out


def softened_softmax(logits, temperature: float) -> Tensor:
    """Temperature-softened class distribution; accepts a vector or N x C batch."""
    return softmax(as_tensor(logits), temperature)


def cross_entropy(probs, onehot) -> Tensor:
    """-sum_c y_c log p_c, averaged over rows for a batch."""
    p = as_tensor(probs)
    y = as_tensor(onehot)
    terms = -(y * p.log()).sum(axis=-1)
    return terms.mean() if p.data.ndim == 2 else terms


def kl_divergence(q_teacher, q_student) -> Tensor:
    """sum_c q_t log(q_t / q_s), averaged over rows for a batch."""
    qt = as_tensor(q_teacher)
    qs = as_tensor(q_student)
    terms = (qt * (qt.log() - qs.log())).sum(axis=-1)
    return terms.mean() if qt.data.ndim == 2 else terms


def one_hot(labels: Sequence[int] | np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def finite_difference_grad(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``arr`` (mutated in place, restored)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f()
        flat[k] = orig - h
        down = f()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * h)
    return grad


class SGD:
    """Plain gradient descent; one learning rate per parameter group."""

    def __init__(self, groups: Iterable[tuple[Sequence[Tensor], float]]):
        self.groups = [(list(params), lr) for params, lr in groups]

    def zero_grad(self) -> None:
        for params, _ in self.groups:
            for p in params:
                p.grad = None

    def step(self) -> None:
        for params, lr in self.groups:
            for p in params:
                if p.grad is not None:
                    p.data -= lr * p.grad


# -- flat parameter vectors and on-disk format --------------------------

def flatten(params: Sequence[Tensor]) -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([p.data.reshape(-1) for p in params])


def unflatten_into(params: Sequence[Tensor], vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=np.float64)
    total = sum(p.data.size for p in params)
    if vec.size != total:
        raise ValueError(f"vector has {vec.size} entries, parameters need {total}")
    k = 0
    for p in params:
        n = p.data.size
        p.data[...] = vec[k:k + n].reshape(p.shape)
        k += n


def save_parameters(path: str | Path, named: Sequence[tuple[str, np.ndarray]]) -> None:
    """Write ``MAGIC | u32 version | u32 header_len | JSON manifest | <f8 payload``."""
    manifest = {
        "version": _FORMAT_VERSION,
        "dtype": "<f8",
        "params": [{"name": n, "shape": list(np.shape(a))} for n, a in named],
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in named)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def load_parameters(path: str | Path) -> list[tuple[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a parameter file")
    off = len(_MAGIC)
    version, hlen = struct.unpack_from("<II", raw, off)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    off += 8
    manifest = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    out = []
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
        out.append((entry["name"], arr))
    if off != len(raw):
        raise ValueError("trailing bytes in parameter file")
    return out

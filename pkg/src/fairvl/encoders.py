"""Toy MLP image/text encoders, parameter store, gradient-check harness,
and checkpoint serialization."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import DimensionError, NumericalError

CHECKPOINT_VERSION = 1


class ParamStore:
    """Named parameter groups. Shapes are fixed at registration; every
    write is checked for finiteness."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite init for parameter {name!r}")
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    @property
    def parameter_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def set_(self, name: str, value: np.ndarray):
        t = self._params[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != t.data.shape:
            raise DimensionError(f"shape change rejected for {name!r}")
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite update rejected for {name!r}")
        t.data = value

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, v in state.items():
            self.set_(k, v)


@dataclass
class EmbeddingBatch:
    vectors: Tensor
    provenance: str  # image | text1 | text2 | reconstructed
    sample_ids: list[int]

    def __post_init__(self):
        if not np.all(np.isfinite(self.vectors.data)):
            raise NumericalError(f"non-finite embeddings ({self.provenance})")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _glorot_uniform(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class MLP:
    """Fully connected net, ReLU on hidden layers, linear output.
    Parameters live in a shared ParamStore under `prefix`."""

    def __init__(self, params: ParamStore, prefix: str, dims: list[int],
                 seed: int = 0, register: bool = True):
        self.prefix = prefix
        self.dims = list(dims)
        self.params = params
        if register:
            rng = np.random.default_rng(seed)
            for i in range(len(dims) - 1):
                params.add(f"{prefix}.W{i}", _glorot_uniform(rng, dims[i], dims[i + 1]))
                params.add(f"{prefix}.b{i}", np.zeros(dims[i + 1]))

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        if x.shape[1] != self.dims[0]:
            raise DimensionError(
                f"{self.prefix}: expected input dim {self.dims[0]}, got {x.shape[1]}"
            )
        h = x
        for i in range(self.n_layers):
            W, b = self.params[f"{self.prefix}.W{i}"], self.params[f"{self.prefix}.b{i}"]
            if frozen:
                W, b = W.detach(), b.detach()
            h = h @ W + b
            if i < self.n_layers - 1:
                h = h.relu()
        return h


class ImageEncoder(MLP):
    def __init__(self, params, d_in=32, hidden=(64, 32), d_out=16, seed=0, register=True):
        super().__init__(params, "image_encoder", [d_in, *hidden, d_out],
                         seed=seed, register=register)

    def encode(self, batch_features: np.ndarray | Tensor, sample_ids) -> EmbeddingBatch:
        x = batch_features if isinstance(batch_features, Tensor) else Tensor(batch_features)
        return EmbeddingBatch(self.forward(x), "image", list(sample_ids))


class TextEncoder(MLP):
    def __init__(self, params, vocab_dim=256, hidden=(64, 32), d_out=16, seed=1, register=True):
        super().__init__(params, "text_encoder", [vocab_dim, *hidden, d_out],
                         seed=seed, register=register)

    def encode(self, token_vectors: np.ndarray | Tensor, sample_ids,
               provenance: str = "text1") -> EmbeddingBatch:
        x = token_vectors if isinstance(token_vectors, Tensor) else Tensor(token_vectors)
        return EmbeddingBatch(self.forward(x), provenance, list(sample_ids))


# -- gradient checking ------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst_coordinate: tuple[str, int] | None = None
    failures: list[tuple[str, int, float]] = field(default_factory=list)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def _rel_error(a: float, fd: float) -> float:
    scale = max(abs(a), abs(fd))
    diff = abs(a - fd)
    return diff / scale if scale > 1.0 else diff


def check_gradients(loss_fn, params: ParamStore, h: float = 1e-5,
                    tol: float = 1e-4, max_coords: int = 200,
                    seed: int = 0, names: list[str] | None = None) -> GradCheckReport:
    """Compare analytic gradients of loss_fn(params) against central
    differences on up to max_coords randomly sampled coordinates
    (all coordinates if fewer). `names` restricts probing to a subset of
    parameter groups."""
    if h <= 0:
        raise ValueError("h must be > 0")
    params.zero_grad()
    loss = loss_fn(params)
    if not np.isfinite(loss.data):
        raise NumericalError("non-finite loss at base point")
    loss.backward()
    analytic = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }

    selected = params.names() if names is None else names
    coords = [(name, i) for name in selected for i in range(params[name].data.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        idx = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(idx)]

    report = GradCheckReport(max_rel_error=0.0, n_checked=len(coords))
    for name, i in coords:
        flat = params[name].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn(params).data
        flat[i] = orig - h
        f_minus = loss_fn(params).data
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite loss probing {name}[{i}]")
        fd = (float(f_plus) - float(f_minus)) / (2 * h)
        a = float(analytic[name].reshape(-1)[i])
        err = _rel_error(a, fd)
        if err > report.max_rel_error:
            report.max_rel_error = err
            report.worst_coordinate = (name, i)
        if err >= tol:
            report.failures.append((name, i, err))
    return report


# -- checkpoints ------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode(),
    }


def _decode_array(d: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return a.reshape(d["shape"]).copy()


def save_checkpoint(path, params: ParamStore, config: dict | None = None,
                    seed: int | None = None):
    doc = {
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "config": config or {},
        "params": {name: _encode_array(t.data) for name, t in params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, int | None]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise NumericalError(f"unsupported checkpoint version {doc.get('version')!r}")
    state = {name: _decode_array(d) for name, d in doc["params"].items()}
    return state, doc.get("config", {}), doc.get("seed")

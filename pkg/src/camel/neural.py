"""Fully connected feed-forward regressor trained with Adam on MSLE.

Positive outputs come from a softplus head. Weights are He-uniform
initialized from a seed, and training is deterministic for a fixed
(network seed, training seed, data order).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from camel.errors import DomainError, TrainingDivergedError, TransferError

ACTIVATIONS = ("relu", "tanh")
MODEL_FORMAT = "camel-network"
MODEL_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_layers: int = 7
    hidden_width: int = 260
    activation: str = "relu"
    output_dim: int = 1

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width", "output_dim"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


def param_count(spec: NetworkSpec) -> int:
    return sum(i * o + o for i, o in spec.layer_shapes())


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    l2_lambda: float = 1e-4
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: str = "float64"      # float32 roughly halves training time

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DomainError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.l2_lambda < 0:
            raise DomainError("batch_size >= 1, epochs >= 0 and l2_lambda >= 0 are required")
        if self.dtype not in ("float32", "float64"):
            raise DomainError(f"dtype must be float32 or float64, got {self.dtype!r}")


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray      # (n, input_dim)
    targets: np.ndarray     # (n,)
    meta: tuple = ()        # optional per-row keys, kept aligned with rows

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(len(y), -1) if len(y) else x.reshape(0, 0)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        if x.shape[0] != y.shape[0]:
            raise DomainError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        if self.meta and len(self.meta) != len(y):
            raise DomainError("meta must align with rows")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise DomainError("targets must be positive and finite")

    def __len__(self) -> int:
        return self.targets.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        meta = tuple(self.meta[i] for i in idx) if self.meta else ()
        return Dataset(self.inputs[idx], self.targets[idx], meta)

    def concat(self, other: "Dataset") -> "Dataset":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        meta = self.meta + other.meta if self.meta and other.meta else ()
        return Dataset(np.vstack([self.inputs, other.inputs]),
                       np.concatenate([self.targets, other.targets]), meta)


@dataclass(frozen=True)
class Network:
    spec: NetworkSpec
    weights: tuple          # per layer (in, out) matrices
    biases: tuple           # per layer (out,) vectors
    rng_seed: int = 0
    history: tuple = field(default=(), compare=False)   # mean training loss per epoch

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise DomainError("layer count does not match the spec")
        for (i, o), w, b in zip(shapes, self.weights, self.biases):
            if w.shape != (i, o) or b.shape != (o,):
                raise DomainError(f"weight shape {w.shape}/{b.shape} does not match layer ({i}, {o})")

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def weight_norm2(self) -> float:
        return float(sum(np.sum(w * w) for w in self.weights))

    def forward(self, x: np.ndarray) -> np.ndarray | float:
        """Predictions for one input vector (returns float) or a batch (returns array)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if x.shape[-1] != self.spec.input_dim:
            raise DomainError(f"input length {x.shape[-1]} != network input_dim {self.spec.input_dim}")
        out = _predict(self.params(), np.atleast_2d(x), self.spec.activation)
        return float(out[0]) if single else out

    __call__ = forward


def init_network(spec: NetworkSpec, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for i, o in spec.layer_shapes():
        limit = math.sqrt(6.0 / i)
        ws.append(rng.uniform(-limit, limit, size=(i, o)))
        bs.append(np.zeros(o))
    return Network(spec, tuple(ws), tuple(bs), seed)


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(z, kind):
    return np.maximum(z, 0) if kind == "relu" else np.tanh(z)


def _predict(params, x, kind) -> np.ndarray:
    a = x
    n_layers = len(params) // 2
    for layer in range(n_layers):
        z = a @ params[2 * layer] + params[2 * layer + 1]
        a = _act(z, kind) if layer < n_layers - 1 else z
    return softplus(a[:, 0])


def msle(pred, target):
    """Squared difference of ln(1 + value); elementwise on arrays."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if np.any(p <= 0) or np.any(t <= 0):
        raise DomainError("msle needs positive predictions and targets")
    out = (np.log1p(p) - np.log1p(t)) ** 2
    return float(out) if out.ndim == 0 else out


def loss_and_grad(params: list[np.ndarray], x: np.ndarray, y: np.ndarray, l2: float,
                  activation: str = "relu") -> tuple[float, list[np.ndarray]]:
    """Mean MSLE plus ``l2``·Σ‖W‖² (weights only) and its gradient w.r.t. ``params``."""
    n_layers = len(params) // 2
    acts = [x]
    pre = []
    a = x
    for layer in range(n_layers):
        z = a @ params[2 * layer] + params[2 * layer + 1]
        pre.append(z)
        a = _act(z, activation) if layer < n_layers - 1 else z
        acts.append(a)
    zout = acts[-1][:, 0]
    pred = softplus(zout)
    diff = np.log1p(pred) - np.log1p(y)
    n = x.shape[0]
    loss = float(np.mean(diff * diff)) + l2 * sum(float(np.sum(params[2 * i] ** 2)) for i in range(n_layers))

    grads = [None] * len(params)
    delta = (2.0 / n) * diff / (1.0 + pred) * _sigmoid(zout)
    delta = delta[:, None].astype(x.dtype, copy=False)
    for layer in range(n_layers - 1, -1, -1):
        w = params[2 * layer]
        grads[2 * layer] = acts[layer].T @ delta + (2.0 * l2) * w
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = delta @ w.T
            if activation == "relu":
                delta = delta * (pre[layer - 1] > 0)
            else:
                delta = delta * (1.0 - acts[layer] ** 2)
    return loss, grads


def train(net: Network, data: Dataset, cfg: TrainingConfig) -> Network:
    """Adam on mean MSLE + L2. Returns a new network; ``net`` is not modified."""
    if len(data) == 0:
        raise DomainError("cannot train on an empty dataset")
    if data.inputs.shape[1] != net.spec.input_dim:
        raise DomainError(f"dataset width {data.inputs.shape[1]} != input_dim {net.spec.input_dim}")
    if cfg.epochs == 0:
        return net
    dt = np.dtype(cfg.dtype)
    params = [p.astype(dt, copy=True) for p in net.params()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    x_all = data.inputs.astype(dt)
    y_all = data.targets.astype(dt)
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    step = 0
    flush = dt == np.float32
    history = list(net.history)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(params, x_all[idx], y_all[idx], cfg.l2_lambda, net.spec.activation)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            lr = cfg.learning_rate * math.sqrt(c2) / c1
            eps = cfg.eps * math.sqrt(c2)
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * (g * g)
                p -= lr * mi / (np.sqrt(vi) + eps)
            if flush and step % 8 == 0:
                # dead units decay towards subnormals, which slow float32 arithmetic badly;
                # zero them well before they get there
                for a in params + m + v:
                    np.copyto(a, 0, where=np.abs(a) < 1e-30)
            total += loss * len(idx)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingDivergedError(epoch)
        history.append(total / n)
    params = [p.astype(np.float64) for p in params]
    return Network(net.spec, tuple(params[0::2]), tuple(params[1::2]), net.rng_seed, tuple(history))


def init_from_base(base: Network, spec: NetworkSpec | None = None) -> Network:
    """Copy of ``base`` to start fine-tuning from; the spec must match exactly."""
    if spec is not None and spec != base.spec:
        raise TransferError(f"cannot initialise {spec} from a network with spec {base.spec}")
    return Network(base.spec, tuple(w.copy() for w in base.weights),
                   tuple(b.copy() for b in base.biases), base.rng_seed, ())


def evaluate_msle(net: Network, data: Dataset) -> float:
    return float(np.mean(msle(net.forward(data.inputs), data.targets)))


def mean_rel_error(net: Network, data: Dataset) -> float:
    pred = net.forward(data.inputs)
    return float(np.mean(np.abs(pred - data.targets) / data.targets))


# --- serialization --------------------------------------------------------

def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


def network_to_dict(net: Network) -> dict:
    return {
        "spec": asdict(net.spec),
        "rng_seed": net.rng_seed,
        "history": list(net.history),
        "weights": [_encode(w) for w in net.weights],
        "biases": [_encode(b) for b in net.biases],
    }


def network_from_dict(d: dict) -> Network:
    spec = NetworkSpec(**d["spec"])
    shapes = spec.layer_shapes()
    ws = tuple(_decode(s, shape) for s, shape in zip(d["weights"], shapes))
    bs = tuple(_decode(s, (o,)) for s, (_, o) in zip(d["biases"], shapes))
    return Network(spec, ws, bs, int(d["rng_seed"]), tuple(d.get("history", ())))


def save_network(net: Network, path: str | Path, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **extra}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        fh.write(json.dumps(network_to_dict(net), sort_keys=True) + "\n")
    return path


def load_network(path: str | Path) -> Network:
    with Path(path).open(encoding="utf-8") as fh:
        head = json.loads(fh.readline())
        if head.get("format") != MODEL_FORMAT or head.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: not a version-{MODEL_VERSION} {MODEL_FORMAT} file")
        return network_from_dict(json.loads(fh.readline()))



def dataset_to_dict(data: Dataset) -> dict:
    return {"shape": list(data.inputs.shape), "inputs": _encode(data.inputs), "targets": _encode(data.targets),
            "meta": [list(m) if isinstance(m, tuple) else m for m in data.meta]}


def dataset_from_dict(d: dict) -> Dataset:
    shape = tuple(d["shape"])
    meta = tuple(tuple(m) if isinstance(m, list) else m for m in d.get("meta", ()))
    return Dataset(_decode(d["inputs"], shape), _decode(d["targets"], (shape[0],)), meta)

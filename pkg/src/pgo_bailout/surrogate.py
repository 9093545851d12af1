"""Multilayer perceptron surrogate of the bailout-effect function.

Plain numpy: forward pass, mean-squared-error training by mini-batch
gradient descent, and the Jacobian of the network output with respect to
its input, which is what the constrained optimiser consumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clearing import BlackBox
from .errors import DimensionMismatch, DivergenceDetected, NoConvergence, ValidationError
from .metrics import save_all_batch

CHECKPOINT_MAGIC = "pgo-mlp-checkpoint v1"
OBJECTIVES = ("payall", "saveall")


def _tanh(z):
    return np.tanh(z)


def _dtanh(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _dsigmoid(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


ACTIVATIONS = {
    "tanh": (_tanh, _dtanh),
    "sigmoid": (_sigmoid, _dsigmoid),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


class MlpNetwork:
    """Fully connected network; ``weights[l]`` has shape ``(sizes[l+1], sizes[l])``.

    Hidden layers share one smooth activation, the output layer is affine.
    """

    def __init__(self, weights, biases, activation: str = "tanh"):
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        self.activation = activation
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("need one bias per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[0] != b.size:
                raise DimensionMismatch(f"layer {l}: W {W.shape} vs b {b.shape}")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionMismatch(f"layer {l} input width mismatch")

    @classmethod
    def init(cls, sizes, seed: int = 0, scale: float = 1.0,
             activation: str = "tanh") -> "MlpNetwork":
        """Glorot-style uniform initialisation, multiplied by ``scale``."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = scale * np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activation)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([W.copy() for W in self.weights],
                          [b.copy() for b in self.biases], self.activation)

    def _act(self, l):
        # last layer is always affine
        if l == self.depth - 1:
            return ACTIVATIONS["identity"]
        return ACTIVATIONS[self.activation]

    def forward(self, x):
        """Return ``(y, zs, activations)``. Works on one vector or a batch of rows."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise DimensionMismatch(f"expected {self.sizes[0]} inputs, got {x.shape[-1]}")
        a = x
        zs, acts = [], [x]
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = self._act(l)[0](z)
            zs.append(z)
            acts.append(a)
        return a, zs, acts

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def input_gradient(self, x) -> np.ndarray:
        """Jacobian ``d y_u / d x_v`` with shape ``(n_out, n_in)``.

        Backward recursion over layers: start from the diagonal of the
        output derivative, then repeatedly multiply by the next layer's
        weights and scale columns by the current layer's activation slope.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionMismatch("input_gradient takes a single input vector")
        _, zs, _ = self.forward(x)
        delta = np.diag(self._act(self.depth - 1)[1](zs[-1]))
        for l in range(self.depth - 2, -1, -1):
            delta = (delta @ self.weights[l + 1]) * self._act(l)[1](zs[l])[None, :]
        return delta @ self.weights[0]

    def weight_gradients(self, X, dY):
        """Backpropagate output sensitivities ``dY`` (rows) to parameter gradients."""
        _, zs, acts = self.forward(X)
        gW = [None] * self.depth
        gb = [None] * self.depth
        d = dY * self._act(self.depth - 1)[1](zs[-1])
        for l in range(self.depth - 1, -1, -1):
            gW[l] = d.T @ acts[l]
            gb[l] = d.sum(axis=0)
            if l:
                d = (d @ self.weights[l]) * self._act(l - 1)[1](zs[l - 1])
        return gW, gb

    def save(self, path) -> None:
        lines = [CHECKPOINT_MAGIC,
                 "sizes " + " ".join(str(s) for s in self.sizes),
                 "activation " + self.activation]
        for W, b in zip(self.weights, self.biases):
            lines.extend(" ".join(repr(float(v)) for v in row) for row in W)
            lines.append(" ".join(repr(float(v)) for v in b))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MlpNetwork":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != CHECKPOINT_MAGIC:
            raise ValidationError("not a network checkpoint")
        sizes = [int(t) for t in lines[1].split()[1:]]
        activation = lines[2].split()[1]
        pos = 3
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = np.array([[float(t) for t in lines[pos + r].split()] for r in range(fan_out)])
            pos += fan_out
            b = np.array([float(t) for t in lines[pos].split()])
            pos += 1
            weights.append(W.reshape(fan_out, fan_in))
            biases.append(b)
        return cls(weights, biases, activation)


def forward(net: MlpNetwork, x):
    return net.forward(x)


def input_gradient(net: MlpNetwork, x) -> np.ndarray:
    return net.input_gradient(x)


def default_widths(n_inputs: int, hidden_layers: int) -> list[int]:
    return [max(16, 2 * n_inputs)] * hidden_layers


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 128
    init_scale: float = 1.0
    seed: int = 0
    optimizer: str = "adam"
    hidden_layers: int = 2
    activation: str = "tanh"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("need learning_rate > 0, batch_size >= 1, epochs >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError("optimizer must be 'sgd' or 'adam'")


def train(net: MlpNetwork, data, config: TrainingConfig):
    """Fit ``net`` to ``data`` by mean-squared error. Returns ``(new_net, history)``.

    ``data`` is a :class:`Dataset` (trained on its scaled columns) or an
    ``(X, y)`` pair used as given. The input network is not modified.
    """
    if isinstance(data, Dataset):
        X, Y = data.scaled_inputs(), data.scaled_targets()
    else:
        X, Y = (np.asarray(a, dtype=float) for a in data)
    Y = Y.reshape(len(Y), -1)
    if len(X) == 0:
        raise ValidationError("cannot train on an empty dataset")
    net = net.copy()
    history: list[float] = []
    rng = np.random.default_rng(config.seed)
    params = net.weights + net.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    N = len(X)
    for _ in range(config.epochs):
        order = rng.permutation(N)
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], Y[idx]
            pred = net.predict(xb)
            gW, gb = net.weight_gradients(xb, 2.0 * (pred - yb) / len(idx))
            grads = gW + gb
            step += 1
            for k, (p, g) in enumerate(zip(params, grads)):
                if config.optimizer == "adam":
                    m1[k] = b1 * m1[k] + (1 - b1) * g
                    m2[k] = b2 * m2[k] + (1 - b2) * g * g
                    mh = m1[k] / (1 - b1 ** step)
                    vh = m2[k] / (1 - b2 ** step)
                    p -= config.learning_rate * mh / (np.sqrt(vh) + eps)
                else:
                    p -= config.learning_rate * g
        with np.errstate(over="ignore", invalid="ignore"):
            loss = float(np.mean((net.predict(X) - Y) ** 2))
        if not np.isfinite(loss):
            raise DivergenceDetected(f"training loss became {loss} after {len(history)} epochs")
        history.append(loss)
    return net, history


@dataclass
class Dataset:
    """Bailout vectors with one scalar target each.

    Inputs are scaled by ``1 / input_scale`` (the budget range), targets are
    standardised. Both maps are recorded so predictions can be mapped back.
    """

    inputs: np.ndarray
    targets: np.ndarray
    provenance: np.ndarray
    input_scale: float
    objective: str = "saveall"
    target_mean: float = field(init=False)
    target_std: float = field(init=False)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        self.provenance = np.asarray(self.provenance, dtype=str)
        if self.input_scale <= 0:
            raise ValidationError("input scale must be positive")
        if not len(self.inputs) == len(self.targets) == len(self.provenance):
            raise DimensionMismatch("inputs, targets and provenance differ in length")
        self.target_mean = float(self.targets.mean()) if len(self.targets) else 0.0
        std = float(self.targets.std()) if len(self.targets) else 1.0
        self.target_std = std if std > 1e-12 else 1.0

    def __len__(self):
        return len(self.targets)

    def scale_inputs(self, x):
        return np.asarray(x, dtype=float) / self.input_scale

    def unscale_inputs(self, x):
        return np.asarray(x, dtype=float) * self.input_scale

    def scale_targets(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def unscale_targets(self, y):
        return np.asarray(y, dtype=float) * self.target_std + self.target_mean

    def scaled_inputs(self):
        return self.scale_inputs(self.inputs)

    def scaled_targets(self):
        return self.scale_targets(self.targets)

    def save_csv(self, path) -> None:
        n = self.inputs.shape[1]
        with open(path, "w", newline="") as fh:
            fh.write(f"# objective={self.objective} input_scale={self.input_scale!r}\n")
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(n)] + ["target", "provenance"])
            for x, y, p in zip(self.inputs, self.targets, self.provenance):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y)), p])

    @classmethod
    def load_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            meta = dict(kv.split("=", 1) for kv in fh.readline().lstrip("# ").split())
            rows = list(csv.reader(fh))
        body = rows[1:]
        X = np.array([[float(v) for v in r[:-2]] for r in body]).reshape(len(body), -1)
        y = np.array([float(r[-2]) for r in body])
        prov = np.array([r[-1] for r in body], dtype=str)
        return cls(X, y, prov, float(meta["input_scale"]), meta["objective"])


def sample_allocations(rng: np.random.Generator, n: int, count: int, budget: float,
                       zero_out: bool = False) -> np.ndarray:
    """Random injections with total drawn from ``U(0, budget)``.

    With ``zero_out`` a random nonempty proper subset of banks receives nothing.
    """
    totals = rng.uniform(0.0, budget, size=count)
    w = rng.random((count, n))
    if zero_out and n > 1:
        k = rng.integers(1, n, size=count)
        ranks = np.argsort(rng.random((count, n)), axis=1).argsort(axis=1)
        w[ranks < k[:, None]] = 0.0
    s = w.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return totals[:, None] * w / s


def simulate_dataset(box: BlackBox, tau_max: float, n_random: int,
                     n_zero_augmented: int, seed: int, max_retries: int = 10,
                     save_mode: str = "row") -> dict[str, Dataset]:
    """Draw bailouts, clear each through ``box`` and return one dataset per objective."""
    if tau_max <= 0:
        raise ValidationError("the budget range must be positive")
    n = box.system.n
    rng = np.random.default_rng(seed)
    blocks = [sample_allocations(rng, n, n_random, tau_max),
              sample_allocations(rng, n, n_zero_augmented, tau_max, zero_out=True)]
    C = np.vstack(blocks)
    prov = np.array(["random"] * n_random + ["zero"] * n_zero_augmented)
    out = box.evaluate_batch(C)
    L, P = out.lstar.copy(), out.pstar.copy()
    bad = np.flatnonzero(~out.converged)
    for _ in range(max_retries):
        if bad.size == 0:
            break
        for k in bad:
            C[k] = sample_allocations(rng, n, 1, tau_max, zero_out=prov[k] == "zero")[0]
        redo = box.evaluate_batch(C[bad])
        L[bad], P[bad] = redo.lstar, redo.pstar
        bad = bad[~redo.converged]
    if bad.size:
        raise NoConvergence(f"{bad.size} dataset rows failed to clear after {max_retries} retries")
    base = box.baseline
    targets = {
        "payall": L.sum(axis=1),
        "saveall": save_all_batch(box.system, base.lstar, base.pstar, L, P, C, save_mode),
    }
    return {k: Dataset(C, v, prov, tau_max, k) for k, v in targets.items()}


def generate_dataset(box: BlackBox, objective: str, tau_max: float, n_random: int,
                     n_zero_augmented: int, seed: int) -> Dataset:
    if objective not in OBJECTIVES:
        raise ValidationError(f"objective must be one of {OBJECTIVES}")
    return simulate_dataset(box, tau_max, n_random, n_zero_augmented, seed)[objective]


@dataclass
class Surrogate:
    """A trained network bundled with the scalers of its dataset.

    Evaluation happens in scaled coordinates (``x = ctilde / input_scale``),
    which is where the optimiser works.
    """

    net: MlpNetwork
    input_scale: float
    target_mean: float
    target_std: float
    history: list = field(default_factory=list)

    @classmethod
    def fit(cls, data: Dataset, config: TrainingConfig, widths=None) -> "Surrogate":
        n = data.inputs.shape[1]
        widths = default_widths(n, config.hidden_layers) if widths is None else list(widths)
        net = MlpNetwork.init([n] + widths + [1], seed=config.seed,
                              scale=config.init_scale, activation=config.activation)
        net, hist = train(net, data, replace(config))
        return cls(net, data.input_scale, data.target_mean, data.target_std, hist)

    def value(self, x) -> float:
        return float(self.net.predict(np.asarray(x, dtype=float))[0])

    def gradient(self, x) -> np.ndarray:
        return self.net.input_gradient(np.asarray(x, dtype=float))[0]

    def predict_raw(self, ctilde) -> np.ndarray:
        y = self.net.predict(np.atleast_2d(ctilde) / self.input_scale)[:, 0]
        return y * self.target_std + self.target_mean

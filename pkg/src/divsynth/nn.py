"""Seeded feed-forward substrate with exact reverse-mode derivatives.

Small fully-connected networks in float64: affine layers with leaky
rectifier hidden units and a configurable output activation. Besides plain
backprop, the module provides the second differentiation pass needed for
the critic's gradient penalty, an adaptive-moment optimizer with an L2
term, central-difference checking utilities, and a bitwise checkpoint
format (JSON manifest + npz blobs).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, LoadError, ShapeError, StateError, TrainingError, WriteError
from .rng import derive_rng

LEAKY_SLOPE = 0.2
EPS_NORM = 1e-12          # guard inside the gradient-norm square root
OUTPUT_ACTIVATIONS = ("none", "relu", "sigmoid")


@dataclass
class NetworkSpec:
    layer_dims: tuple[int, ...]
    output_activation: str = "none"
    hidden_activation: str = "leaky_relu"
    name: str = "net"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ArgumentError(f"bad layer_dims {self.layer_dims}")
        if self.hidden_activation != "leaky_relu":
            raise ArgumentError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ArgumentError(f"unsupported output activation {self.output_activation!r}")


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "none":
        return z
    if kind == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ArgumentError(f"unknown activation {kind!r}")


def _slope(kind: str, z: np.ndarray, activated: np.ndarray) -> np.ndarray:
    if kind == "none":
        return np.ones_like(z)
    if kind == "leaky_relu":
        return np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if kind == "relu":
        return np.where(z > 0.0, 1.0, 0.0)
    if kind == "sigmoid":
        return activated * (1.0 - activated)
    raise ArgumentError(f"unknown activation {kind!r}")


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: "Network") -> "Gradients":
        return cls([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases])

    def add_scaled(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        for mine, theirs in zip(self.weights, other.weights):
            mine += scale * theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine += scale * theirs
        return self

    def as_list(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


class Network:
    """An MLP with cached forward state for one backward pass at a time."""

    def __init__(self, spec: NetworkSpec, weights: list[np.ndarray],
                 biases: list[np.ndarray]):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self._cache = None

    @classmethod
    def initialize(cls, spec: NetworkSpec, master_seed: int) -> "Network":
        rng = derive_rng(master_seed, "init", spec.name)
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @property
    def n_inputs(self) -> int:
        return self.spec.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.spec.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def _layer_activation(self, layer: int) -> str:
        return self.spec.output_activation if layer == self.n_layers - 1 \
            else self.spec.hidden_activation

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        was_1d = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.n_inputs:
            raise ShapeError(f"input width {h.shape[1]} != {self.n_inputs}")
        zs, acts = [], [h]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = _activate(self._layer_activation(layer), z)
            zs.append(z)
            acts.append(h)
        self._cache = (zs, acts, was_1d)
        return h[0] if was_1d else h

    def gradients(self, out_adjoint: np.ndarray) -> tuple[Gradients, np.ndarray]:
        """Exact derivatives of the scalar loss whose d(loss)/d(output) is given.

        Returns parameter gradients (summed over the batch) and the gradient
        with respect to the network input. Requires a prior forward pass.
        """
        if self._cache is None:
            raise StateError("gradients() called before forward()")
        zs, acts, was_1d = self._cache
        g = np.atleast_2d(np.asarray(out_adjoint, dtype=np.float64))
        if g.shape != acts[-1].shape:
            raise ShapeError(f"adjoint shape {g.shape} != output shape {acts[-1].shape}")
        weight_grads = [None] * self.n_layers
        bias_grads = [None] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            e = g * _slope(self._layer_activation(layer), zs[layer], acts[layer + 1])
            weight_grads[layer] = e.T @ acts[layer]
            bias_grads[layer] = e.sum(axis=0)
            g = e @ self.weights[layer]
        input_grad = g[0] if was_1d else g
        return Gradients(weight_grads, bias_grads), input_grad


def penalty_gradients(critic: Network, interpolates: np.ndarray,
                      condition: np.ndarray, lam: float) -> tuple[float, Gradients]:
    """Gradient penalty lam * mean((||d critic / d interpolate|| - 1)^2) and
    its exact parameter derivatives.

    The norm runs over the interpolate (feature) dimensions only. The
    second differentiation pass treats the piecewise-linear activation
    slopes as locally constant, which is their almost-everywhere exact
    derivative; a sigmoid output is therefore not supported here.
    """
    interpolates = np.atleast_2d(np.asarray(interpolates, dtype=np.float64))
    condition = np.atleast_2d(np.asarray(condition, dtype=np.float64))
    if critic.n_outputs != 1:
        raise ArgumentError("penalty needs a scalar-output critic")
    if critic.spec.output_activation == "sigmoid":
        raise ArgumentError("penalty supports piecewise-linear critics only")
    d_x = interpolates.shape[1]
    batch = interpolates.shape[0]
    if condition.shape[0] != batch:
        raise ShapeError(f"{batch} interpolates vs {condition.shape[0]} conditions")
    v = np.concatenate([interpolates, condition], axis=1)
    if v.shape[1] != critic.n_inputs:
        raise ShapeError(f"critic expects width {critic.n_inputs}, got {v.shape[1]}")

    # Forward, keeping pre-activation slopes per layer.
    h = v
    slopes, inputs = [], []
    for layer, (w, b) in enumerate(zip(critic.weights, critic.biases)):
        inputs.append(h)
        z = h @ w.T + b
        kind = critic._layer_activation(layer)
        h = _activate(kind, z)
        slopes.append(_slope(kind, z, h))

    # Input gradient of the critic output, one backward chain per sample.
    es = [None] * critic.n_layers
    delta = np.ones((batch, 1))
    for layer in range(critic.n_layers - 1, -1, -1):
        es[layer] = delta * slopes[layer]
        delta = es[layer] @ critic.weights[layer]
    u = delta[:, :d_x]

    norms = np.sqrt(np.sum(u * u, axis=1) + EPS_NORM)
    penalty = lam * float(np.mean((norms - 1.0) ** 2))

    # Differentiate the penalty through the gradient chain.
    c = (2.0 * lam / batch) * ((norms - 1.0) / norms)[:, None] * u
    q = np.concatenate([c, np.zeros((batch, condition.shape[1]))], axis=1)
    weight_grads, bias_grads = [], []
    for layer in range(critic.n_layers):
        weight_grads.append(es[layer].T @ q)
        bias_grads.append(np.zeros_like(critic.biases[layer]))
        q = slopes[layer] * (q @ critic.weights[layer].T)
    return penalty, Gradients(weight_grads, bias_grads)


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0


def init_adam(params: list[np.ndarray], learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8, weight_decay: float = 0.0) -> AdamState:
    return AdamState(first=[np.zeros_like(p) for p in params],
                     second=[np.zeros_like(p) for p in params],
                     step=0, learning_rate=learning_rate,
                     beta1=beta1, beta2=beta2, epsilon=epsilon,
                     weight_decay=weight_decay)


def optimizer_step(params: list[np.ndarray], grads: list[np.ndarray],
                   state: AdamState) -> None:
    """Adaptive-moment update in place; the L2 term is added to the gradient."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ShapeError("parameter/gradient/state length mismatch")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


# ---------------------------------------------------------------------------
# Gradient checking


def central_difference_gradients(f, arrays: list[np.ndarray],
                                 step: float = 1e-5) -> list[np.ndarray]:
    """Numerically differentiate the scalar f() w.r.t. each array entry."""
    out = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = f()
            flat[i] = keep - step
            lo = f()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * step)
        out.append(grad)
    return out


def relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    b = np.concatenate([np.ravel(x) for x in numeric])
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


# ---------------------------------------------------------------------------
# Checkpoints


CHECKPOINT_VERSION = 1


def save_checkpoint(dir_path: str | Path, networks: dict[str, Network],
                    arrays: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> Path:
    """Write manifest.json + params.npz; loading restores bitwise state."""
    dir_path = Path(dir_path)
    try:
        dir_path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {dir_path}: {exc}") from exc
    manifest = {"version": CHECKPOINT_VERSION, "networks": {}, "extra": extra or {}}
    blobs: dict[str, np.ndarray] = {}
    for name, net in networks.items():
        manifest["networks"][name] = asdict(net.spec)
        for layer in range(net.n_layers):
            blobs[f"{name}.W{layer}"] = net.weights[layer]
            blobs[f"{name}.b{layer}"] = net.biases[layer]
    for key, arr in (arrays or {}).items():
        blobs[f"array.{key}"] = np.asarray(arr)
    try:
        np.savez(dir_path / "params.npz", **blobs)
        (dir_path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write checkpoint {dir_path}: {exc}") from exc
    return dir_path


def load_checkpoint(dir_path: str | Path) -> tuple[dict[str, Network],
                                                   dict[str, np.ndarray], dict]:
    dir_path = Path(dir_path)
    manifest_path = dir_path / "manifest.json"
    if not manifest_path.exists():
        raise LoadError(f"missing file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise LoadError(f"unsupported checkpoint version {manifest.get('version')}")
    with np.load(dir_path / "params.npz") as blobs:
        networks: dict[str, Network] = {}
        for name, spec_dict in manifest["networks"].items():
            spec = NetworkSpec(**{k: tuple(v) if k == "layer_dims" else v
                                  for k, v in spec_dict.items()})
            weights = [blobs[f"{name}.W{l}"] for l in range(len(spec.layer_dims) - 1)]
            biases = [blobs[f"{name}.b{l}"] for l in range(len(spec.layer_dims) - 1)]
            networks[name] = Network(spec, weights, biases)
        arrays = {key[len("array."):]: blobs[key]
                  for key in blobs.files if key.startswith("array.")}
    return networks, arrays, manifest.get("extra", {})

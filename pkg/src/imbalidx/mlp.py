"""Small feedforward binary classifier trained with plain backprop.

Hidden layers are relu, the single output unit is a sigmoid, and the loss
is binary cross-entropy computed in log space from the pre-activation.
Optimization is mini-batch gradient descent with classical momentum.
Everything is float64 numpy; no training framework behind it.

Weight matrices are stored (fan_out, fan_in), one row per output unit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset import LabeledDataset

FORMAT_VERSION = 1


class BadArchitecture(ValueError):
    """Layer size list does not describe a usable binary classifier."""


class SingleClassTrainingSet(ValueError):
    """Training data holds only one class; the loss cannot rank anything."""


class NonFiniteLoss(FloatingPointError):
    """Training produced a NaN or infinite loss instead of converging."""


class ModelFormatError(ValueError):
    """Serialized model is malformed or from an unknown format."""


@dataclass
class MlpModel:
    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: Optional[int] = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


def _check_architecture(layer_sizes: Sequence[int]) -> List[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise BadArchitecture(f"need input and output layers, got {sizes}")
    if any(s < 1 for s in sizes):
        raise BadArchitecture(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] != 1:
        raise BadArchitecture(f"binary output layer must have size 1, got {sizes[-1]}")
    return sizes


def init_model(layer_sizes: Sequence[int], seed=None) -> MlpModel:
    """Uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases."""
    sizes = _check_architecture(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Clipping keeps the output strictly inside (0, 1) in float64.
    z = np.clip(z, -36.0, 36.0)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_full(
    model: MlpModel, x: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Per-layer activations and pre-activations, plus final logits."""
    acts = [x]
    zs = []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        zs.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return acts, zs, zs[-1][:, 0]


def _as_matrix(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ValueError(
            f"expected (n, {model.n_inputs}) inputs, got shape {x.shape}"
        )
    return x


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Attack probabilities, strictly inside (0, 1). A single 23-vector
    gives a length-1 array."""
    x = _as_matrix(model, x)
    _, _, logits = _forward_full(model, x)
    return _sigmoid(logits)


def predict(model: MlpModel, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Hard labels: attack when the probability reaches the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (forward(model, x) >= threshold).astype(np.int64)


def _bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    # mean(softplus(z) - y*z); softplus via logaddexp so huge logits cannot
    # produce log(0).
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def loss(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    x = _as_matrix(model, x)
    y = np.asarray(y, dtype=np.float64)
    _, _, logits = _forward_full(model, x)
    return _bce_from_logits(logits, y)


def _gradients(
    model: MlpModel, x: np.ndarray, y: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray], float]:
    """Backprop for the mean BCE over the batch."""
    acts, zs, logits = _forward_full(model, x)
    batch_loss = _bce_from_logits(logits, y)
    delta = (_sigmoid(logits) - y)[:, None] / x.shape[0]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (zs[i - 1] > 0.0)
    return grads_w, grads_b, batch_loss


def train(
    model: MlpModel,
    train_set: LabeledDataset,
    config: TrainConfig = TrainConfig(),
) -> Tuple[MlpModel, List[float]]:
    """Fit in place and return (model, per-epoch mean losses).

    Velocity update per parameter: v = momentum*v - lr*grad; theta += v.
    Epoch shuffling comes from config.seed, so a (seed, data, config)
    triple fully determines the fitted parameters.
    """
    x = _as_matrix(model, train_set.x)
    y = train_set.y.astype(np.float64)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassTrainingSet(
            f"training labels are all {classes[0]:g}" if classes.size else
            "training set is empty"
        )
    rng = np.random.default_rng(config.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    history: List[float] = []
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            sel = order[lo : lo + config.batch_size]
            gw, gb, batch_loss = _gradients(model, x[sel], y[sel])
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(f"loss became {batch_loss}")
            total += batch_loss * sel.size
            for i in range(len(model.weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * gw[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * gb[i]
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]
        history.append(total / n)
    return model, history


def gradient_check(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float = 1e-5,
) -> float:
    """Largest relative disagreement between backprop and central finite
    differences (f(p+eps)-f(p-eps))/2eps over every parameter, with the
    relative error floored at 1e-12."""
    x = _as_matrix(model, x)
    y = np.asarray(y, dtype=np.float64)
    gw, gb, _ = _gradients(model, x, y)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for j in range(flat_p.size):
                orig = flat_p[j]
                flat_p[j] = orig + epsilon
                hi = loss(model, x, y)
                flat_p[j] = orig - epsilon
                lo = loss(model, x, y)
                flat_p[j] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                analytic = flat_g[j]
                denom = max(abs(analytic) + abs(numeric), 1e-12)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def save_model(model: MlpModel, path) -> None:
    obj = {
        "version": FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "hidden_activation": "relu",
        "output_activation": "sigmoid",
    }
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True)
        f.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format: {obj.get('version')!r}")
    if obj.get("hidden_activation") != "relu" or obj.get("output_activation") != "sigmoid":
        raise ModelFormatError("unknown activation names")
    try:
        sizes = _check_architecture(obj["layer_sizes"])
        weights = [np.asarray(w, dtype=np.float64) for w in obj["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in obj["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model payload: {exc}") from None
    if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise ModelFormatError("layer count does not match weight count")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
            raise ModelFormatError(
                f"layer {i} shapes {w.shape}/{b.shape} do not match sizes {sizes}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ModelFormatError(f"layer {i} contains non-finite parameters")
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)

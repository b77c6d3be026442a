"""Per-metric feed-forward regression heads with hand-rolled backprop.

Each head maps a concatenated pair embedding through two relu layers
(120, 84 by default) to a single logistic-squashed score in (0,1), trained
example-by-example with SGD plus classical momentum on squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .embedding import concat, embed_bundle, mean_pool
from .errors import ArgumentError, DimensionError, EmptyDatasetError, NotFoundError
from .features import FeatureBundle, MetricKind

DEFAULT_HIDDEN = (120, 84)
PARAM_FIELDS = ("W1", "b1", "W2", "b2", "W3", "b3")

_METRIC_INDEX = {metric: i for i, metric in enumerate(MetricKind)}


@dataclass
class RegressionHead:
    metric: MetricKind
    input_dim: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3)

    @property
    def hidden(self) -> tuple[int, int]:
        return (self.b1.shape[0], self.b2.shape[0])

    def copy(self) -> "RegressionHead":
        return RegressionHead(
            metric=self.metric,
            input_dim=self.input_dim,
            **{name: getattr(self, name).copy() for name in PARAM_FIELDS},
        )


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }


@dataclass
class MomentumState:
    buffers: tuple[np.ndarray, ...]

    @classmethod
    def zeros(cls, head: RegressionHead) -> "MomentumState":
        return cls(buffers=tuple(np.zeros_like(p) for p in head.params()))


def init_head(
    metric: MetricKind,
    input_dim: int,
    seed: int,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
) -> RegressionHead:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    The metric participates in the seeding so the seven heads of one run
    start from distinct parameters.
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    n1, n2 = hidden
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_METRIC_INDEX[metric],))
    )

    def uniform(fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return RegressionHead(
        metric=metric,
        input_dim=input_dim,
        W1=uniform(input_dim, (n1, input_dim)),
        b1=np.zeros(n1),
        W2=uniform(n1, (n2, n1)),
        b2=np.zeros(n2),
        W3=uniform(n2, (1, n2)),
        b3=np.zeros(1),
    )


def _check_input(head: RegressionHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != head.input_dim:
        raise DimensionError(
            f"head expects input of dim {head.input_dim}, got shape {x.shape}"
        )
    return x


def forward(head: RegressionHead, x: np.ndarray) -> float:
    """relu(W1 x + b1) -> relu(W2 . + b2) -> sigmoid(W3 . + b3), in (0,1)."""
    x = _check_input(head, x)
    return float(_kernels.get_kernels()["forward"](*head.params(), x))


def backward(head: RegressionHead, x: np.ndarray, target: float) -> tuple[np.ndarray, ...]:
    """Analytic gradients of (forward(x) - target)^2 w.r.t. every parameter."""
    x = _check_input(head, x)
    return tuple(_kernels.get_kernels()["backward"](*head.params(), x, float(target)))


def mse_loss(preds: Sequence[float], targets: Sequence[float]) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 1 or preds.shape[0] == 0:
        raise ArgumentError(
            f"mse_loss needs equal non-empty series, got {preds.shape} vs {targets.shape}"
        )
    diff = preds - targets
    return float(diff @ diff / diff.shape[0])


def sgd_momentum_step(
    head: RegressionHead,
    grads: tuple[np.ndarray, ...],
    state: MomentumState,
    lr: float,
    momentum: float,
) -> tuple[RegressionHead, MomentumState]:
    """Classical momentum: v <- momentum * v + g; p <- p - lr * v (in place)."""
    params = head.params()
    if len(grads) != len(params):
        raise DimensionError(f"expected {len(params)} gradient tensors, got {len(grads)}")
    for p, v, g in zip(params, state.buffers, grads):
        if p.shape != np.shape(g):
            raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        v *= momentum
        v += g
        p -= lr * v
    return head, state


def _epoch_orders(n: int, config: TrainConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    if config.shuffle:
        return np.vstack([rng.permutation(n) for _ in range(config.epochs)]).astype(np.int64)
    return np.tile(np.arange(n, dtype=np.int64), (config.epochs, 1))


def train(
    head: RegressionHead,
    pairs: Sequence[tuple[np.ndarray, float]],
    config: TrainConfig,
) -> tuple[RegressionHead, list[float]]:
    """Train a copy of the head; returns it with the per-epoch mean of the
    pre-update squared errors. Fully deterministic given config.seed."""
    if len(pairs) == 0:
        raise EmptyDatasetError("cannot train on an empty example list")
    X = np.vstack([_check_input(head, x) for x, _ in pairs])
    Y = np.asarray([float(y) for _, y in pairs], dtype=np.float64)

    trained = head.copy()
    orders = _epoch_orders(len(pairs), config)
    history = _kernels.get_kernels()["train_epochs"](
        *trained.params(), X, Y, orders, config.learning_rate, config.momentum
    )
    return trained, [float(v) for v in history]


def predict_pair(
    models: dict[MetricKind, RegressionHead],
    bundles1: dict[MetricKind, FeatureBundle],
    bundles2: dict[MetricKind, FeatureBundle],
    provider,
) -> dict[MetricKind, float]:
    """Score both articles on all seven metrics with the trained heads."""
    missing = [m.value for m in MetricKind if m not in models]
    if missing:
        raise NotFoundError(f"model set is missing heads for: {missing}")
    scores: dict[MetricKind, float] = {}
    for metric in MetricKind:
        pooled1 = mean_pool(embed_bundle(bundles1[metric], provider))
        pooled2 = mean_pool(embed_bundle(bundles2[metric], provider))
        scores[metric] = forward(models[metric], concat(pooled1, pooled2))
    return scores


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_head(
    path: Path | str,
    head: RegressionHead,
    config: TrainConfig | None = None,
    loss_history: Sequence[float] | None = None,
) -> Path:
    """One JSON file per head; float repr round-trips parameters exactly."""
    path = Path(path)
    payload = {
        "metric": head.metric.value,
        "input_dim": head.input_dim,
        "hidden": list(head.hidden),
        "params": {name: getattr(head, name).tolist() for name in PARAM_FIELDS},
        "train_config": config.as_dict() if config else None,
        "loss_history": list(loss_history) if loss_history is not None else None,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_head(path: Path | str) -> tuple[RegressionHead, dict | None, list[float] | None]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no checkpoint at {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    head = RegressionHead(
        metric=MetricKind(payload["metric"]),
        input_dim=payload["input_dim"],
        **{
            name: np.asarray(payload["params"][name], dtype=np.float64)
            for name in PARAM_FIELDS
        },
    )
    return head, payload.get("train_config"), payload.get("loss_history")

"""Desk-scale federated training with over-the-air gradient aggregation.

The model is multinomial logistic regression with a small L2 penalty on the
weights (not the biases). Parameters are flattened as ``[W.ravel(), bias]``
with ``W`` of shape (C, b), so D = C * (b + 1).
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fluidair.errors import EmptySelectionError, InvalidArgumentError
from fluidair.objective import SelectionVector
from fluidair.ota import receive_and_combine

DEFAULT_L2 = 1e-3


@dataclass
class UserData:
    x: np.ndarray  # S_u x b
    y: np.ndarray  # S_u labels in [0, C)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.size:
            raise InvalidArgumentError("features must be S_u x b with one label per row")
        if self.y.size < 1:
            raise InvalidArgumentError("user has no samples")
        if not np.all(np.isfinite(self.x)):
            raise InvalidArgumentError("non-finite features")

    @property
    def size(self) -> int:
        return self.y.size


@dataclass
class Dataset:
    users: list[UserData]
    n_classes: int
    n_features: int
    test: UserData | None = None

    def __post_init__(self):
        for u in self.users + ([self.test] if self.test is not None else []):
            if u.x.shape[1] != self.n_features:
                raise InvalidArgumentError("feature dimension mismatch")
            if np.any(u.y < 0) or np.any(u.y >= self.n_classes):
                raise InvalidArgumentError("label out of range")

    @property
    def sizes(self) -> np.ndarray:
        return np.array([u.size for u in self.users], dtype=float)

    def pooled(self) -> UserData:
        return UserData(np.vstack([u.x for u in self.users]),
                        np.concatenate([u.y for u in self.users]))


@dataclass
class Model:
    w: np.ndarray
    n_classes: int
    n_features: int

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.size != self.dim:
            raise InvalidArgumentError(f"expected {self.dim} parameters, got {self.w.size}")
        if not np.all(np.isfinite(self.w)):
            raise InvalidArgumentError("non-finite parameters")

    @property
    def dim(self) -> int:
        return self.n_classes * (self.n_features + 1)

    @classmethod
    def zeros(cls, n_classes: int, n_features: int) -> "Model":
        return cls(np.zeros(n_classes * (n_features + 1)), n_classes, n_features)

    def unpack(self) -> tuple[np.ndarray, np.ndarray]:
        c, b = self.n_classes, self.n_features
        return self.w[: c * b].reshape(c, b), self.w[c * b:]

    def logits(self, x: np.ndarray) -> np.ndarray:
        wmat, bias = self.unpack()
        return x @ wmat.T + bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def local_loss(model: Model, data: UserData, l2: float = DEFAULT_L2) -> float:
    """Mean cross-entropy over the user's samples plus (l2/2)||W||^2."""
    lp = _log_softmax(model.logits(data.x))
    ce = -float(np.mean(lp[np.arange(data.size), data.y]))
    wmat, _ = model.unpack()
    return ce + 0.5 * l2 * float(np.sum(wmat**2))


def local_gradient(model: Model, data: UserData, l2: float = DEFAULT_L2) -> np.ndarray:
    p = np.exp(_log_softmax(model.logits(data.x)))
    p[np.arange(data.size), data.y] -= 1.0
    p /= data.size
    wmat, _ = model.unpack()
    gw = p.T @ data.x + l2 * wmat
    return np.concatenate([gw.ravel(), p.sum(axis=0)])


def global_loss(model: Model, dataset: Dataset, l2: float = DEFAULT_L2) -> float:
    sizes = dataset.sizes
    if sizes.sum() <= 0:
        raise InvalidArgumentError("dataset has no samples")
    losses = np.array([local_loss(model, u, l2) for u in dataset.users])
    return float(sizes @ losses / sizes.sum())


def accuracy(model: Model, data: UserData) -> float:
    return float(np.mean(model.predict(data.x) == data.y))


def make_synthetic(seed: int, n_users: int, samples_per_user: int = 270, n_classes: int = 10,
                   n_features: int = 20, class_sep: float = 1.0, test_size: int = 2000) -> Dataset:
    """Gaussian mixture with unit-variance classes around random means, split
    i.i.d. across users."""
    if n_users < 1 or samples_per_user < 1:
        raise InvalidArgumentError("need at least one user and one sample per user")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, class_sep, size=(n_classes, n_features))

    def draw(n):
        y = rng.integers(0, n_classes, size=n)
        return UserData(means[y] + rng.standard_normal((n, n_features)), y)

    users = [draw(samples_per_user) for _ in range(n_users)]
    return Dataset(users, n_classes, n_features, draw(test_size))


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (optionally gzipped): uint8 images or labels."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (0x00000801, 0x00000803):
        raise InvalidArgumentError(f"{path}: unsupported IDX magic {magic:#010x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims)):
        raise InvalidArgumentError(f"{path}: expected {int(np.prod(dims))} values, got {data.size}")
    return data.reshape(dims)


def load_mnist(images_path, labels_path, n_users: int, samples_per_user: int, seed: int,
               test_images=None, test_labels=None) -> Dataset:
    """MNIST downsampled to 14x14 by 2x2 averaging, scaled to [0, 1]."""
    def prep(img):
        img = img.astype(float) / 255.0
        n = img.shape[0]
        return img.reshape(n, 14, 2, 14, 2).mean(axis=(2, 4)).reshape(n, 196)

    x = prep(read_idx(images_path))
    y = read_idx(labels_path).astype(int)
    need = n_users * samples_per_user
    if need > y.size:
        raise InvalidArgumentError(f"need {need} samples, file has {y.size}")
    order = np.random.default_rng(seed).permutation(y.size)[:need]
    users = [UserData(x[idx], y[idx]) for idx in order.reshape(n_users, samples_per_user)]
    test = None
    if test_images is not None and test_labels is not None:
        test = UserData(prep(read_idx(test_images)), read_idx(test_labels).astype(int))
    return Dataset(users, 10, 196, test)


@dataclass
class TrainConfig:
    rounds: int = 25
    lr: float = 0.05
    sigma_n2: float = 0.01  # mW
    p_a: float = 1.0  # mW
    l2: float = DEFAULT_L2
    seed: int = 0
    resolve_each_round: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise InvalidArgumentError("need at least one round")
        if not self.lr > 0:
            raise InvalidArgumentError("learning rate must be positive")
        if self.sigma_n2 < 0 or not self.p_a > 0:
            raise InvalidArgumentError("need sigma_n2 >= 0 and P_a > 0")


@dataclass
class RoundPlan:
    """What the server uses in a round: who transmits, how it combines, and
    the (position-dependent) user channels."""
    selection: SelectionVector
    q: np.ndarray
    channels: list  # complex vectors, one per user
    r_value: float = float("nan")


@dataclass
class TrainState:
    model: Model
    round: int = 0
    history: list[dict] = field(default_factory=list)


def weighted_gradient_target(gradients, sizes, selected) -> np.ndarray:
    """S-weighted mean of the selected users' gradients."""
    w = sizes[selected] / sizes[selected].sum()
    return np.asarray(gradients)[selected].T @ w


def fed_round(state: TrainState, plan: RoundPlan, dataset: Dataset, cfg: TrainConfig,
              rng: np.random.Generator) -> TrainState:
    """One communication round: local gradients, analog aggregation, update.

    Users pre-scale their gradients by S_u / sum(S_selected) before the
    analog sum, so the noiseless aggregate is the data-weighted gradient.
    """
    sel = plan.selection
    idx = sel.selected
    if idx.size == 0:
        raise EmptySelectionError("no users selected for this round")
    sizes = dataset.sizes
    weights = sizes[idx] / sizes[idx].sum()
    grads = {}
    for u, wt in zip(idx, weights):
        grads[u] = wt * local_gradient(state.model, dataset.users[u], cfg.l2)
    full = [grads.get(u, np.zeros(state.model.dim)) for u in range(len(dataset.users))]
    agg = receive_and_combine(plan.channels, sel.e, plan.q, full, cfg.sigma_n2, cfg.p_a, rng)
    model = Model(state.model.w - cfg.lr * agg.g_hat, state.model.n_classes,
                  state.model.n_features)
    gains = np.array([abs(np.vdot(plan.q, plan.channels[u])) ** 2 for u in idx])
    entry = {
        "round": state.round,
        "train_loss": global_loss(model, dataset, cfg.l2),
        "test_loss": local_loss(model, dataset.test, cfg.l2) if dataset.test else float("nan"),
        "test_accuracy": accuracy(model, dataset.test) if dataset.test else float("nan"),
        "selected_count": int(idx.size),
        "r_value": plan.r_value,
        "max_gain": float(gains.max()),
    }
    return TrainState(model, state.round + 1, state.history + [entry])


def train(dataset: Dataset, cfg: TrainConfig, planner: Callable[[int], RoundPlan],
          model: Model | None = None) -> TrainState:
    """Run ``cfg.rounds`` rounds. Channels are static, so the plan is computed
    once unless ``resolve_each_round`` is set."""
    state = TrainState(model or Model.zeros(dataset.n_classes, dataset.n_features))
    rng = np.random.default_rng(cfg.seed)
    plan = None
    for t in range(cfg.rounds):
        if plan is None or cfg.resolve_each_round:
            try:
                plan = planner(t)
            except Exception as exc:
                try:
                    wrapped = type(exc)(f"round {t}: {exc}")
                except TypeError:
                    raise exc
                raise wrapped from exc
        state = fed_round(state, plan, dataset, cfg, rng)
    return state

"""Training-by-sampling on the probability vector p.

Scores ``s`` are optimised with Adam; probabilities are ``p = clip(s)``.
In ``sampled`` mode each step draws z ~ Bernoulli(p) and runs the network
at w = Q z; in ``continuous`` mode it runs at w = Q p. Either way the
weight gradient is pulled back through Q as if w = Q p (straight-through)
and masked where p is saturated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import network
from .data import Dataset
from .errors import ConfigError, EmptyDatasetError
from .influence import InfluenceMatrix, backproject, expand
from .rng import SHUFFLE, TRAIN, SeedSpec, as_seed

log = logging.getLogger(__name__)

SAMPLED = "sampled"
CONTINUOUS = "continuous"
MODES = (SAMPLED, CONTINUOUS)


def clip(x):
    """ReLU clipped at 1."""
    return np.minimum(np.maximum(x, 0.0), 1.0)


def init_p(n: int, init="uniform", seed=0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Initial probabilities: ``"uniform"`` or ``("beta", alpha, beta)``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = rng if rng is not None else as_seed(seed).p_init()
    if init == "uniform":
        return rng.random(n)
    kind, a, b = init
    if kind != "beta":
        raise ConfigError(f"unknown init law {init!r}")
    if not (a > 0 and b > 0):
        raise ConfigError(f"beta parameters must be positive, got ({a}, {b})")
    return rng.beta(a, b, size=n)


def sample_mask(p, rng: np.random.Generator) -> np.ndarray:
    """z ~ Bernoulli(p), as uint8."""
    p = np.asarray(p)
    return (rng.random(p.shape) < p).astype(np.uint8)


@dataclass
class ScoreVector:
    """Scores plus Adam moment estimates."""

    s: np.ndarray
    m1: np.ndarray = None
    m2: np.ndarray = None
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.s = np.array(self.s, dtype=np.float64)
        if self.m1 is None:
            self.m1 = np.zeros_like(self.s)
        if self.m2 is None:
            self.m2 = np.zeros_like(self.s)

    @classmethod
    def from_p(cls, p) -> "ScoreVector":
        return cls(np.array(p, dtype=np.float64))

    @property
    def p(self) -> np.ndarray:
        return clip(self.s)

    def adam_update(self, g: np.ndarray, lr: float) -> None:
        self.step += 1
        self.m1 *= self.beta1
        self.m1 += (1 - self.beta1) * g
        self.m2 *= self.beta2
        self.m2 += (1 - self.beta2) * g * g
        m_hat = self.m1 / (1 - self.beta1 ** self.step)
        v_hat = self.m2 / (1 - self.beta2 ** self.step)
        self.s -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 1e-4
    batch_size: int = 128
    mode: str = SAMPLED
    eval_samples: int = 100
    init: object = "uniform"
    history_samples: int = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning rate must be non-negative")
        if self.max_epochs < 1 or self.batch_size < 1 or self.eval_samples < 0:
            raise ConfigError("epoch, batch and sample counts must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if isinstance(self.init, list):
            self.init = tuple(self.init)


def train_step(state: ScoreVector, Q: InfluenceMatrix, arch, batch, mode: str,
               rng: np.random.Generator, lr: float) -> tuple[ScoreVector, float]:
    """One Adam step on the scores. Updates ``state`` in place."""
    p = state.p
    if mode == SAMPLED:
        v = sample_mask(p, rng)
    elif mode == CONTINUOUS:
        v = p
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    w = expand(Q, v)
    loss, grad_w = network.loss_and_grad(arch, w, batch.inputs, batch.labels)
    state.adam_update(backproject(Q, grad_w, p), lr)
    return state, loss


def run_epoch(state: ScoreVector, Q, arch, data: Dataset, mode: str, lr: float,
              batch_size: int, rng: np.random.Generator, order_rng=None) -> float:
    """One pass over shuffled mini-batches; returns the mean step loss."""
    if len(data) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    order = (order_rng or rng).permutation(len(data))
    losses = []
    for lo in range(0, len(order), batch_size):
        idx = order[lo:lo + batch_size]
        _, loss = train_step(state, Q, arch, data.batch(idx), mode, rng, lr)
        losses.append(loss)
    return float(np.mean(losses))


@dataclass(frozen=True)
class AccuracyStats:
    mean: float
    std: float
    min: float
    max: float
    values: tuple = field(default=(), repr=False)

    @classmethod
    def of(cls, values) -> "AccuracyStats":
        a = np.asarray(values, dtype=np.float64)
        std = 0.0 if a.min() == a.max() else float(a.std())
        return cls(float(a.mean()), std, float(a.min()), float(a.max()), tuple(a.tolist()))


def discretize(p) -> np.ndarray:
    """Round each probability to {0, 1}; exactly 0.5 goes to 1."""
    return (np.asarray(p) >= 0.5).astype(np.uint8)


def evaluate(p, Q: InfluenceMatrix, arch, dataset: Dataset, kind: str = "expected",
             k: int = 100, rng: np.random.Generator | None = None, chunk: int = 8) -> AccuracyStats:
    """Accuracy of the expected, sampled (k masks) or discretized network."""
    p = np.asarray(p, dtype=np.float64)
    X, y = dataset.images, dataset.labels
    if kind == "expected":
        return AccuracyStats.of([network.accuracy(arch, expand(Q, p), X, y)])
    if kind == "discretized":
        return AccuracyStats.of([network.accuracy(arch, expand(Q, discretize(p)), X, y)])
    if kind != "sampled":
        raise ConfigError(f"unknown evaluation kind {kind!r}")
    if k < 1:
        raise ConfigError("sampled evaluation needs k >= 1")
    if rng is None:
        rng = SeedSpec(0).evaluation()
    accs = []
    for lo in range(0, k, chunk):
        Z = np.stack([sample_mask(p, rng) for _ in range(min(chunk, k - lo))], axis=1)
        W = expand(Q, Z.astype(np.float64))
        accs.extend(network.accuracy(arch, W[:, c], X, y) for c in range(W.shape[1]))
    return AccuracyStats.of(accs)


@dataclass
class TrainResult:
    p: np.ndarray
    history: list
    state: ScoreVector
    stopped_epoch: int


def train_local(config: TrainConfig, Q: InfluenceMatrix, arch, dataset: Dataset, seed=0,
                eval_data: Dataset | None = None, p0=None) -> TrainResult:
    """Centralised training with early stopping on the epoch training loss.

    History rows: epoch, loss, and when ``eval_data`` is given the
    expected accuracy plus mean/std over ``config.history_samples`` masks.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    seed = as_seed(seed)
    if p0 is None:
        p0 = init_p(Q.cols, config.init, seed)
    state = ScoreVector.from_p(p0)
    history = []
    best = np.inf
    wait = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        loss = run_epoch(
            state, Q, arch, dataset, config.mode, config.learning_rate, config.batch_size,
            rng=seed.stream(TRAIN, epoch), order_rng=seed.stream(SHUFFLE, epoch),
        )
        row = {"epoch": epoch, "loss": loss}
        if eval_data is not None:
            p = state.p
            row["expected_acc"] = evaluate(p, Q, arch, eval_data, "expected").mean
            if config.history_samples:
                st = evaluate(p, Q, arch, eval_data, "sampled", config.history_samples,
                              rng=seed.evaluation(epoch))
                row["sampled_mean"], row["sampled_std"] = st.mean, st.std
        history.append(row)
        log.debug("epoch %d loss %.5f", epoch, loss)
        if loss < best - config.min_delta:
            best = loss
            wait = 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                break
    return TrainResult(state.p, history, state, epoch)

"""Per-pixel linear softmax classifier over representation channels.

Each pixel's channel vector is standardized with per-channel statistics from
the training data, extended with a constant 1 for the bias, and mapped to
class logits by a ``C x (F + 1)`` weight matrix. Training minimizes the mean
softmax cross-entropy over labeled pixels plus ``l2/2 * ||W||^2`` on the
non-bias weights, using plain mini-batch gradient descent.

LPM1 checkpoint (little-endian)::

    b"LPM1", u16 C, u16 F
    F x (f64 mean, f64 std)
    C x (F + 1) f64 weights, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import IGNORE_ID, NUM_CLASSES, LabelMap, Sample
from .encoding import ReprTensor
from .errors import AllPixelsIgnored, BadModelFile, ChannelMismatch, DivergenceDetected


@dataclass
class LinearPixelModel:
    weights: np.ndarray  # (C, F + 1), last column is the bias
    feature_mean: np.ndarray  # (F,)
    feature_std: np.ndarray  # (F,)

    @classmethod
    def zeros(cls, num_classes: int, num_features: int) -> "LinearPixelModel":
        return cls(
            np.zeros((num_classes, num_features + 1)),
            np.zeros(num_features),
            np.ones(num_features),
        )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1] - 1

    def design(self, features: np.ndarray) -> np.ndarray:
        """Standardize raw ``(N, F)`` features and append the bias column."""
        z = (np.asarray(features, np.float64) - self.feature_mean) / self.feature_std
        return np.hstack([z, np.ones((z.shape[0], 1))])

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self.design(features) @ self.weights.T


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    steps: int = 200
    batch_pixels: int = 4096
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_pixels < 1:
            raise ValueError("batch_pixels must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def normalization_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[~(std > 0)] = 1.0
    return mean, std


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, truth, ignore_id: int = IGNORE_ID) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over labeled pixels and the per-pixel probabilities.

    ``logits`` has the class axis last (``(H, W, C)`` or ``(N, C)``); ``truth``
    is a LabelMap or an integer array matching the leading axes.
    """
    if isinstance(truth, LabelMap):
        ignore_id = truth.ignore_id
        truth = truth.data
    truth = np.asarray(truth)
    logits = np.asarray(logits, np.float64)
    if logits.shape[:-1] != truth.shape:
        raise ValueError(f"logits {logits.shape} do not match labels {truth.shape}")
    c = logits.shape[-1]
    y = truth.reshape(-1).astype(np.int64)
    keep = y != ignore_id
    if not keep.any():
        raise AllPixelsIgnored("no labeled pixels")
    if (y[keep] >= c).any() or (y[keep] < 0).any():
        raise ValueError(f"label outside 0..{c - 1}")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(log_probs)
    flat = log_probs.reshape(-1, c)
    nll = -flat[np.flatnonzero(keep), y[keep]]
    return float(nll.mean()), probs


def _objective(weights: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float):
    """Loss and gradient for a prepared design matrix ``x`` and labels ``y`` (no ignores)."""
    logits = x @ weights.T
    loss, probs = softmax_xent(logits, y)
    n = len(y)
    resid = probs
    resid[np.arange(n), y] -= 1.0
    grad = resid.T @ x / n
    if l2:
        w = weights[:, :-1]
        loss += 0.5 * l2 * float((w * w).sum())
        grad[:, :-1] += l2 * w
    return loss, grad


def loss_value(model: LinearPixelModel, features: np.ndarray, truth: np.ndarray, l2: float = 0.0) -> float:
    x, y = _prepare(model, features, truth)
    return _objective(model.weights, x, y, l2)[0]


def loss_gradient(model: LinearPixelModel, features: np.ndarray, truth: np.ndarray, l2: float = 0.0) -> np.ndarray:
    """Gradient of the regularized loss with respect to ``model.weights``.

    ``features`` is ``(N, F)`` raw channel values, ``truth`` ``(N,)`` class ids
    (ignore pixels allowed and skipped).
    """
    x, y = _prepare(model, features, truth)
    return _objective(model.weights, x, y, l2)[1]


def _prepare(model: LinearPixelModel, features, truth):
    features = np.asarray(features, np.float64).reshape(-1, model.num_features)
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    keep = truth != IGNORE_ID
    if not keep.any():
        raise AllPixelsIgnored("no labeled pixels in batch")
    return model.design(features[keep]), truth[keep]


def sample_pixels(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack every labeled pixel of every sample into ``(N, F)`` features and ``(N,)`` labels."""
    feats, labs = [], []
    for s in samples:
        c = s.tensor.kind.channels
        f = s.tensor.data.reshape(-1, c)
        lab = s.labels.data.reshape(-1)
        keep = lab != s.labels.ignore_id
        feats.append(f[keep])
        labs.append(lab[keep].astype(np.int64))
    return np.concatenate(feats), np.concatenate(labs)


def train(
    model: LinearPixelModel | None,
    samples: Sequence[Sample],
    config: TrainConfig,
    num_classes: int | None = None,
) -> tuple[LinearPixelModel, list[float]]:
    """Mini-batch gradient descent; returns the trained model and per-step batch loss.

    With ``model=None`` a zero-initialized model is created and the feature
    normalization is fitted on ``samples``.
    """
    if not samples:
        raise ValueError("train needs at least one sample")
    features, labels = sample_pixels(samples)
    if len(labels) == 0:
        raise AllPixelsIgnored("training samples contain no labeled pixels")
    if model is None:
        c = num_classes or max(NUM_CLASSES, int(labels.max()) + 1)
        model = LinearPixelModel.zeros(c, features.shape[1])
        model.feature_mean, model.feature_std = normalization_stats(features)
    elif features.shape[1] != model.num_features:
        raise ChannelMismatch(f"model expects {model.num_features} channels, data has {features.shape[1]}")

    x = model.design(features)
    weights = model.weights.copy()
    rng = np.random.default_rng(config.seed)
    n = len(labels)
    trace = []
    for _ in range(config.steps):
        if config.batch_pixels >= n:
            xb, yb = x, labels
        else:
            idx = rng.choice(n, size=config.batch_pixels, replace=False)
            xb, yb = x[idx], labels[idx]
        loss, grad = _objective(weights, xb, yb, config.l2)
        if not np.isfinite(loss) or not np.isfinite(grad).all():
            raise DivergenceDetected(f"loss became {loss} at step {len(trace)}")
        trace.append(loss)
        weights -= config.learning_rate * grad
    if not np.isfinite(weights).all():
        raise DivergenceDetected("weights became non-finite")
    return LinearPixelModel(weights, model.feature_mean.copy(), model.feature_std.copy()), trace


def predict(model: LinearPixelModel, tensor: ReprTensor) -> LabelMap:
    """Per-pixel argmax; ties go to the lowest class id."""
    c = tensor.kind.channels
    if c != model.num_features:
        raise ChannelMismatch(f"model expects {model.num_features} channels, tensor has {c}")
    logits = model.logits(tensor.data.reshape(-1, c))
    labels = np.argmax(logits, axis=1).astype(np.uint8)
    return LabelMap(tensor.geometry, labels.reshape(tensor.geometry.shape))


# --- LPM1 -----------------------------------------------------------------------

LPM1_MAGIC = b"LPM1"
_LPM1_HEADER = struct.Struct("<4sHH")


def encode_model(model: LinearPixelModel) -> bytes:
    norm = np.stack([model.feature_mean, model.feature_std], axis=1)
    return (
        _LPM1_HEADER.pack(LPM1_MAGIC, model.num_classes, model.num_features)
        + norm.astype("<f8").tobytes()
        + np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
    )


def decode_model(data: bytes) -> LinearPixelModel:
    if len(data) < _LPM1_HEADER.size:
        raise BadModelFile("buffer shorter than the LPM1 header")
    magic, c, f = _LPM1_HEADER.unpack_from(data, 0)
    if magic != LPM1_MAGIC:
        raise BadModelFile(f"bad magic {magic!r}")
    expected = _LPM1_HEADER.size + 8 * (2 * f + c * (f + 1))
    if len(data) != expected:
        raise BadModelFile(f"expected {expected} bytes, got {len(data)}")
    off = _LPM1_HEADER.size
    norm = np.frombuffer(data, "<f8", count=2 * f, offset=off).reshape(f, 2)
    weights = np.frombuffer(data, "<f8", offset=off + 16 * f).reshape(c, f + 1)
    return LinearPixelModel(weights.astype(np.float64), norm[:, 0].copy(), norm[:, 1].copy())


def save_model(model: LinearPixelModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_model(model))


def load_model(path) -> LinearPixelModel:
    with open(path, "rb") as fh:
        return decode_model(fh.read())

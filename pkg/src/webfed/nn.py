"""From-scratch CNN: the fixed LeNet-style model, backprop, loss, SGD.

The model is a hard-coded two-conv LeNet variant for 28x28x1 inputs:

    conv 5x5 (valid, 8 maps) -> relu -> maxpool 2x2/2
    conv 5x5 (valid, 16 maps) -> relu -> maxpool 2x2/2
    flatten -> dense 10

Shape chain for a batch of B images:
    [B,28,28,1] -> [B,24,24,8] -> [B,12,12,8] -> [B,8,8,16]
    -> [B,4,4,16] -> [B,256] -> [B,10]

Parameters are stored as float32.  Compute runs in a caller-chosen
dtype (float32 by default; float64 for finite-difference gradient
checks); scalar loss reductions always accumulate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .seeds import rng_from

LENET_V1 = "lenet-mnist-v1"

INPUT_SHAPE = (28, 28, 1)
NUM_CLASSES = 10

_LENET_PARAMS: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("conv1.w", (5, 5, 1, 8)),
    ("conv1.b", (8,)),
    ("conv2.w", (5, 5, 8, 16)),
    ("conv2.b", (16,)),
    ("dense1.w", (256, 10)),
    ("dense1.b", (10,)),
)


@dataclass(frozen=True)
class ModelSpec:
    """Fixed architecture: parameter names, shapes, and their order."""

    architecture_id: str
    param_shapes: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes)


def model_spec(architecture_id: str = LENET_V1) -> ModelSpec:
    if architecture_id != LENET_V1:
        raise ConfigError(f"unknown architecture_id: {architecture_id!r}")
    return ModelSpec(LENET_V1, _LENET_PARAMS)


class WeightsBundle:
    """Ordered named float32 tensors holding the full parameter vector.

    Bundles are immutable: tensors are copied on construction and
    write-protected, so they are safe to share across tasks.
    """

    __slots__ = ("_tensors",)

    def __init__(self, tensors: Iterable[tuple[str, np.ndarray]]):
        items = []
        for name, arr in tensors:
            a = np.array(arr, dtype=np.float32)
            a.flags.writeable = False
            items.append((str(name), a))
        self._tensors: tuple[tuple[str, np.ndarray], ...] = tuple(items)

    @classmethod
    def _wrap(cls, items: list[tuple[str, np.ndarray]]) -> "WeightsBundle":
        # Internal fast path: takes ownership of freshly created float32 arrays.
        self = cls.__new__(cls)
        for _, a in items:
            a.flags.writeable = False
        self._tensors = tuple(items)
        return self

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self._tensors)

    def tensor(self, name: str) -> np.ndarray:
        for n, a in self._tensors:
            if n == name:
                return a
        raise KeyError(name)

    def same_structure(self, other: "WeightsBundle") -> bool:
        return (
            len(self) == len(other)
            and all(
                n1 == n2 and a1.shape == a2.shape
                for (n1, a1), (n2, a2) in zip(self, other)
            )
        )

    def matches_spec(self, spec: ModelSpec) -> bool:
        return tuple((n, a.shape) for n, a in self) == spec.param_shapes

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self._tensors])

    @classmethod
    def from_vector(cls, spec: ModelSpec, vec: np.ndarray) -> "WeightsBundle":
        vec = np.asarray(vec, dtype=np.float32)
        if vec.shape != (spec.param_count,):
            raise DimensionError(
                f"vector length {vec.shape} != param count {spec.param_count}"
            )
        items, off = [], 0
        for name, shape in spec.param_shapes:
            n = int(np.prod(shape))
            items.append((name, vec[off : off + n].reshape(shape).copy()))
            off += n
        return cls._wrap(items)

    def bit_equal(self, other: "WeightsBundle") -> bool:
        return self.same_structure(other) and all(
            a1.tobytes() == a2.tobytes() for (_, a1), (_, a2) in zip(self, other)
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self._tensors)


def init_weights(spec: ModelSpec, seed: int) -> WeightsBundle:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if spec.architecture_id != LENET_V1:
        raise ConfigError(f"unknown architecture_id: {spec.architecture_id!r}")
    rng = rng_from(seed)
    items = []
    for name, shape in spec.param_shapes:
        if name.endswith(".b"):
            items.append((name, np.zeros(shape, dtype=np.float32)))
            continue
        if len(shape) == 4:  # conv kernel [kh, kw, cin, cout]
            kh, kw, cin, cout = shape
            fan_in, fan_out = kh * kw * cin, kh * kw * cout
        else:  # dense [in, out]
            fan_in, fan_out = shape
        bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
        w = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        items.append((name, w))
    return WeightsBundle._wrap(items)


# ---------------------------------------------------------------------------
# layer primitives


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """[B,H,W,C] -> [B,OH,OW,kh*kw*C] patches for a valid convolution."""
    b, h, w, c = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (b, oh, ow, kh, kw, c), (s0, s1, s2, s1, s2, s3)
    )
    return view.reshape(b, oh, ow, kh * kw * c)


def _conv_forward(x, w, bias):
    kh, kw, cin, cout = w.shape
    cols = _im2col(x, kh, kw)
    out = cols @ w.reshape(kh * kw * cin, cout)
    out += bias
    return out, cols


def _conv_backward(dout, cols, w, x_shape):
    kh, kw, cin, cout = w.shape
    b, h, wd, _ = x_shape
    oh, ow = h - kh + 1, wd - kw + 1
    k = kh * kw * cin
    dw = (cols.reshape(-1, k).T @ dout.reshape(-1, cout)).reshape(w.shape)
    db = dout.sum(axis=(0, 1, 2))
    dcols = (dout @ w.reshape(k, cout).T).reshape(b, oh, ow, kh, kw, cin)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + oh, j : j + ow, :] += dcols[:, :, :, i, j, :]
    return dx, dw, db


def _maxpool_forward(x):
    """2x2/2 max pooling; ties go to the first element in scan order."""
    b, h, w, c = x.shape
    windows = (
        x.reshape(b, h // 2, 2, w // 2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, h // 2, w // 2, c, 4)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool_backward(dout, idx, x_shape):
    b, h, w, c = x_shape
    dwin = np.zeros((b, h // 2, w // 2, c, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return (
        dwin.reshape(b, h // 2, w // 2, c, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, h, w, c)
    )


def _log_softmax(z):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# model passes


def _check_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != INPUT_SHAPE or batch.shape[0] < 1:
        raise DimensionError(
            f"expected batch of shape [B,28,28,1], got {batch.shape}"
        )
    return batch


def _forward_cached(weights: WeightsBundle, batch: np.ndarray, dtype):
    x = _check_batch(batch).astype(dtype, copy=False)
    p = {name: arr.astype(dtype, copy=False) for name, arr in weights}

    z1, cols1 = _conv_forward(x, p["conv1.w"], p["conv1.b"])
    a1 = np.maximum(z1, 0)
    p1, idx1 = _maxpool_forward(a1)
    z2, cols2 = _conv_forward(p1, p["conv2.w"], p["conv2.b"])
    a2 = np.maximum(z2, 0)
    p2, idx2 = _maxpool_forward(a2)
    flat = p2.reshape(x.shape[0], -1)
    logits = flat @ p["dense1.w"] + p["dense1.b"]
    cache = (p, x, z1, cols1, idx1, p1, z2, cols2, idx2, p2, flat)
    return logits, cache


def forward(weights: WeightsBundle, batch: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Logits [B,10] for an image batch [B,28,28,1]."""
    logits, _ = _forward_cached(weights, batch, dtype)
    return logits


def _check_one_hot(y: np.ndarray, batch_size: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (batch_size, NUM_CLASSES):
        raise DataError(f"expected one-hot labels [B,{NUM_CLASSES}], got {y.shape}")
    ok = np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)
    if not ok:
        raise DataError("labels are not valid one-hot rows")
    return y


def loss_and_grad(
    weights: WeightsBundle,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    dtype=np.float32,
) -> tuple[float, WeightsBundle]:
    """Mean softmax cross-entropy over the batch and its full gradient."""
    logits, cache = _forward_cached(weights, batch_x, dtype)
    p, x, z1, cols1, idx1, p1, z2, cols2, idx2, p2, flat = cache
    bsz = x.shape[0]
    y = _check_one_hot(batch_y, bsz).astype(dtype, copy=False)

    logp = _log_softmax(logits)
    loss = float(-(y * logp).sum(dtype=np.float64) / bsz)

    dlogits = (np.exp(logp) - y) / bsz
    dw3 = flat.T @ dlogits
    db3 = dlogits.sum(axis=0)
    dflat = dlogits @ p["dense1.w"].T
    dp2 = dflat.reshape(p2.shape)
    da2 = _maxpool_backward(dp2, idx2, z2.shape)
    dz2 = da2 * (z2 > 0)
    dp1, dw2, db2 = _conv_backward(dz2, cols2, p["conv2.w"], p1.shape)
    da1 = _maxpool_backward(dp1, idx1, z1.shape)
    dz1 = da1 * (z1 > 0)
    _, dw1, db1 = _conv_backward(dz1, cols1, p["conv1.w"], x.shape)

    grads = WeightsBundle._wrap(
        [
            ("conv1.w", dw1.astype(np.float32)),
            ("conv1.b", db1.astype(np.float32)),
            ("conv2.w", dw2.astype(np.float32)),
            ("conv2.b", db2.astype(np.float32)),
            ("dense1.w", dw3.astype(np.float32)),
            ("dense1.b", db3.astype(np.float32)),
        ]
    )
    return loss, grads


def sgd_step(weights: WeightsBundle, grads: WeightsBundle, eta: float) -> WeightsBundle:
    """One plain gradient step w' = w - eta*g; inputs are left untouched."""
    if not weights.same_structure(grads):
        raise DimensionError("weights/grads structure mismatch")
    eta32 = np.float32(eta)
    return WeightsBundle._wrap(
        [(name, w - eta32 * g) for (name, w), (_, g) in zip(weights, grads)]
    )


def one_hot(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels)
    return np.eye(num_classes, dtype=np.float32)[labels]


def evaluate(
    weights: WeightsBundle, dataset, batch_size: int = 512
) -> tuple[float, float]:
    """(accuracy, mean loss) over a dataset with .images and .labels."""
    images, labels = dataset.images, dataset.labels
    n = images.shape[0]
    if n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        xb = images[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits = forward(weights, xb)
        # argmax breaks ties toward the lowest class index
        correct += int((logits.argmax(axis=1) == yb).sum())
        logp = _log_softmax(logits)
        loss_sum += float(-logp[np.arange(len(yb)), yb].sum(dtype=np.float64))
    return correct / n, loss_sum / n

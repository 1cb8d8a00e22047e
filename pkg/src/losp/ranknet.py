"""Truncation-rank regressor for noisy hybrid lines.

A small 1D residual CNN maps a peak-normalized J-shot line (2J real channels:
Re/Im per shot) to a scalar rank estimate. Implemented directly in numpy with
hand-written backprop and Adam so that seeded training is bit-reproducible
and the analytic gradients can be checked against finite differences.
"""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, LospError, NumericalError
from .hankel import HankelSpec
from .labels import HybridLine, LabeledDataset

WEIGHTS_MAGIC = b"LOSPNN01"
WEIGHTS_VERSION = 1


# ---------------------------------------------------------------------------
# input packing


def featurize(line: HybridLine, n_shots: int) -> np.ndarray:
    """Pack a line into a (2J, L) real tensor: (Re, Im) per shot, shot-major."""
    if line.n_shots != n_shots:
        raise LospError(f"line has {line.n_shots} shots, expected {n_shots}")
    return featurize_signals(line.signals)


def featurize_signals(signals: np.ndarray) -> np.ndarray:
    signals = np.asarray(signals)
    out = np.empty((2 * signals.shape[0], signals.shape[1]), dtype=np.float64)
    out[0::2] = signals.real
    out[1::2] = signals.imag
    return out


def defeaturize(tensor: np.ndarray) -> np.ndarray:
    """Inverse of :func:`featurize_signals` (lossless packing)."""
    return tensor[0::2] + 1j * tensor[1::2]


# ---------------------------------------------------------------------------
# architecture


def default_arch(n_shots: int, length: int, channels: int = 16, blocks: int = 4,
                 kernel: int = 3, hidden: tuple[int, int] = (32, 16),
                 strict_length: bool = True) -> dict:
    if kernel % 2 != 1:
        raise LospError("kernel size must be odd")
    return {
        "version": WEIGHTS_VERSION,
        "n_shots": int(n_shots),
        "length": int(length),
        "channels": int(channels),
        "blocks": int(blocks),
        "kernel": int(kernel),
        "hidden": [int(hidden[0]), int(hidden[1])],
        "strict_length": bool(strict_length),
    }


def param_shapes(arch: dict) -> list[tuple[str, tuple]]:
    """Parameter names and shapes in declaration (file) order."""
    c, k = arch["channels"], arch["kernel"]
    cin = 2 * arch["n_shots"]
    h1, h2 = arch["hidden"]
    shapes = [("stem.w", (c, cin, k)), ("stem.b", (c,))]
    for i in range(arch["blocks"]):
        shapes += [(f"block{i}.w1", (c, c, k)), (f"block{i}.b1", (c,)),
                   (f"block{i}.w2", (c, c, k)), (f"block{i}.b2", (c,))]
    shapes += [("fc1.w", (h1, c)), ("fc1.b", (h1,)),
               ("fc2.w", (h2, h1)), ("fc2.b", (h2,)),
               ("fc3.w", (1, h2)), ("fc3.b", (1,))]
    return shapes


def init_params(arch: dict, seed: int) -> list[np.ndarray]:
    """He-normal weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = []
    for name, shape in param_shapes(arch):
        if name.endswith(".b") or name.endswith(".b1") or name.endswith(".b2"):
            params.append(np.zeros(shape, dtype=np.float64))
        else:
            fan_in = int(np.prod(shape[1:]))
            params.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape))
    return params


@dataclass
class RankNetWeights:
    """Trained weights: architecture descriptor plus float32 parameters."""

    arch: dict
    params: list  # float32 arrays in declaration order
    version: int = WEIGHTS_VERSION


# ---------------------------------------------------------------------------
# forward / backward


def _conv1d(x, w, b):
    """Same-padded 1D convolution via im2col; returns output and the cache."""
    batch, cin, length = x.shape
    k = w.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    cols = cols.transpose(0, 2, 1, 3).reshape(batch, length, cin * k)
    y = cols @ w.reshape(w.shape[0], -1).T + b
    return y.transpose(0, 2, 1), cols


def _conv1d_backward(dy, cols, w, x_shape):
    batch, cin, length = x_shape
    k = w.shape[2]
    pad = k // 2
    dyl = dy.transpose(0, 2, 1)  # (B, L, Cout)
    flat_dy = dyl.reshape(-1, w.shape[0])
    dw = (flat_dy.T @ cols.reshape(-1, cin * k)).reshape(w.shape)
    db = flat_dy.sum(axis=0)
    dcols = (dyl @ w.reshape(w.shape[0], -1)).reshape(batch, length, cin, k)
    dcols = dcols.transpose(0, 2, 1, 3)  # (B, Cin, L, K)
    dxp = np.zeros((batch, cin, length + 2 * pad))
    for t in range(k):
        dxp[:, :, t:t + length] += dcols[:, :, :, t]
    return dxp[:, :, pad:pad + length], dw, db


def forward(params: list, arch: dict, x: np.ndarray, want_cache: bool = False):
    """Batched forward pass; ``x`` is (B, 2J, L). Returns (B,) predictions."""
    it = iter(params)
    cache = {"acts": []}
    w, b = next(it), next(it)
    y, cols = _conv1d(x, w, b)
    cache["stem"] = (x.shape, cols, y)
    h = np.maximum(y, 0.0)
    for i in range(arch["blocks"]):
        w1, b1, w2, b2 = next(it), next(it), next(it), next(it)
        y1, cols1 = _conv1d(h, w1, b1)
        a1 = np.maximum(y1, 0.0)
        y2, cols2 = _conv1d(a1, w2, b2)
        s = h + y2
        cache["acts"].append((h.shape, cols1, y1, a1.shape, cols2, s))
        h = np.maximum(s, 0.0)
    g = h.mean(axis=2)  # global average pool -> (B, C)
    feats = [g]
    zs = []
    for _ in range(3):
        wf, bf = next(it), next(it)
        z = feats[-1] @ wf.T + bf
        zs.append(z)
        feats.append(np.maximum(z, 0.0))
    pred = zs[-1][:, 0]
    if want_cache:
        cache["pool_in_len"] = h.shape[2]
        cache["h_final"] = h
        cache["fc"] = (feats, zs)
        return pred, cache
    return pred


def loss_and_grads(params: list, arch: dict, x: np.ndarray, y: np.ndarray):
    """Mean-squared-error loss between predictions and rank labels, with
    analytic gradients for every parameter (declaration order)."""
    pred, cache = forward(params, arch, x, want_cache=True)
    resid = pred - y
    loss = float(np.mean(resid ** 2))
    dpred = 2.0 * resid / y.size

    grads = [None] * len(params)
    idx = len(params)
    feats, zs = cache["fc"]
    dz = dpred[:, None]
    for layer in (2, 1, 0):
        wf = params[len(params) - 6 + 2 * layer]
        if layer < 2:
            dz = dz * (zs[layer] > 0)
        grads[idx - 1] = dz.sum(axis=0)
        grads[idx - 2] = dz.T @ feats[layer]
        idx -= 2
        dz = dz @ wf
    # dz is now the gradient at the pooled features (B, C)
    h = cache["h_final"]
    dh = np.repeat(dz[:, :, None], cache["pool_in_len"], axis=2) / cache["pool_in_len"]
    for i in reversed(range(arch["blocks"])):
        h_shape, cols1, y1, a1_shape, cols2, s = cache["acts"][i]
        ds = dh * (s > 0)
        w1 = params[2 + 4 * i]
        w2 = params[4 + 4 * i]
        da1, dw2, db2 = _conv1d_backward(ds, cols2, w2, a1_shape)
        dy1 = da1 * (y1 > 0)
        dh_in, dw1, db1 = _conv1d_backward(dy1, cols1, w1, h_shape)
        grads[2 + 4 * i], grads[3 + 4 * i] = dw1, db1
        grads[4 + 4 * i], grads[5 + 4 * i] = dw2, db2
        dh = ds + dh_in
    x_shape, cols, y0 = cache["stem"]
    dy0 = dh * (y0 > 0)
    _, dw0, db0 = _conv1d_backward(dy0, cols, params[0], x_shape)
    grads[0], grads[1] = dw0, db0
    return loss, grads


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 40
    lr: float = 1e-3
    decay_factor: float = 0.9
    decay_every: int = 50
    batch_size: int = 64
    split: float = 0.9
    seed: int = 0
    channels: int = 16
    blocks: int = 4
    kernel: int = 3
    hidden: tuple[int, int] = (32, 16)

    def __post_init__(self):
        if self.epochs < 1:
            raise LospError("epochs must be >= 1")
        if self.lr <= 0:
            raise LospError("learning rate must be positive")
        if not 0.0 < self.split < 1.0:
            raise LospError("split fraction must be in (0, 1)")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)


def dataset_tensors(dataset: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack a labeled dataset into (X, y) training tensors."""
    x = np.stack([featurize_signals(s.noisy.signals) for s in dataset.samples])
    y = np.array([s.label for s in dataset.samples], dtype=np.float64)
    return x, y


def train(dataset: LabeledDataset, config: TrainConfig) -> tuple[RankNetWeights, TrainHistory]:
    """Adam training of the rank regressor on labeled lines.

    Deterministic in ``config.seed`` (fixed init, fixed split, fixed per-epoch
    shuffles). Returns float32 weights and the per-epoch loss history.
    """
    if not dataset.samples:
        raise LospError("cannot train on an empty dataset")
    spec = dataset.spec
    arch = default_arch(spec.n_shots, spec.length, config.channels,
                        config.blocks, config.kernel, config.hidden)
    x, y = dataset_tensors(dataset)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(y))
    n_train = max(1, int(round(config.split * len(y))))
    if n_train == len(y) and len(y) > 1:
        n_train = len(y) - 1
    tr, va = order[:n_train], order[n_train:]
    x_tr, y_tr, x_va, y_va = x[tr], y[tr], x[va], y[va]

    params = init_params(arch, config.seed)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = TrainHistory()

    for epoch in range(config.epochs):
        lr = config.lr * config.decay_factor ** (epoch // config.decay_every)
        perm = rng.permutation(n_train)
        batch_losses = []
        for lo in range(0, n_train, config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            loss, grads = loss_and_grads(params, arch, x_tr[sel], y_tr[sel])
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, batch {lo // config.batch_size}")
            batch_losses.append(loss)
            step += 1
            for i, g in enumerate(grads):
                m[i] = beta1 * m[i] + (1 - beta1) * g
                v[i] = beta2 * v[i] + (1 - beta2) * g * g
                mhat = m[i] / (1 - beta1 ** step)
                vhat = v[i] / (1 - beta2 ** step)
                params[i] = params[i] - lr * mhat / (np.sqrt(vhat) + eps)
        if len(va):
            val_pred = forward(params, arch, x_va)
            val_loss = float(np.mean((val_pred - y_va) ** 2))
        else:
            val_loss = math.nan
        history.epochs.append(epoch)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(val_loss)

    weights = RankNetWeights(arch, [p.astype(np.float32) for p in params])
    return weights, history


# ---------------------------------------------------------------------------
# prediction


def _params64(weights: RankNetWeights) -> list[np.ndarray]:
    return [np.asarray(p, dtype=np.float64) for p in weights.params]


def predict_raw(weights: RankNetWeights, x: np.ndarray) -> np.ndarray:
    """Raw (unrounded) predictions for a featurized batch (B, 2J, L)."""
    arch = weights.arch
    if x.shape[1] != 2 * arch["n_shots"]:
        raise LospError(f"expected {2 * arch['n_shots']} channels, got {x.shape[1]}")
    if arch.get("strict_length", True) and x.shape[2] != arch["length"]:
        raise LospError(f"network was trained on length {arch['length']}, "
                        f"got {x.shape[2]}")
    return forward(_params64(weights), arch, np.asarray(x, dtype=np.float64))


def clamp_rank(value: float, r_max: int) -> int:
    """Round to nearest integer (half away from zero) and clamp to [1, r_max]."""
    return int(min(max(math.floor(value + 0.5), 1), r_max))


def predict_rank(weights: RankNetWeights, line: HybridLine, spec: HankelSpec) -> int:
    """Predict the truncation rank for one peak-normalized line."""
    if spec.n_shots != weights.arch["n_shots"]:
        raise LospError("HankelSpec shot count does not match the network")
    x = featurize(line, weights.arch["n_shots"])[None]
    return clamp_rank(float(predict_raw(weights, x)[0]), spec.r_max)


def predict_ranks(weights: RankNetWeights, lines: np.ndarray, spec: HankelSpec) -> np.ndarray:
    """Vectorized :func:`predict_rank` over a normalized line stack (n, J, L)."""
    if spec.n_shots != weights.arch["n_shots"]:
        raise LospError("HankelSpec shot count does not match the network")
    x = np.empty((lines.shape[0], 2 * lines.shape[1], lines.shape[2]))
    x[:, 0::2] = lines.real
    x[:, 1::2] = lines.imag
    raw = predict_raw(weights, x)
    return np.array([clamp_rank(float(r), spec.r_max) for r in raw], dtype=np.int64)


# ---------------------------------------------------------------------------
# weight file format


def save_weights(weights: RankNetWeights, path) -> None:
    arch_json = json.dumps(weights.arch, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", weights.version, len(arch_json)))
        fh.write(arch_json)
        for p in weights.params:
            fh.write(np.asarray(p, dtype="<f4").tobytes())


def load_weights(path) -> RankNetWeights:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != WEIGHTS_MAGIC:
        raise FormatError("not a rank-network weight file")
    if len(raw) < 16:
        raise FormatError("truncated weight file header")
    version, arch_len = struct.unpack_from("<II", raw, 8)
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    if len(raw) < 16 + arch_len:
        raise FormatError("truncated architecture descriptor")
    arch = json.loads(raw[16:16 + arch_len].decode())
    shapes = param_shapes(arch)
    expected = 16 + arch_len + sum(int(np.prod(s)) * 4 for _, s in shapes)
    if len(raw) != expected:
        raise FormatError("weight payload size mismatch")
    params = []
    off = 16 + arch_len
    for _, shape in shapes:
        n = int(np.prod(shape))
        params.append(np.frombuffer(raw, dtype="<f4", count=n,
                                    offset=off).reshape(shape).copy())
        off += 4 * n
    return RankNetWeights(arch, params, version)

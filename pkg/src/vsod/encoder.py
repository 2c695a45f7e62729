"""Saliency-guided stacked sparse autoencoders.

Each pixel is described by the three cue values at itself, its eight spatial
neighbors and its flow-linked neighbor in the following frame(s).  Layers are
trained greedily (30 -> 15 -> 7 -> 3 -> 1 by default), each minimizing

    mean ||t - dec(enc(x))||^2 + lambda_w * W2 + lambda_s * sum_j KL(rho || rho_hat_j)

on inputs rescaled per dimension to [-1, 1]; reconstruction targets are the
same inputs mapped to [0, 1] to match the sigmoid decoder.  The single output
of the last layer is signed by the average correlation between it and the
input dimensions, so larger outputs mean "more salient".
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ._util import rescale, sigmoid
from .features import FlowField

log = logging.getLogger(__name__)

CUE_NAMES = ("pixel", "superpixel", "object")
# (dy, dx): center, N, NE, E, SE, S, SW, W, NW
NEIGHBORS = ((0, 0), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
LAYER_SIZES = (15, 7, 3, 1)
MODEL_FORMAT = "vsod-stacked-encoder/1"


class NumericalError(RuntimeError):
    """Training diverged (non-finite loss or weights)."""


@dataclass
class CueMaps:
    pixel: np.ndarray
    superpixel: np.ndarray
    object: np.ndarray

    def get(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixel.shape


def feature_dim(window: int = 1) -> int:
    return len(CUE_NAMES) * (len(NEIGHBORS) + window)


def temporal_sources(flows: list[FlowField], t: int, ys: np.ndarray, xs: np.ndarray, window: int):
    """Frame index and pixel positions of the ``window`` flow-linked successors.

    Positions are chained through consecutive flows and clamped to the frame.
    Past the last frame the last frame is reused at the last position.
    """
    n_frames = len(flows)
    h, w = flows[t].u.shape
    py, px = ys, xs
    out = []
    for k in range(1, window + 1):
        prev = min(t + k - 1, n_frames - 1)
        src = min(t + k, n_frames - 1)
        if src != prev:
            f = flows[prev]
            nx = np.rint(px + f.u[py, px]).astype(np.int64)
            ny = np.rint(py + f.v[py, px]).astype(np.int64)
            px = np.clip(nx, 0, w - 1)
            py = np.clip(ny, 0, h - 1)
        out.append((src, py, px))
    return out


def assemble_features(
    cues: list[CueMaps],
    flows: list[FlowField],
    t: int,
    pixels: tuple[np.ndarray, np.ndarray] | None = None,
    window: int = 1,
    enabled=CUE_NAMES,
) -> np.ndarray:
    """Cue feature vectors of frame ``t``, one row per pixel.

    Column order is cue-major (pixel, superpixel, object); within a cue:
    center, N, NE, E, SE, S, SW, W, NW, then temporal neighbors.  Disabled
    cues contribute zero blocks.  ``pixels`` selects (rows, cols); default is
    every pixel in raster order.
    """
    h, w = cues[t].shape
    if pixels is None:
        yy, xx = np.mgrid[0:h, 0:w]
        ys, xs = yy.ravel(), xx.ravel()
    else:
        ys, xs = (np.asarray(p, dtype=np.int64) for p in pixels)
    per_cue = len(NEIGHBORS) + window
    out = np.zeros((len(ys), len(CUE_NAMES) * per_cue))
    temporal = temporal_sources(flows, t, ys, xs, window)
    for c, name in enumerate(CUE_NAMES):
        if name not in enabled:
            continue
        m = cues[t].get(name)
        base = c * per_cue
        for k, (dy, dx) in enumerate(NEIGHBORS):
            out[:, base + k] = m[np.clip(ys + dy, 0, h - 1), np.clip(xs + dx, 0, w - 1)]
        for k, (src, py, px) in enumerate(temporal):
            out[:, base + len(NEIGHBORS) + k] = cues[src].get(name)[py, px]
    return out


def sample_indices(frame_sizes: list[int], n: int, seed: int) -> np.ndarray:
    """Uniform draw with replacement over the concatenated pixels of all frames."""
    total = int(np.sum(frame_sizes))
    if total == 0:
        raise ValueError("dataset is empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.random.default_rng(seed).integers(0, total, size=n)


def sample_training_set(videos, n: int, seed: int, window: int = 1, enabled=CUE_NAMES) -> np.ndarray:
    """Draw ``n`` cue vectors uniformly over (video, frame, pixel).

    ``videos`` is a list of ``(cue_maps_per_frame, flows_per_frame)`` pairs.
    """
    frames = [(v, t) for v, (cues, _) in enumerate(videos) for t in range(len(cues))]
    if not frames:
        raise ValueError("dataset is empty")
    sizes = [videos[v][0][t].pixel.size for v, t in frames]
    idx = sample_indices(sizes, n, seed)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    frame_of = np.searchsorted(offsets, idx, side="right") - 1
    out = np.empty((n, feature_dim(window)))
    for f in np.unique(frame_of):
        sel = np.flatnonzero(frame_of == f)
        v, t = frames[f]
        cues, flows = videos[v]
        local = idx[sel] - offsets[f]
        w = cues[t].shape[1]
        out[sel] = assemble_features(cues, flows, t, (local // w, local % w), window, enabled)
    return out


@dataclass
class NormalizerStats:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "NormalizerStats":
        return cls(X.min(axis=0), X.max(axis=0))

    def apply(self, X: np.ndarray, clamp: bool = True) -> np.ndarray:
        """Map [lo, hi] to [-1, 1] per dimension; constant dimensions map to 0."""
        span = self.hi - self.lo
        flat = span <= 0
        safe = np.where(flat, 1.0, span)
        Y = 2.0 * (X - self.lo) / safe - 1.0
        if clamp:
            Y = np.clip(Y, -1.0, 1.0)
        Y[:, flat] = 0.0
        return Y


@dataclass
class TrainParams:
    n_samples: int = 500_000
    seed: int = 0
    epochs: int = 100
    lr: float = 0.1
    lr_decay: float = 0.5
    decay_every: int = 25
    momentum: float = 0.9
    batch: int = 256
    lambda_w: float = 0.001
    lambda_s: float = 1.0
    rho: float = 0.05
    layers: tuple[int, ...] = LAYER_SIZES


@dataclass
class AutoencoderLayer:
    W_enc: np.ndarray  # (out, in)
    b_enc: np.ndarray
    W_dec: np.ndarray  # (in, out)
    b_dec: np.ndarray
    losses: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.W_enc.shape[1], self.W_enc.shape[0]

    def encode(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.W_enc.T + self.b_enc)

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.encode(X) @ self.W_dec.T + self.b_dec)

    @classmethod
    def initialize(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "AutoencoderLayer":
        r = math.sqrt(6.0 / (n_in + n_out))
        return cls(
            rng.uniform(-r, r, size=(n_out, n_in)),
            np.zeros(n_out),
            rng.uniform(-r, r, size=(n_in, n_out)),
            np.zeros(n_in),
        )


@njit(cache=True)
def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@njit(cache=True)
def _loss_grad(X, T, We, be, Wd, bd, lam_w, lam_s, rho, gWe, gbe, gWd, gbd):
    """Objective on (X, T) and its gradient, written into the g* arrays."""
    m = X.shape[0]
    H = _sig(X @ We.T + be)
    O = _sig(H @ Wd.T + bd)
    diff = O - T
    recon = np.sum(diff * diff) / m
    rho_hat = np.empty(H.shape[1])
    for j in range(H.shape[1]):
        r = np.mean(H[:, j])
        rho_hat[j] = min(max(r, 1e-12), 1.0 - 1e-12)
    kl = np.sum(rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat)))
    wreg = 0.5 * (np.sum(We * We) + np.sum(Wd * Wd))
    loss = recon + lam_w * wreg + lam_s * kl

    dZ2 = (2.0 / m) * diff * O * (1.0 - O)
    gWd[:, :] = dZ2.T @ H + lam_w * Wd
    for i in range(bd.shape[0]):
        gbd[i] = np.sum(dZ2[:, i])
    dkl = lam_s * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat)) / m
    dZ1 = (dZ2 @ Wd + dkl) * H * (1.0 - H)
    gWe[:, :] = dZ1.T @ X + lam_w * We
    for j in range(be.shape[0]):
        gbe[j] = np.sum(dZ1[:, j])
    return loss


@njit(cache=True)
def _run_epoch(X, T, We, be, Wd, bd, vWe, vbe, vWd, vbd, perm, batch, lr, mom, lam_w, lam_s, rho):
    gWe = np.empty_like(We)
    gbe = np.empty_like(be)
    gWd = np.empty_like(Wd)
    gbd = np.empty_like(bd)
    n = perm.shape[0]
    total = 0.0
    nb = 0
    for start in range(0, n, batch):
        idx = perm[start:min(start + batch, n)]
        Xb = X[idx]
        Tb = T[idx]
        total += _loss_grad(Xb, Tb, We, be, Wd, bd, lam_w, lam_s, rho, gWe, gbe, gWd, gbd)
        nb += 1
        vWe *= mom
        vWe -= lr * gWe
        vbe *= mom
        vbe -= lr * gbe
        vWd *= mom
        vWd -= lr * gWd
        vbd *= mom
        vbd -= lr * gbd
        We += vWe
        be += vbe
        Wd += vWd
        bd += vbd
    return total / nb


def layer_objective(layer: AutoencoderLayer, X: np.ndarray, hp: TrainParams = TrainParams(), targets=None):
    """Full objective and gradients ``(loss, gWe, gbe, gWd, gbd)`` on normalized inputs ``X``."""
    T = (X + 1.0) / 2.0 if targets is None else targets
    g = [np.empty_like(a) for a in (layer.W_enc, layer.b_enc, layer.W_dec, layer.b_dec)]
    loss = _loss_grad(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(T, dtype=np.float64),
        layer.W_enc, layer.b_enc, layer.W_dec, layer.b_dec,
        hp.lambda_w, hp.lambda_s, hp.rho, *g,
    )
    return (float(loss), *g)


def train_layer(X: np.ndarray, n_out: int, hp: TrainParams = TrainParams(), seed: int = 0) -> AutoencoderLayer:
    """Train one sparse autoencoder layer on inputs already normalized to [-1, 1]."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = (X + 1.0) / 2.0
    rng = np.random.default_rng(seed)
    layer = AutoencoderLayer.initialize(X.shape[1], n_out, rng)
    vel = [np.zeros_like(a) for a in (layer.W_enc, layer.b_enc, layer.W_dec, layer.b_dec)]
    for epoch in range(hp.epochs):
        lr = hp.lr * hp.lr_decay ** (epoch // hp.decay_every)
        perm = rng.permutation(X.shape[0])
        loss = _run_epoch(
            X, T, layer.W_enc, layer.b_enc, layer.W_dec, layer.b_dec, *vel,
            perm, hp.batch, lr, hp.momentum, hp.lambda_w, hp.lambda_s, hp.rho,
        )
        if not math.isfinite(loss) or not np.all(np.isfinite(layer.W_enc)):
            raise NumericalError(
                f"layer {X.shape[1]}->{n_out}: non-finite loss at epoch {epoch + 1} "
                f"(lr={lr}, last finite loss={layer.losses[-1] if layer.losses else None})"
            )
        layer.losses.append(float(loss))
    return layer


def pearson_columns(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson correlation of each column of X with y; zero-variance pairs give 0."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((Xc * Xc).sum(axis=0))
    sy = math.sqrt(float((yc * yc).sum()))
    out = np.zeros(X.shape[1])
    ok = (sx > 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0)))) & (sy > 1e-12)
    if np.any(ok):
        out[ok] = (Xc[:, ok] * yc[:, None]).sum(axis=0) / (sx[ok] * sy)
    return out


@dataclass
class StackedEncoder:
    layers: list[AutoencoderLayer]
    normalizers: list[NormalizerStats]
    corr_value: float
    corr_sign: int
    hyperparams: dict
    seed: int
    window: int = 1
    cues_enabled: tuple[str, ...] = CUE_NAMES

    @property
    def input_dim(self) -> int:
        return self.layers[0].W_enc.shape[1]

    @property
    def schedule(self) -> tuple[int, ...]:
        return tuple(layer.W_enc.shape[0] for layer in self.layers)

    def encode(self, X: np.ndarray) -> np.ndarray:
        """Unsigned output of the last layer for rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(f"model expects {self.input_dim}-dim vectors, got {X.shape[1]}")
        for norm, layer in zip(self.normalizers, self.layers):
            X = layer.encode(norm.apply(X, clamp=True))
        return X[:, 0]

    def score(self, X: np.ndarray) -> np.ndarray:
        return self.corr_sign * self.encode(X)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "input_dim": self.input_dim,
            "schedule": list(self.schedule),
            "window": self.window,
            "cues_enabled": list(self.cues_enabled),
            "target_mapping": "t = (x + 1) / 2",
            "layers": [
                {
                    "W_enc": layer.W_enc.tolist(),
                    "b_enc": layer.b_enc.tolist(),
                    "W_dec": layer.W_dec.tolist(),
                    "b_dec": layer.b_dec.tolist(),
                    "losses": layer.losses,
                }
                for layer in self.layers
            ],
            "normalizers": [{"min": n.lo.tolist(), "max": n.hi.tolist()} for n in self.normalizers],
            "corr_value": self.corr_value,
            "corr_sign": self.corr_sign,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StackedEncoder":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unknown model format {d.get('format')!r}")
        layers = [
            AutoencoderLayer(
                np.asarray(L["W_enc"], dtype=np.float64).reshape(len(L["b_enc"]), -1),
                np.asarray(L["b_enc"], dtype=np.float64),
                np.asarray(L["W_dec"], dtype=np.float64).reshape(len(L["b_dec"]), -1),
                np.asarray(L["b_dec"], dtype=np.float64),
                list(L.get("losses", [])),
            )
            for L in d["layers"]
        ]
        norms = [NormalizerStats(np.asarray(n["min"], float), np.asarray(n["max"], float)) for n in d["normalizers"]]
        return cls(
            layers, norms, float(d["corr_value"]), int(d["corr_sign"]), dict(d["hyperparams"]), int(d["seed"]),
            int(d.get("window", 1)), tuple(d.get("cues_enabled", CUE_NAMES)),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: Path | str) -> "StackedEncoder":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_stack(samples: np.ndarray, hp: TrainParams = TrainParams(), window: int = 1, enabled=CUE_NAMES):
    """Greedy layerwise training followed by the correlation-sign estimate."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 1000:
        raise ValueError("at least 1000 training vectors are required")
    seeds = np.random.SeedSequence(hp.seed).spawn(len(hp.layers))
    X = samples
    layers, norms = [], []
    for i, n_out in enumerate(hp.layers):
        stats = NormalizerStats.fit(X)
        Xn = stats.apply(X, clamp=False)
        layer_seed = int(seeds[i].generate_state(1)[0])
        log.info("training layer %d: %d -> %d on %d vectors", i + 1, X.shape[1], n_out, X.shape[0])
        layer = train_layer(Xn, n_out, hp, seed=layer_seed)
        layers.append(layer)
        norms.append(stats)
        X = layer.encode(Xn)
    out = X[:, 0]
    c = float(np.mean(pearson_columns(samples, out)))
    return StackedEncoder(
        layers, norms, c, 1 if c >= 0 else -1,
        {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(hp).items()},
        hp.seed, window, tuple(enabled),
    )


def infer_saliency(model: StackedEncoder, v: np.ndarray) -> np.ndarray | float:
    """Signed saliency score of one vector (scalar) or many (1-D array)."""
    v = np.asarray(v, dtype=np.float64)
    s = model.score(v)
    return float(s[0]) if v.ndim == 1 else s


def infer_frame(model: StackedEncoder, cues: list[CueMaps], flows: list[FlowField], t: int) -> np.ndarray:
    """Per-frame saliency map from the model, rescaled to [0, 1]."""
    X = assemble_features(cues, flows, t, None, model.window, model.cues_enabled)
    return rescale(model.score(X).reshape(cues[t].shape))

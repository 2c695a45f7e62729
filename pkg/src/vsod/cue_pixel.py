"""Pixel-level cue: raster-scan minimum barrier distance to the image border.

The barrier of a path is ``max - min`` of the channel values along it; the
distance of a pixel is the smallest barrier over 4-connected paths to a seed.
Forward/backward raster sweeps propagate the running path max and min from the
upper-left and lower-right neighbors respectively, which gives an upper bound
on the exact distance that is tight on almost all pixels after a few sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage
from skimage.morphology import reconstruction

from ._util import rescale
from .features import ChannelStack

MBD_CHANNELS = ("L", "a", "b", "S", "X", "Y", "T")


@dataclass(frozen=True)
class MbdParams:
    passes: int = 3
    channels: tuple[str, ...] = MBD_CHANNELS
    gamma: float = 0.02
    border_band_frac: float = 0.02
    var_floor: float = 1e-4

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if not self.channels:
            raise ValueError("at least one channel is required")


@njit(cache=True)
def _relax(img, dist, hi, lo, i, j, ni, nj):
    x = img[i, j]
    u = max(hi[ni, nj], x)
    l = min(lo[ni, nj], x)
    b = u - l
    if b < dist[i, j]:
        dist[i, j] = b
        hi[i, j] = u
        lo[i, j] = l


@njit(cache=True)
def _mbd_sweeps(img, seeds, passes):
    h, w = img.shape
    dist = np.empty((h, w))
    hi = img.copy()
    lo = img.copy()
    for i in range(h):
        for j in range(w):
            dist[i, j] = 0.0 if seeds[i, j] else np.inf
    for _ in range(passes):
        for i in range(h):
            for j in range(w):
                if seeds[i, j]:
                    continue
                if i > 0:
                    _relax(img, dist, hi, lo, i, j, i - 1, j)
                if j > 0:
                    _relax(img, dist, hi, lo, i, j, i, j - 1)
        for i in range(h - 1, -1, -1):
            for j in range(w - 1, -1, -1):
                if seeds[i, j]:
                    continue
                if i < h - 1:
                    _relax(img, dist, hi, lo, i, j, i + 1, j)
                if j < w - 1:
                    _relax(img, dist, hi, lo, i, j, i, j + 1)
    return dist


def border_seeds(shape: tuple[int, int]) -> np.ndarray:
    seeds = np.zeros(shape, dtype=bool)
    seeds[0, :] = seeds[-1, :] = True
    seeds[:, 0] = seeds[:, -1] = True
    return seeds


def mbd_transform(channel: np.ndarray, seeds: np.ndarray | None = None, passes: int = 3) -> np.ndarray:
    """Approximate minimum barrier distance of every pixel to ``seeds``.

    Args:
        channel: 2-D raster, nominally in [0, 1].
        seeds: boolean mask of seed pixels; defaults to the one-pixel border.
        passes: number of forward+backward sweep pairs.

    Returns:
        Distance raster; seeds are 0.  Pixels unreachable from any seed stay inf.
    """
    img = np.ascontiguousarray(channel, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("channel must be 2-D")
    seeds = border_seeds(img.shape) if seeds is None else np.ascontiguousarray(seeds, dtype=np.bool_)
    if seeds.shape != img.shape:
        raise ValueError("seed mask shape differs from channel")
    if not seeds.any():
        raise ValueError("empty seed set")
    if passes < 1:
        raise ValueError("passes must be >= 1")
    return _mbd_sweeps(img, seeds, int(passes))


def mbd_sum(stack: ChannelStack, params: MbdParams = MbdParams()) -> np.ndarray:
    """Raw (unrescaled) sum of per-channel border distances."""
    seeds = border_seeds(stack.shape)
    total = np.zeros(stack.shape)
    for key in params.channels:
        total += mbd_transform(stack[key], seeds, params.passes)
    return total


def backgroundness_map(stack: ChannelStack, params: MbdParams = MbdParams()) -> np.ndarray:
    """Per-pixel dissimilarity to the four border bands in (L, a, b).

    Each band contributes a diagonal-covariance Mahalanobis distance; the
    largest of the four contributions is dropped so a single border occupied
    by the object does not cancel the others.
    """
    lab = stack.stack(("L", "a", "b"))
    h, w = stack.shape
    th = max(1, int(round(params.border_band_frac * h)))
    tw = max(1, int(round(params.border_band_frac * w)))
    bands = (lab[:th], lab[h - th:], lab[:, :tw], lab[:, w - tw:])
    contrib = []
    for band in bands:
        px = band.reshape(-1, 3)
        mu = px.mean(axis=0)
        var = np.maximum(px.var(axis=0), params.var_floor)
        contrib.append(np.sqrt((((lab - mu) ** 2) / var).sum(axis=-1)))
    contrib = np.stack(contrib)
    return rescale(contrib.sum(axis=0) - contrib.max(axis=0))


def morphological_smooth(sal: np.ndarray, gamma: float = 0.02) -> np.ndarray:
    """Reconstruction by dilation then by erosion with an adaptive square element."""
    h, w = sal.shape
    r = int(round(gamma * math.sqrt(max(float(sal.mean()), 0.0)) * min(h, w)))
    if r < 1:
        return sal
    size = 2 * r + 1
    seed = ndimage.grey_erosion(sal, size=(size, size), mode="nearest")
    opened = reconstruction(seed, sal, method="dilation")
    seed = ndimage.grey_dilation(opened, size=(size, size), mode="nearest")
    return reconstruction(seed, opened, method="erosion")


def pixel_saliency(stack: ChannelStack, params: MbdParams = MbdParams(), raw_mbd: np.ndarray | None = None) -> np.ndarray:
    """Pixel cue: rescaled MBD sum, weighted by backgroundness, then smoothed."""
    total = mbd_sum(stack, params) if raw_mbd is None else raw_mbd
    sal = rescale(total) * backgroundness_map(stack, params)
    sal = morphological_smooth(sal, params.gamma)
    return rescale(sal)

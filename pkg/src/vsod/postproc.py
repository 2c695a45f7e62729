"""Post-processing of per-frame saliency maps: temporal smoothing, contrast
stretching and binarization with small-component removal."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._util import rescale, sigmoid

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class PostprocParams:
    temporal_width: int = 3
    temporal_sigma: float = 0.75
    sigmoid_slope: float = 10.0
    sigmoid_center: float = 0.5
    min_component_frac: float = 0.001

    def __post_init__(self):
        if self.temporal_width < 1 or self.temporal_width % 2 == 0:
            raise ValueError("temporal_width must be a positive odd integer")
        if not self.temporal_sigma > 0:
            raise ValueError("temporal_sigma must be positive")
        if not self.sigmoid_slope > 0:
            raise ValueError("sigmoid_slope must be positive")
        if not 0.0 <= self.min_component_frac < 1.0:
            raise ValueError("min_component_frac must lie in [0, 1)")


def temporal_kernel(width: int = 3, sigma: float = 0.75) -> np.ndarray:
    half = width // 2
    k = np.exp(-(np.arange(-half, half + 1) ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def temporal_smooth(maps: list[np.ndarray], params: PostprocParams = PostprocParams()) -> list[np.ndarray]:
    """Gaussian filter along time; at the ends the kernel is renormalized over existing frames."""
    if not maps:
        return []
    k = temporal_kernel(params.temporal_width, params.temporal_sigma)
    half = len(k) // 2
    n = len(maps)
    out = []
    for t in range(n):
        lo, hi = max(0, t - half), min(n, t + half + 1)
        taps = k[lo - t + half: hi - t + half]
        acc = np.zeros_like(maps[t], dtype=np.float64)
        for w, m in zip(taps, maps[lo:hi]):
            acc += w * m
        out.append(acc / taps.sum())
    return out


def contrast_enhance(sal: np.ndarray, params: PostprocParams = PostprocParams()) -> np.ndarray:
    return rescale(sigmoid(params.sigmoid_slope * (np.asarray(sal, dtype=np.float64) - params.sigmoid_center)))


def binarize_and_clean(sal: np.ndarray, params: PostprocParams = PostprocParams()) -> tuple[np.ndarray, np.ndarray]:
    """Threshold at the map mean (``>=``) and drop 4-connected specks.

    Components with fewer than ``min_component_frac`` x area pixels are
    removed.  Returns ``(mask, cleaned_map)`` where the cleaned map is zero
    outside the kept components.
    """
    sal = np.asarray(sal, dtype=np.float64)
    mask = sal >= sal.mean()
    cutoff = params.min_component_frac * sal.size
    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n:
        sizes = np.bincount(labels.ravel(), minlength=n + 1)
        keep = sizes >= cutoff
        keep[0] = False
        mask = keep[labels]
    return mask, np.where(mask, sal, 0.0)


def postprocess_video(maps: list[np.ndarray], params: PostprocParams = PostprocParams()) -> list[np.ndarray]:
    """Full chain for one video; returns the cleaned grayscale maps."""
    return [binarize_and_clean(contrast_enhance(m, params), params)[1] for m in temporal_smooth(maps, params)]

"""Per-frame feature channels: RGB, Lab, HSV and the motion space XYT.

X and Y are the magnitudes of the horizontal and vertical optical flow towards
the next frame, T is the flicker (absolute intensity change) from the previous
frame.  Every channel of a :class:`ChannelStack` is min-max rescaled per frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numba import njit
from scipy import ndimage
from skimage.color import rgb2hsv, rgb2lab
from skimage.transform import resize

from ._util import rescale

CHANNEL_KEYS = ("R", "G", "B", "L", "a", "b", "H", "S", "V", "X", "Y", "T")

# Tiny fixed-range noise (e.g. a* of a gray pixel) must not be stretched to [0, 1].
_COLOR_FLAT = 1e-6


@dataclass(frozen=True)
class FlowParams:
    alpha: float = 15.0
    levels: int = 4
    iters: int = 100


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))


class FlowEstimator(Protocol):
    def __call__(self, frame_t: np.ndarray, frame_t1: np.ndarray, params: FlowParams) -> FlowField: ...


@dataclass
class ChannelStack:
    channels: dict[str, np.ndarray]

    def __post_init__(self):
        missing = [k for k in CHANNEL_KEYS if k not in self.channels]
        if missing:
            raise ValueError(f"missing channels {missing}")
        shapes = {v.shape for v in self.channels.values()}
        if len(shapes) != 1:
            raise ValueError(f"channels differ in shape: {shapes}")

    def __getitem__(self, key: str) -> np.ndarray:
        return self.channels[key]

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels["L"].shape

    def stack(self, keys) -> np.ndarray:
        return np.stack([self.channels[k] for k in keys], axis=-1)


def _as_float_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        return rgb.astype(np.float64) / 255.0
    return np.clip(rgb.astype(np.float64), 0.0, 1.0)


def to_lab(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CIE Lab (D65) with L/100 and (a, b + 128)/255, all clipped to [0, 1]."""
    lab = rgb2lab(_as_float_rgb(rgb), illuminant="D65")
    L = np.clip(lab[..., 0] / 100.0, 0.0, 1.0)
    a = np.clip((lab[..., 1] + 128.0) / 255.0, 0.0, 1.0)
    b = np.clip((lab[..., 2] + 128.0) / 255.0, 0.0, 1.0)
    return L, a, b


def to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    hsv = rgb2hsv(_as_float_rgb(rgb))
    return hsv[..., 0], hsv[..., 1], hsv[..., 2]


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma in [0, 255] used by the flow solver."""
    f = _as_float_rgb(rgb) * 255.0
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


@njit(cache=True)
def _hs_jacobi(u, v, u0, v0, Ix, Iy, It, alpha, iters):
    h, w = u.shape
    a2 = alpha * alpha
    un = np.empty_like(u)
    vn = np.empty_like(v)
    for _ in range(iters):
        for i in range(h):
            im = max(i - 1, 0)
            ip = min(i + 1, h - 1)
            for j in range(w):
                jm = max(j - 1, 0)
                jp = min(j + 1, w - 1)
                # 3x3 Horn-Schunck average: edges 1/6, corners 1/12
                ub = (u[im, j] + u[ip, j] + u[i, jm] + u[i, jp]) / 6.0 + (
                    u[im, jm] + u[im, jp] + u[ip, jm] + u[ip, jp]) / 12.0
                vb = (v[im, j] + v[ip, j] + v[i, jm] + v[i, jp]) / 6.0 + (
                    v[im, jm] + v[im, jp] + v[ip, jm] + v[ip, jp]) / 12.0
                ix = Ix[i, j]
                iy = Iy[i, j]
                r = (It[i, j] + ix * (ub - u0[i, j]) + iy * (vb - v0[i, j])) / (a2 + ix * ix + iy * iy)
                un[i, j] = ub - ix * r
                vn[i, j] = vb - iy * r
        u, un = un, u
        v, vn = vn, v
    return u, v


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(img, [yy + v, xx + u], order=1, mode="nearest")


def _horn_schunck_level(I0, I1, u, v, alpha, iters):
    I1w = _warp(I1, u, v)
    # Derivatives averaged over both images (first-order Horn-Schunck estimate).
    gy0, gx0 = np.gradient(I0)
    gy1, gx1 = np.gradient(I1w)
    Ix = 0.5 * (gx0 + gx1)
    Iy = 0.5 * (gy0 + gy1)
    It = I1w - I0
    if not np.any(It):
        return u, v
    return _hs_jacobi(u.copy(), v.copy(), u.copy(), v.copy(), Ix, Iy, It, float(alpha), int(iters))


def horn_schunck(frame_t: np.ndarray, frame_t1: np.ndarray, params: FlowParams = FlowParams()) -> FlowField:
    """Coarse-to-fine Horn-Schunck flow from ``frame_t`` to ``frame_t1``.

    Inputs may be RGB or single-channel; RGB is reduced to luma in [0, 255],
    single-channel input is used as given.  The flow maps a pixel ``p`` of
    frame t to ``p + (u, v)`` in frame t+1.
    """
    if frame_t.shape != frame_t1.shape:
        raise ValueError(f"frame shapes differ: {frame_t.shape} vs {frame_t1.shape}")
    I0 = to_gray(frame_t) if frame_t.ndim == 3 else np.asarray(frame_t, dtype=np.float64)
    I1 = to_gray(frame_t1) if frame_t1.ndim == 3 else np.asarray(frame_t1, dtype=np.float64)

    pyr0, pyr1 = [I0], [I1]
    for _ in range(max(params.levels, 1) - 1):
        h, w = pyr0[-1].shape
        if min(h, w) < 16:
            break
        shape = ((h + 1) // 2, (w + 1) // 2)
        pyr0.append(resize(ndimage.gaussian_filter(pyr0[-1], 1.0), shape, order=1, anti_aliasing=False))
        pyr1.append(resize(ndimage.gaussian_filter(pyr1[-1], 1.0), shape, order=1, anti_aliasing=False))

    u = np.zeros(pyr0[-1].shape)
    v = np.zeros(pyr0[-1].shape)
    for lvl in range(len(pyr0) - 1, -1, -1):
        if u.shape != pyr0[lvl].shape:
            sy = pyr0[lvl].shape[0] / u.shape[0]
            sx = pyr0[lvl].shape[1] / u.shape[1]
            u = resize(u, pyr0[lvl].shape, order=1, anti_aliasing=False) * sx
            v = resize(v, pyr0[lvl].shape, order=1, anti_aliasing=False) * sy
        u, v = _horn_schunck_level(pyr0[lvl], pyr1[lvl], u, v, params.alpha, params.iters)
    return FlowField(u, v)


def compute_flow(frame_t, frame_t1, params: FlowParams = FlowParams(), estimator: FlowEstimator = horn_schunck):
    """Flow towards the next frame; ``frame_t1=None`` (last frame) gives a zero field."""
    if frame_t1 is None:
        return FlowField.zeros(frame_t.shape[:2])
    if frame_t.shape != frame_t1.shape:
        raise ValueError(f"frame shapes differ: {frame_t.shape} vs {frame_t1.shape}")
    return estimator(frame_t, frame_t1, params)


def compute_flicker(intensity_t: np.ndarray, intensity_tm1: np.ndarray | None) -> np.ndarray:
    """Absolute in-place intensity difference; intensities are L in [0, 1]."""
    if intensity_tm1 is None:
        return np.zeros(np.shape(intensity_t))
    if np.shape(intensity_t) != np.shape(intensity_tm1):
        raise ValueError("intensity rasters differ in shape")
    return np.clip(np.abs(np.asarray(intensity_t, float) - np.asarray(intensity_tm1, float)), 0.0, 1.0)


def color_channels(rgb: np.ndarray) -> dict[str, np.ndarray]:
    f = _as_float_rgb(rgb)
    L, a, b = to_lab(rgb)
    H, S, V = to_hsv(rgb)
    return {"R": f[..., 0], "G": f[..., 1], "B": f[..., 2], "L": L, "a": a, "b": b, "H": H, "S": S, "V": V}


def build_channel_stack(
    frame_t: np.ndarray,
    frame_tm1: np.ndarray | None = None,
    frame_t1: np.ndarray | None = None,
    flow: FlowField | None = None,
    flow_params: FlowParams = FlowParams(),
    signed_flow: bool = False,
) -> tuple[ChannelStack, FlowField]:
    """Twelve [0, 1] channels for frame t plus the forward flow used for X/Y.

    ``frame_tm1`` is None for the first frame (zero flicker) and ``frame_t1``
    is None for the last frame (zero flow).  A precomputed ``flow`` skips the
    solver.
    """
    chans = color_channels(frame_t)
    if flow is None:
        flow = compute_flow(frame_t, frame_t1, flow_params)
    L_prev = to_lab(frame_tm1)[0] if frame_tm1 is not None else None
    chans["X"] = flow.u if signed_flow else np.abs(flow.u)
    chans["Y"] = flow.v if signed_flow else np.abs(flow.v)
    chans["T"] = compute_flicker(chans["L"], L_prev)
    out = {k: rescale(chans[k], flat=_COLOR_FLAT) for k in CHANNEL_KEYS}
    return ChannelStack(out), flow

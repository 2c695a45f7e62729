"""Object-level cue: object proposals weighted by predicted fixation mass.

For each proposal ``O`` the fraction of fixation density it receives is taken
in three feature spaces (Lab, HSV, XYT); a pixel accumulates the product of
the three fractions over all proposals covering it.

Proposal generation and fixation prediction are pluggable.  The built-in
providers are light baselines: thresholded-MBD connected components for
proposals, and a spectral-residual predictor for fixation density.  Externally
computed proposals and fixation maps can be supplied as files instead.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage
from skimage.measure import regionprops
from skimage.transform import resize

from ._util import rescale
from .cue_pixel import MbdParams, backgroundness_map, mbd_sum
from .dataset_io import DataError, read_mask, read_saliency_map
from .features import ChannelStack

SPACES = {"lab": ("L", "a", "b"), "hsv": ("H", "S", "V"), "xyt": ("X", "Y", "T")}


@dataclass(frozen=True)
class ObjectParams:
    k: int = 50
    levels: int = 16
    dedup_iou: float = 0.9
    min_area: int = 16
    area_peak: float = 0.15
    area_sigma: float = 0.1
    border_factor: float = 0.3
    sr_side: int = 64
    blur_frac: float = 0.03
    # "weighted" multiplies the MBD sum by backgroundness before thresholding;
    # "raw" thresholds the bare sum, which lets textured background leak into
    # the components that contain the object.
    source: str = "weighted"

    def __post_init__(self):
        if self.source not in ("weighted", "raw"):
            raise ValueError(f"unknown proposal source {self.source!r}")


@dataclass
class ProposalSet:
    masks: list[np.ndarray]
    objectness: list[float]

    def __len__(self) -> int:
        return len(self.masks)


@dataclass
class FixationDensityMaps:
    f_lab: np.ndarray
    f_hsv: np.ndarray
    f_xyt: np.ndarray

    def __iter__(self):
        return iter((self.f_lab, self.f_hsv, self.f_xyt))


class ProposalProvider(Protocol):
    def __call__(self, stack: ChannelStack, k: int) -> ProposalSet: ...


class FixationProvider(Protocol):
    def __call__(self, stack: ChannelStack) -> FixationDensityMaps: ...


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union if union else 0.0


def generate_proposals(
    stack: ChannelStack,
    k: int = 50,
    params: ObjectParams = ObjectParams(),
    raw_mbd: np.ndarray | None = None,
    mbd_params: MbdParams = MbdParams(),
) -> ProposalSet:
    """Candidate objects from connected components of the thresholded MBD sum.

    With ``params.source == "weighted"`` the rescaled sum is first multiplied
    by the backgroundness map.

    Objectness = solidity x (``border_factor`` if touching the frame border)
    x Gaussian area prior peaked at ``area_peak`` of the frame.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    h, w = stack.shape
    total = mbd_sum(stack, mbd_params) if raw_mbd is None else raw_mbd
    if params.source == "weighted":
        total = rescale(total) * backgroundness_map(stack, mbd_params)
    lo, hi = float(total.min()), float(total.max())
    if hi - lo <= 1e-12:
        return ProposalSet([np.ones((h, w), dtype=bool)], [0.0])

    area = float(h * w)
    cands: list[tuple[float, np.ndarray]] = []
    for level in lo + (hi - lo) * np.arange(1, params.levels + 1) / (params.levels + 1):
        comp, n = ndimage.label(total >= level)
        for region in regionprops(comp):
            if region.area < params.min_area:
                continue
            r0, c0, r1, c1 = region.bbox
            mask = np.zeros((h, w), dtype=bool)
            mask[r0:r1, c0:c1] = region.image
            touches = r0 == 0 or c0 == 0 or r1 == h or c1 == w
            frac = region.area / area
            score = (
                float(region.solidity)
                * (params.border_factor if touches else 1.0)
                * float(np.exp(-((frac - params.area_peak) ** 2) / (2.0 * params.area_sigma**2)))
            )
            cands.append((score, mask))

    cands.sort(key=lambda c: -c[0])
    kept: list[tuple[float, np.ndarray]] = []
    for score, mask in cands:
        if all(_iou(mask, m) < params.dedup_iou for _, m in kept):
            kept.append((score, mask))
            if len(kept) == k:
                break
    if not kept:
        return ProposalSet([np.ones((h, w), dtype=bool)], [0.0])
    return ProposalSet([m for _, m in kept], [s for s, _ in kept])


def spectral_residual(channel: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Squared inverse transform of (log amplitude - local mean) with the original phase."""
    spectrum = np.fft.fft2(channel)
    amp = np.abs(spectrum)
    # A floor relative to the peak keeps exact spectral zeros (regular
    # patterns) from turning into huge residuals around them.
    log_amp = np.log(amp + floor * amp.max() + 1e-12)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="nearest")
    return np.abs(np.fft.ifft2(np.exp(residual + 1j * np.angle(spectrum)))) ** 2


def _normalize_density(m: np.ndarray) -> np.ndarray:
    s = float(m.sum())
    if not np.isfinite(s) or s <= 0.0:
        return np.full(m.shape, 1.0 / m.size)
    return m / s


def predict_fixation_maps(stack: ChannelStack, params: ObjectParams = ObjectParams()) -> FixationDensityMaps:
    """Spectral-residual fixation density per feature space, each summing to 1."""
    h, w = stack.shape
    scale = min(1.0, params.sr_side / max(h, w))
    small = (max(1, int(round(h * scale))), max(1, int(round(w * scale))))
    sigma = params.blur_frac * max(small)
    maps = {}
    for name, keys in SPACES.items():
        acc = np.zeros(small)
        for key in keys:
            ch = stack[key]
            if ch.max() - ch.min() <= 0.0:
                continue
            ch_small = resize(ch, small, order=1, anti_aliasing=True) if small != (h, w) else ch
            acc += spectral_residual(ch_small)
        acc = ndimage.gaussian_filter(acc, sigma, mode="nearest")
        full = resize(acc, (h, w), order=1, anti_aliasing=False) if small != (h, w) else acc
        maps[name] = _normalize_density(rescale(full))
    return FixationDensityMaps(maps["lab"], maps["hsv"], maps["xyt"])


def fixation_ratio(mask: np.ndarray, density: np.ndarray) -> float:
    """Share of the total fixation density that falls inside ``mask``."""
    total = float(density.sum())
    if total <= 0.0:
        return 0.0
    return float(density[np.asarray(mask, dtype=bool)].sum()) / total


def object_saliency_from(proposals: ProposalSet, fix: FixationDensityMaps, rescaled: bool = True) -> np.ndarray:
    acc = np.zeros(fix.f_lab.shape)
    for mask in proposals.masks:
        weight = fixation_ratio(mask, fix.f_lab) * fixation_ratio(mask, fix.f_hsv) * fixation_ratio(mask, fix.f_xyt)
        acc[mask] += weight
    return rescale(acc) if rescaled else acc


def object_saliency(
    stack: ChannelStack,
    k: int = 50,
    params: ObjectParams = ObjectParams(),
    raw_mbd: np.ndarray | None = None,
    proposals: ProposalProvider | None = None,
    fixations: FixationProvider | None = None,
) -> np.ndarray:
    props = proposals(stack, k) if proposals else generate_proposals(stack, k, params, raw_mbd)
    fix = fixations(stack) if fixations else predict_fixation_maps(stack, params)
    return object_saliency_from(props, fix)


class FileProposals:
    """Proposals read from ``<video>/proposals/<frame:06d>/``.

    The directory holds binary PNG masks and an ``objectness.csv`` with columns
    ``mask,objectness`` naming the files.  Masks are resized (nearest) to the
    processing resolution and returned sorted by objectness.
    """

    def __init__(self, video_dir: Path | str):
        self.root = Path(video_dir) / "proposals"

    def load(self, frame_index: int, shape: tuple[int, int], k: int) -> ProposalSet:
        d = self.root / f"{frame_index:06d}"
        table = d / "objectness.csv"
        if not table.is_file():
            raise DataError(f"missing {table}")
        rows = []
        with table.open(newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                try:
                    rows.append((row["mask"], float(row["objectness"])))
                except (KeyError, ValueError) as exc:
                    raise DataError(f"{table}: line {lineno}: {exc}") from exc
        rows.sort(key=lambda r: -r[1])
        masks, scores = [], []
        for name, score in rows[:k]:
            m = read_mask(d / name)
            if m.shape != shape:
                m = resize(m.astype(float), shape, order=0, anti_aliasing=False) > 0.5
            if m.any():
                masks.append(m)
                scores.append(score)
        if not masks:
            return ProposalSet([np.ones(shape, dtype=bool)], [0.0])
        return ProposalSet(masks, scores)


class FileFixationMaps:
    """8-bit fixation maps ``<video>/fixmaps/{lab,hsv,xyt}_<frame:06d>.png``, renormalized to sum 1."""

    def __init__(self, video_dir: Path | str):
        self.root = Path(video_dir) / "fixmaps"

    def load(self, frame_index: int, shape: tuple[int, int]) -> FixationDensityMaps:
        out = []
        for name in SPACES:
            path = self.root / f"{name}_{frame_index:06d}.png"
            if not path.is_file():
                raise DataError(f"missing {path}")
            m = read_saliency_map(path)
            if m.shape != shape:
                m = resize(m, shape, order=1, anti_aliasing=False)
            out.append(_normalize_density(np.maximum(m, 0.0)))
        return FixationDensityMaps(*out)

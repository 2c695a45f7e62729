"""Ground-truth construction from eye-tracking fixations.

Each labeled object gets a fixation density per keyframe (spatio-temporal
Gaussian kernel summed over fixations made after the keyframe is shown and
averaged over the object's pixels).  Its video score is the mean of those
densities over the keyframes it appears in.  Objects scoring at least the
threshold are salient; if none does, the top-scoring object is.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.transform import resize

from .dataset_io import DataError, FixationLog, FrameSequence, ObjectMaskSet, write_mask

log = logging.getLogger(__name__)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DensityParams:
    sigma_s_frac: float = 0.03  # of max(width, height)
    sigma_t: float = 0.1  # seconds
    score_threshold: float = 50.0
    keyframe_stride: int = 15
    cutoff: float = 4.0  # in units of sigma_t

    def sigma_s(self, shape: tuple[int, int]) -> float:
        return self.sigma_s_frac * max(shape)


@dataclass
class ObjectScore:
    label: int
    per_keyframe_density: list[tuple[int, float]]
    video_score: float


def density_raster(shape: tuple[int, int], t: float, fixations: FixationLog, params: DensityParams = DensityParams()):
    """Fixation density of every pixel for a keyframe shown at time ``t``.

    The spatial Gaussian is separable, so the raster is ``Gy^T diag(w) Gx``
    over fixations with ``0 < t_f - t <= cutoff * sigma_t``.
    """
    h, w = shape
    dt = np.asarray(fixations.t, dtype=np.float64) - t
    sel = (dt > 0) & (dt <= params.cutoff * params.sigma_t)
    if not np.any(sel):
        return np.zeros(shape)
    s = params.sigma_s(shape)
    wt = np.exp(-(dt[sel] ** 2) / (2.0 * params.sigma_t**2))
    gx = np.exp(-((np.arange(w)[None, :] - np.asarray(fixations.x)[sel][:, None]) ** 2) / (2.0 * s * s))
    gy = np.exp(-((np.arange(h)[None, :] - np.asarray(fixations.y)[sel][:, None]) ** 2) / (2.0 * s * s))
    return (gy * wt[:, None]).T @ gx


def fixation_density(mask: np.ndarray, t: float, fixations: FixationLog, params: DensityParams = DensityParams(),
                     raster: np.ndarray | None = None) -> float:
    """Mean fixation density over the pixels of ``mask`` at keyframe time ``t``."""
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty object mask")
    if raster is None:
        raster = density_raster(mask.shape, t, fixations, params)
    return float(raster[mask].sum() / n)


def _time_of(video, number: int) -> float:
    if isinstance(video, FrameSequence):
        return video.time_of(number)
    return (number - 1) / float(video)


def score_objects(video: FrameSequence | float, masks: ObjectMaskSet, fixations: FixationLog,
                  params: DensityParams = DensityParams()) -> list[ObjectScore]:
    """Per-object video scores.  ``video`` is a sequence or a frame rate (frames numbered from 1)."""
    if not masks.keyframes:
        raise DataError("no keyframes to score")
    per: dict[int, list[tuple[int, float]]] = {}
    for number, labels in masks.keyframes:
        present = [int(v) for v in np.unique(labels) if v != 0]
        if not present:
            continue
        raster = density_raster(labels.shape, _time_of(video, number), fixations, params)
        for lab in present:
            per.setdefault(lab, []).append((number, fixation_density(labels == lab, 0.0, fixations, params, raster)))
    return [
        ObjectScore(lab, dens, float(np.mean([d for _, d in dens])))
        for lab, dens in sorted(per.items())
    ]


def select_salient(scores: list[ObjectScore], params: DensityParams = DensityParams()) -> set[int]:
    if not scores:
        return set()
    chosen = {s.label for s in scores if s.video_score >= params.score_threshold}
    if chosen:
        return chosen
    best = max(scores, key=lambda s: (s.video_score, -s.label))
    return {best.label}


def emit_gt_masks(masks: ObjectMaskSet, salient: set[int]):
    """Binary keyframe masks of the salient objects plus ``(frame, reason)`` discards."""
    kept: list[tuple[int, np.ndarray]] = []
    discards: list[tuple[int, str]] = []
    for number, labels in masks.keyframes:
        union = np.zeros(labels.shape, dtype=bool)
        split = False
        for lab in sorted(salient):
            m = labels == lab
            if not m.any():
                continue
            union |= m
            if ndimage.label(m, structure=_EIGHT_CONNECTED)[1] > 1:
                split = True
        if not union.any():
            discards.append((number, "background-only"))
        elif split:
            discards.append((number, "split"))
        else:
            kept.append((number, union))
    return kept, discards


def _resize_nearest(mask: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    if mask.shape == tuple(out_size):
        return mask.astype(np.float64)
    return resize(mask.astype(np.float64), out_size, order=0, anti_aliasing=False)


def average_annotation_map(videos: list[list[np.ndarray]], out_size: tuple[int, int] = (256, 256)) -> np.ndarray:
    """Per-video normalized mask sums, summed over videos and normalized to max 1."""
    total = np.zeros(out_size)
    used = 0
    for masks in videos:
        if not masks:
            continue
        acc = sum(_resize_nearest(m, out_size) for m in masks)
        peak = acc.max()
        if peak > 0:
            total += acc / peak
        used += 1
    if used == 0:
        raise ValueError("no masks to average")
    peak = total.max()
    return total / peak if peak > 0 else total


def mask_stats(mask: np.ndarray) -> tuple[int, float]:
    """(connected object count, foreground area in percent)."""
    mask = np.asarray(mask, dtype=bool)
    return ndimage.label(mask, structure=_EIGHT_CONNECTED)[1], 100.0 * mask.mean()


def dataset_stats(subsets: dict[str, list[np.ndarray]]) -> dict:
    """Mean and std of object count and area (%) per keyframe for each subset."""
    report = {}
    for name, masks in subsets.items():
        stats = np.array([mask_stats(m) for m in masks], dtype=np.float64).reshape(-1, 2)
        if len(stats) == 0:
            report[name] = {"n_keyframes": 0, "objects_mean": 0.0, "objects_std": 0.0, "area_mean": 0.0, "area_std": 0.0}
            continue
        report[name] = {
            "n_keyframes": len(stats),
            "objects_mean": float(stats[:, 0].mean()),
            "objects_std": float(stats[:, 0].std()),
            "area_mean": float(stats[:, 1].mean()),
            "area_std": float(stats[:, 1].std()),
        }
    return report


def annotate_video(video: FrameSequence, masks: ObjectMaskSet, fixations: FixationLog, out_dir: Path | None,
                   params: DensityParams = DensityParams()):
    """Score, select and write ``gt/mask_*.png`` for one video; returns (scores, salient, kept, discards)."""
    scores = score_objects(video, masks, fixations, params)
    salient = select_salient(scores, params)
    kept, discards = emit_gt_masks(masks, salient)
    for number, reason in discards:
        log.info("%s: keyframe %d discarded (%s)", video.video_id, number, reason)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for number, m in kept:
            write_mask(out_dir / f"mask_{number:06d}.png", m)
    return scores, salient, kept, discards


def write_annotation_tables(out: Path, rows_scores, rows_discards) -> None:
    with (out / "scores.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "label", "score", "n_keyframes", "salient"])
        w.writerows(rows_scores)
    with (out / "discards.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "frame", "reason"])
        w.writerows(rows_discards)


def write_stats(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True))


"""Benchmark metrics: adaptive-threshold precision/recall, MAE and F-beta.

Scores are averaged per video first, then over videos, so long videos do not
dominate the dataset figures.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from skimage.transform import resize

from .dataset_io import DataError, _numbered_files, frame_number, read_mask, read_saliency_map

BETA2 = 0.3
THRESHOLD_POLICY = "tau = min(2 * mean(S), max(S)); foreground where S >= tau"


def adaptive_threshold(sal: np.ndarray) -> np.ndarray:
    sal = np.asarray(sal, dtype=np.float64)
    tau = min(2.0 * float(sal.mean()), float(sal.max()))
    return sal >= tau


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def precision_recall(mask: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Precision is 0 for an empty prediction; recall is 0 for an empty ground truth."""
    _check_shapes(mask, gt)
    m = np.asarray(mask, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    hit = int(np.count_nonzero(m & g))
    n_m = int(np.count_nonzero(m))
    n_g = int(np.count_nonzero(g))
    return (hit / n_m if n_m else 0.0), (hit / n_g if n_g else 0.0)


def mae(sal: np.ndarray, gt: np.ndarray) -> float:
    _check_shapes(sal, gt)
    return float(np.mean(np.abs(np.asarray(sal, dtype=np.float64) - np.asarray(gt, dtype=np.float64))))


def f_beta(precision: float, recall: float, beta2: float = BETA2) -> float:
    denom = beta2 * precision + recall
    if denom <= 0.0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


@dataclass
class KeyframeScore:
    video_id: str
    frame: int
    precision: float
    recall: float
    mae: float


def score_keyframe(video_id: str, frame: int, sal: np.ndarray, gt: np.ndarray) -> KeyframeScore:
    p, r = precision_recall(adaptive_threshold(sal), gt)
    return KeyframeScore(video_id, frame, p, r, mae(sal, gt))


@dataclass
class VideoScore:
    video_id: str
    avg_precision: float
    avg_recall: float
    avg_mae: float
    n_keyframes: int


@dataclass
class EvalReport:
    per_video: list[VideoScore]
    MAP: float
    MAR: float
    F_beta: float
    MAE: float
    beta2: float = BETA2
    threshold_policy: str = THRESHOLD_POLICY
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not self.curves:
            d.pop("curves")
        return d


def aggregate(scores: list[KeyframeScore], beta2: float = BETA2) -> EvalReport:
    """Two-stage averaging: keyframes within a video, then videos."""
    if not scores:
        raise ValueError("nothing to aggregate")
    by_video: dict[str, list[KeyframeScore]] = {}
    for s in scores:
        by_video.setdefault(s.video_id, []).append(s)
    per_video = [
        VideoScore(
            vid,
            float(np.mean([s.precision for s in ks])),
            float(np.mean([s.recall for s in ks])),
            float(np.mean([s.mae for s in ks])),
            len(ks),
        )
        for vid, ks in sorted(by_video.items())
    ]
    MAP = float(np.mean([v.avg_precision for v in per_video]))
    MAR = float(np.mean([v.avg_recall for v in per_video]))
    MAE = float(np.mean([v.avg_mae for v in per_video]))
    return EvalReport(per_video, MAP, MAR, f_beta(MAP, MAR, beta2), MAE, beta2)


def pr_curve(sal: np.ndarray, gt: np.ndarray, n: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at thresholds 0/255 .. 255/255 (``>=``)."""
    g = np.asarray(gt, dtype=bool)
    prec = np.empty(n)
    rec = np.empty(n)
    for i, tau in enumerate(np.arange(n) / (n - 1)):
        prec[i], rec[i] = precision_recall(sal >= tau, g)
    return prec, rec


def _fit(sal: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if sal.shape == shape:
        return sal
    return np.clip(resize(sal, shape, order=1, anti_aliasing=False), 0.0, 1.0)


def evaluate_dirs(gt_root: Path | str, pred_root: Path | str, curves: bool = False) -> EvalReport:
    """Score ``<pred>/<vid>/sal_*.png`` against ``<gt>/<vid>/gt/mask_*.png`` by frame number.

    Predictions of a different size are resized bilinearly to the mask size.
    """
    gt_root, pred_root = Path(gt_root), Path(pred_root)
    if not gt_root.is_dir():
        raise DataError(f"ground-truth root not found: {gt_root}")
    scores: list[KeyframeScore] = []
    curve_acc: dict[str, list] = {}
    for vdir in sorted(p for p in gt_root.iterdir() if (p / "gt").is_dir()):
        vid = vdir.name
        preds = {frame_number(p): p for p in _numbered_files(pred_root / vid, (".png",))} if (pred_root / vid).is_dir() else {}
        for mpath in _numbered_files(vdir / "gt", (".png",)):
            num = frame_number(mpath)
            gt = read_mask(mpath)
            if not gt.any():
                continue
            if num not in preds:
                raise DataError(f"{vid}: no prediction for keyframe {num}")
            sal = _fit(read_saliency_map(preds[num]), gt.shape)
            scores.append(score_keyframe(vid, num, sal, gt))
            if curves:
                p, r = pr_curve(sal, gt)
                curve_acc.setdefault(vid, []).append((p, r))
    if not scores:
        raise DataError(f"no scorable keyframes under {gt_root}")
    report = aggregate(scores)
    if curves:
        report.curves = {
            vid: {
                "precision": np.mean([p for p, _ in pr], axis=0).tolist(),
                "recall": np.mean([r for _, r in pr], axis=0).tolist(),
            }
            for vid, pr in curve_acc.items()
        }
    return report


def write_report(report: EvalReport, out: Path | str) -> None:
    """JSON (full report) or CSV (video_id, map, mar, mae, n), chosen by suffix."""
    out = Path(out)
    if out.suffix.lower() == ".csv":
        with out.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["video_id", "map", "mar", "mae", "n"])
            for v in report.per_video:
                w.writerow([v.video_id, v.avg_precision, v.avg_recall, v.avg_mae, v.n_keyframes])
    else:
        out.write_text(json.dumps(report.to_dict(), indent=2))

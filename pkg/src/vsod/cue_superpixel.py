"""Superpixel-level cue: SLIC superpixels and a low-rank + group-sparse split.

Superpixel features form the columns of a matrix ``F``.  Background
superpixels are similar to one another and live near a low-rank subspace;
salient ones show up as the nonzero columns of the sparse part ``E`` of

    min ||L||_* + lam * sum_j w_j ||E[:, j]||_2   s.t.  L + E = F,

solved with the inexact augmented Lagrange multiplier method.  Column weights
``w_j`` encode location, color and border priors: a superpixel that looks
salient a priori gets a smaller penalty and enters ``E`` more easily.  The
penalty is inversely proportional to the prior, so superpixels with
near-zero prior are effectively held in the low-rank part.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.segmentation import slic

from ._util import rescale
from .features import CHANNEL_KEYS, ChannelStack

log = logging.getLogger(__name__)

N_FEATURES = 2 * len(CHANNEL_KEYS) + 2


@dataclass(frozen=True)
class SolverParams:
    lam: float | None = None  # None -> default_lambda(n)
    max_iters: int = 200
    tol: float = 1e-6
    mu_growth: float = 1.1


@dataclass(frozen=True)
class SuperpixelParams:
    n: int = 300
    compactness: float = 10.0
    iters: int = 10
    location_sigma: float = 0.25  # fraction of the frame diagonal
    border_penalty: float = 0.5
    prior_floor: float = 0.1  # column weight is 1 / (prior + floor)
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if not self.prior_floor > 0:
            raise ValueError("prior_floor must be positive")


@dataclass
class SuperpixelSegmentation:
    labels: np.ndarray
    n: int
    centroids: np.ndarray  # (n, 2) as (x, y)
    sizes: np.ndarray
    mean_features: np.ndarray  # (n, 12), CHANNEL_KEYS order


@dataclass
class DecompositionResult:
    L: np.ndarray
    E: np.ndarray
    saliency_per_superpixel: np.ndarray
    converged: bool
    iterations: int
    objective: list[float]
    raw_objective: list[float]
    residual: float


def slic_segment(stack: ChannelStack, n_target: int = 300, compactness: float = 10.0, iters: int = 10):
    """k-means superpixels in (L, a, b, x, y) with connectivity enforcement."""
    h, w = stack.shape
    if n_target < 2:
        raise ValueError("n_target must be >= 2")
    if n_target > h * w:
        raise ValueError(f"n_target={n_target} exceeds pixel count {h * w}")
    # skimage min-max rescales the whole input before clustering.  Express
    # colors in the usual Lab magnitudes (L in [0, 100], a/b spanning 255) and
    # divide the compactness by the data range so the rescaling cancels out.
    lab = stack.stack(("L", "a", "b")) * np.array([100.0, 255.0, 255.0])
    span = float(lab.max() - lab.min())
    labels = slic(
        lab,
        n_segments=n_target,
        compactness=compactness / span if span > 0 else compactness,
        max_num_iter=iters,
        convert2lab=False,
        enforce_connectivity=True,
        start_label=0,
        channel_axis=-1,
    )
    # Relabel densely in raster order of first appearance.
    _, first = np.unique(labels.ravel(), return_index=True)
    order = np.argsort(first)
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[np.unique(labels.ravel())[order]] = np.arange(len(order))
    labels = remap[labels]
    n = len(order)

    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n).astype(np.float64)
    yy, xx = np.mgrid[0:h, 0:w]
    cx = np.bincount(flat, weights=xx.ravel(), minlength=n) / sizes
    cy = np.bincount(flat, weights=yy.ravel(), minlength=n) / sizes
    means = np.stack(
        [np.bincount(flat, weights=stack[k].ravel(), minlength=n) / sizes for k in CHANNEL_KEYS], axis=1
    )
    return SuperpixelSegmentation(labels, n, np.stack([cx, cy], axis=1), sizes, means)


def build_feature_matrix(seg: SuperpixelSegmentation, stack: ChannelStack) -> np.ndarray:
    """26 x n matrix: 12 channel means, 12 channel variances, normalized (x, y).

    Every row is min-max rescaled across superpixels (flat rows become 0).
    """
    h, w = stack.shape
    flat = seg.labels.ravel()
    rows = [seg.mean_features[:, i] for i in range(len(CHANNEL_KEYS))]
    for i, k in enumerate(CHANNEL_KEYS):
        sq = np.bincount(flat, weights=stack[k].ravel() ** 2, minlength=seg.n) / seg.sizes
        rows.append(np.maximum(sq - seg.mean_features[:, i] ** 2, 0.0))
    rows.append(seg.centroids[:, 0] / max(w - 1, 1))
    rows.append(seg.centroids[:, 1] / max(h - 1, 1))
    return np.stack([rescale(r) for r in rows])


def superpixel_priors(seg: SuperpixelSegmentation, stack: ChannelStack, params: SuperpixelParams = SuperpixelParams()):
    """A-priori salient-likelihood per superpixel in [0, 1].

    Product of a centered Gaussian location prior, color distinctness from the
    frame's mean Lab color, and a penalty for superpixels touching the border.
    """
    h, w = stack.shape
    sigma = params.location_sigma * math.hypot(w, h)
    d2 = (seg.centroids[:, 0] - (w - 1) / 2.0) ** 2 + (seg.centroids[:, 1] - (h - 1) / 2.0) ** 2
    location = np.exp(-d2 / (2.0 * sigma * sigma))

    lab_idx = [CHANNEL_KEYS.index(k) for k in ("L", "a", "b")]
    lab_means = seg.mean_features[:, lab_idx]
    frame_mean = stack.stack(("L", "a", "b")).reshape(-1, 3).mean(axis=0)
    color = rescale(np.linalg.norm(lab_means - frame_mean, axis=1))

    lab = seg.labels
    border_labels = np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))
    touches = np.zeros(seg.n)
    touches[border_labels] = 1.0
    background = 1.0 - params.border_penalty * touches
    return location * color * background


def _svt(X: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    """Singular value thresholding; returns the shrunk matrix and its nuclear norm."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (U[:, :k] * s[:k]) @ Vt[:k], float(s.sum())


def _group_shrink(X: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    scale = np.zeros_like(norms)
    nz = norms > thresholds
    scale[nz] = 1.0 - thresholds[nz] / norms[nz]
    return X * scale


def default_lambda(n: int, outlier_frac: float = 0.1) -> float:
    """Column-sparsity weight of outlier pursuit, 3 / (7 sqrt(frac * n))."""
    return 3.0 / (7.0 * math.sqrt(outlier_frac * max(n, 1)))


def smd_decompose(F: np.ndarray, weights: np.ndarray | None = None, solver: SolverParams = SolverParams()):
    """Low-rank + column-sparse decomposition of ``F`` by inexact ALM.

    Args:
        F: d x n feature matrix.
        weights: per-column penalty weights, non-negative (default all ones).
        solver: lambda, iteration cap and relative-residual tolerance.

    Each ALM step yields a feasible candidate ``(F - E_k, E_k)``.  The
    returned pair is the accepted candidate, which only changes when the
    objective does not increase, so ``objective`` is non-increasing.  The
    unfiltered candidate values are kept in ``raw_objective``.  ``converged``
    reports whether the ALM residual ``||F - L_k - E_k|| / ||F||`` reached
    ``tol`` within ``max_iters``.
    """
    F = np.asarray(F, dtype=np.float64)
    d, n = F.shape
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,):
        raise ValueError("one weight per column is required")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    lam = solver.lam if solver.lam is not None else default_lambda(n)

    normF = np.linalg.norm(F)
    if normF == 0.0:
        z = np.zeros_like(F)
        return DecompositionResult(z, z.copy(), np.zeros(n), True, 0, [0.0], [0.0], 0.0)

    def objective_at(E):
        return float(np.linalg.svd(F - E, compute_uv=False).sum() + lam * np.sum(weights * np.linalg.norm(E, axis=0)))

    spec_norm = np.linalg.norm(F, 2)
    col_dual = np.max(np.linalg.norm(F, axis=0) / np.maximum(lam * weights, 1e-12))
    Y = F / max(spec_norm, col_dual)
    mu = 1.25 / spec_norm
    mu_max = mu * 1e7

    E = np.zeros_like(F)
    best_E = E
    best_obj = objective_at(E)
    objective = [best_obj]
    raw = [best_obj]
    converged = False
    resid = 1.0
    it = 0
    for it in range(1, solver.max_iters + 1):
        L, _ = _svt(F - E + Y / mu, 1.0 / mu)
        E = _group_shrink(F - L + Y / mu, lam * weights / mu)
        R = F - L - E
        Y = Y + mu * R
        mu = min(mu * solver.mu_growth, mu_max)

        obj = objective_at(E)
        raw.append(obj)
        if obj <= best_obj:
            best_obj, best_E = obj, E
        objective.append(best_obj)
        resid = float(np.linalg.norm(R) / normF)
        if resid < solver.tol:
            converged = True
            break

    if not converged:
        log.warning("decomposition stopped after %d iterations, residual %.3g", it, resid)
    sal = rescale(np.linalg.norm(best_E, axis=0))
    return DecompositionResult(F - best_E, best_E, sal, converged, it, objective, raw, resid)


def superpixel_saliency(stack: ChannelStack, params: SuperpixelParams = SuperpixelParams()) -> np.ndarray:
    """Superpixel cue broadcast back to pixels, rescaled to [0, 1]."""
    seg = slic_segment(stack, params.n, params.compactness, params.iters)
    F = build_feature_matrix(seg, stack)
    if not F[: 2 * len(CHANNEL_KEYS)].any():
        # No appearance variation at all: only the centroid rows differ.
        return np.zeros(stack.shape)
    prior = superpixel_priors(seg, stack, params)
    weights = 1.0 / (rescale(prior) + params.prior_floor)
    res = smd_decompose(F, weights, params.solver)
    return rescale(res.saliency_per_superpixel[seg.labels])

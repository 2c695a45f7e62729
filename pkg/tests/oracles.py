"""Slow, direct reference implementations used only by the tests."""
from __future__ import annotations

import math

import numpy as np


def exact_mbd(img: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Minimum barrier distance by exhaustive enumeration of simple 4-connected paths.

    A path starts at the pixel and ends on its first seed.  Only usable on
    tiny rasters (the interior of a 5x5 border-seeded grid has 9 pixels).
    """
    h, w = img.shape
    out = np.full((h, w), np.inf)

    def dfs(i, j, hi, lo, visited):
        best = np.inf
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ni, nj = i + di, j + dj
            if not (0 <= ni < h and 0 <= nj < w) or (ni, nj) in visited:
                continue
            v = img[ni, nj]
            nhi, nlo = max(hi, v), min(lo, v)
            if nhi - nlo >= best:
                continue
            if seeds[ni, nj]:
                best = min(best, nhi - nlo)
            else:
                visited.add((ni, nj))
                best = min(best, dfs(ni, nj, nhi, nlo, visited))
                visited.discard((ni, nj))
        return best

    for i in range(h):
        for j in range(w):
            if seeds[i, j]:
                out[i, j] = 0.0
            else:
                out[i, j] = dfs(i, j, img[i, j], img[i, j], {(i, j)})
    return out


def brute_force_density(mask, t, xs, ys, ts, sigma_s, sigma_t) -> float:
    """Double sum over fixations after ``t`` and object pixels, no cutoff."""
    py, px = np.nonzero(mask)
    total = 0.0
    for fx, fy, ft in zip(xs, ys, ts):
        if ft <= t:
            continue
        g_t = math.exp(-((ft - t) ** 2) / (2.0 * sigma_t**2))
        for y, x in zip(py, px):
            total += g_t * math.exp(-((fx - x) ** 2 + (fy - y) ** 2) / (2.0 * sigma_s**2))
    return total / len(py)


def count_precision_recall(mask: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    tp = fp = fn = 0
    for m, g in zip(np.asarray(mask).ravel().tolist(), np.asarray(gt).ravel().tolist()):
        if m and g:
            tp += 1
        elif m:
            fp += 1
        elif g:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def count_mae(sal: np.ndarray, gt: np.ndarray) -> float:
    vals = [abs(float(s) - float(g)) for s, g in zip(np.asarray(sal).ravel(), np.asarray(gt).ravel())]
    return sum(vals) / len(vals)


def numeric_gradient(f, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.empty_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        fp = f()
        arr[idx] = old - eps
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * eps)
    return g


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def reference_objective(W_enc, b_enc, W_dec, b_dec, X, lam_w=0.001, lam_s=1.0, rho=0.05):
    """Plain numpy transcription of the sparse autoencoder objective."""
    targets = (X + 1.0) / 2.0
    hidden = 1.0 / (1.0 + np.exp(-(X @ W_enc.T + b_enc)))
    out = 1.0 / (1.0 + np.exp(-(hidden @ W_dec.T + b_dec)))
    recon = np.mean(np.sum((targets - out) ** 2, axis=1))
    decay = 0.5 * (np.sum(W_enc**2) + np.sum(W_dec**2))
    r = hidden.mean(axis=0)
    kl = np.sum(rho * np.log(rho / r) + (1 - rho) * np.log((1 - rho) / (1 - r)))
    return recon + lam_w * decay + lam_s * kl

from __future__ import annotations

import numpy as np

# Ranges below this are treated as flat; avoids blowing float noise up to [0, 1].
FLAT_RANGE = 1e-9


def rescale(x: np.ndarray, flat: float = FLAT_RANGE) -> np.ndarray:
    """Min-max rescale to [0, 1]; constant (flat) arrays map to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo = float(x.min()) if x.size else 0.0
    hi = float(x.max()) if x.size else 0.0
    if hi - lo <= flat:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))

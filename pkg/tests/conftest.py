import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vsod.dataset_io import FixationLog, ObjectMaskSet

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("VSOD_SEED", raising=False)


def blob_frame(h=64, w=96, box=(20, 40, 30, 60), color=(230, 30, 30), seed=0):
    """Textured gray-ish frame with one saturated rectangle; returns (rgb uint8, mask)."""
    r = np.random.default_rng(seed)
    img = (r.random((h, w, 3)) * 30 + 100).astype(np.uint8)
    y0, y1, x0, x1 = box
    img[y0:y1, x0:x1] = color
    mask = np.zeros((h, w), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return img, mask


def toy_annotation_video():
    """Three objects over three keyframes; object 1 is fixated."""
    shape = (30, 40)
    k1 = np.zeros(shape, np.int64)
    k1[5:12, 5:12] = 1
    k1[20:26, 30:36] = 2
    k1[2:5, 30:38] = 3
    k2 = np.zeros(shape, np.int64)
    k2[5:12, 5:9] = 1
    k2[5:12, 11:14] = 1  # occluded: object 1 split in two
    k2[20:26, 30:36] = 2
    k3 = np.zeros(shape, np.int64)
    k3[20:26, 30:36] = 2  # object 1 left the frame
    masks = ObjectMaskSet([(1, k1), (16, k2), (31, k3)])
    rows = []
    for kf_time in (0.0, 0.5, 1.0):
        for i in range(10):
            rows.append((8.0, 8.0, kf_time + 0.01 * (i + 1), i))
    return masks, FixationLog.from_records(rows)

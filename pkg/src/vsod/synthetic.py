"""Synthetic video suite with known salient objects.

Each video shows a textured, static background, one static distractor patch
and one high-contrast object moving along a bouncing path.  Only the moving
object is salient: it is what the simulated fixations land on, and it is the
only region in the ground-truth masks.  The generator also writes the object
label maps and fixations so the annotation stage can be exercised.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset_io import FixationLog, write_fixations, write_label_map, write_mask


@dataclass(frozen=True)
class SuiteParams:
    n_videos: int = 5
    n_frames: int = 60
    width: int = 200
    height: int = 112
    fps: float = 30.0
    keyframe_stride: int = 15
    seed: int = 7
    object_radius: tuple[float, float] = (12.0, 16.0)
    speed: tuple[float, float] = (1.5, 2.5)  # px / frame
    fixations_per_frame: int = 6
    texture_amp: float = 0.25
    texture_sigma: float = 1.5


def _texture(rng: np.random.Generator, h: int, w: int, amp: float, sigma: float) -> np.ndarray:
    base = rng.uniform(0.35, 0.6, size=3)
    noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=sigma)
    noise /= np.abs(noise).max() + 1e-12
    tint = ndimage.gaussian_filter(rng.standard_normal((h, w, 3)), sigma=(4 * sigma, 4 * sigma, 0))
    tint /= np.abs(tint).max() + 1e-12
    grad = np.linspace(-0.05, 0.05, w)[None, :, None]
    return np.clip(base + amp * noise[..., None] + 0.3 * amp * tint + grad, 0.0, 1.0)


def _saturated_color(rng: np.random.Generator, avoid: np.ndarray) -> np.ndarray:
    while True:
        c = np.zeros(3)
        c[rng.integers(3)] = rng.uniform(0.85, 1.0)
        c[rng.integers(3)] += rng.uniform(0.0, 0.3)
        c = np.clip(c, 0.0, 1.0)
        if np.abs(c - avoid).sum() > 0.8:
            return c


def _disk(h: int, w: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def generate_video(rng: np.random.Generator, params: SuiteParams):
    """Frames (uint8), object label maps (1 = mover, 2 = distractor) and fixations."""
    h, w = params.height, params.width
    bg = _texture(rng, h, w, params.texture_amp, params.texture_sigma)
    mean_bg = bg.reshape(-1, 3).mean(axis=0)

    # Static distractor: a rectangle of moderate contrast.
    dw, dh = int(rng.integers(16, 24)), int(rng.integers(12, 18))
    side = rng.integers(2)
    dx0 = int(rng.integers(12, 40)) if side == 0 else int(rng.integers(w - 40 - dw, w - 12 - dw))
    dy0 = int(rng.integers(12, h - 12 - dh))
    distractor = np.zeros((h, w), dtype=bool)
    distractor[dy0:dy0 + dh, dx0:dx0 + dw] = True
    dcolor = np.clip(mean_bg + rng.choice([-1, 1], size=3) * rng.uniform(0.08, 0.14, size=3), 0, 1)

    color = _saturated_color(rng, mean_bg)
    rx = float(rng.uniform(*params.object_radius))
    ry = rx * float(rng.uniform(0.75, 1.0))
    x, y = float(rng.uniform(w * 0.35, w * 0.65)), float(rng.uniform(h * 0.35, h * 0.65))
    angle = float(rng.uniform(0, 2 * np.pi))
    speed = float(rng.uniform(*params.speed))
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)

    frames, labels, centers = [], [], []
    for _ in range(params.n_frames):
        img = bg.copy()
        img[distractor] = dcolor
        obj = _disk(h, w, x, y, rx, ry)
        img[obj] = color
        lab = np.zeros((h, w), dtype=np.uint16)
        lab[distractor & ~obj] = 2
        lab[obj] = 1
        frames.append(np.clip(np.rint(img * 255), 0, 255).astype(np.uint8))
        labels.append(lab)
        centers.append((x, y))
        x, y = x + vx, y + vy
        if not rx + 2 <= x <= w - rx - 3:
            vx = -vx
            x = float(np.clip(x, rx + 2, w - rx - 3))
        if not ry + 2 <= y <= h - ry - 3:
            vy = -vy
            y = float(np.clip(y, ry + 2, h - ry - 3))

    fix = []
    for t, (cx, cy) in enumerate(centers):
        for s in range(params.fixations_per_frame):
            fx = float(np.clip(cx + rng.normal(0, rx / 3), 0, w - 1))
            fy = float(np.clip(cy + rng.normal(0, ry / 3), 0, h - 1))
            fix.append((fx, fy, (t + (s + 0.5) / params.fixations_per_frame) / params.fps, s))
    fix.sort(key=lambda r: (r[2], r[3]))
    return frames, labels, FixationLog.from_records(fix)


def generate_suite(root: Path | str, params: SuiteParams = SuiteParams()) -> list[Path]:
    """Write ``n_videos`` synthetic videos under ``root``; returns their directories."""
    root = Path(root)
    rng = np.random.default_rng(params.seed)
    out = []
    for v in range(params.n_videos):
        vid = f"synth_{v:02d}"
        vdir = root / vid
        for sub in ("frames", "objects", "gt"):
            (vdir / sub).mkdir(parents=True, exist_ok=True)
        frames, labels, fix = generate_video(rng, params)
        for i, f in enumerate(frames, start=1):
            Image.fromarray(f).save(vdir / "frames" / f"frame_{i:06d}.png")
        for i in range(0, params.n_frames, params.keyframe_stride):
            write_label_map(vdir / "objects" / f"labels_{i + 1:06d}.png", labels[i])
            write_mask(vdir / "gt" / f"mask_{i + 1:06d}.png", labels[i] == 1)
        write_fixations(vdir / "fixations.csv", fix)
        (vdir / "meta.json").write_text(json.dumps({"fps": params.fps, "video_id": vid}))
        out.append(vdir)
    return out

"""Loading and saving of frames, fixations, label maps and saliency maps.

On-disk layout of a dataset root::

    <video_id>/frames/frame_000001.png   decoded RGB frames, filename order
    <video_id>/meta.json                 optional {"fps": 30, "video_id": ...}
    <video_id>/fixations.csv             header x,y,t,subject (pixels, seconds)
    <video_id>/objects/labels_000015.png 16-bit object label maps (annotate input)
    <video_id>/gt/mask_000015.png        binary salient-object masks

Saliency output goes to ``<out>/<video_id>/sal_000001.png`` as 8-bit grayscale.
Containers (mp4 and friends) are not read; split them into frames first, e.g.
``ffmpeg -i clip.mp4 frames/frame_%06d.png``.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage
from skimage.transform import resize

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MIN_REGION_PX = 16
_NUM_RE = re.compile(r"(\d+)(?=\.[^.]+$)")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class FrameSequence:
    video_id: str
    frames: tuple[np.ndarray, ...]
    fps: float = 30.0
    original_size: tuple[int, int] = (0, 0)  # (width, height)
    numbers: tuple[int, ...] = ()  # source frame numbers; default 1..n

    def __post_init__(self):
        if len(self.frames) < 1:
            raise DataError(f"{self.video_id}: no frames")
        if not self.fps > 0:
            raise DataError(f"{self.video_id}: fps must be positive, got {self.fps}")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise DataError(f"{self.video_id}: frame {i} has shape {f.shape}, expected {shape}")
            f.setflags(write=False)
        if not self.numbers:
            object.__setattr__(self, "numbers", tuple(range(1, len(self.frames) + 1)))
        if len(self.numbers) != len(self.frames):
            raise DataError(f"{self.video_id}: {len(self.numbers)} frame numbers for {len(self.frames)} frames")
        if self.original_size == (0, 0):
            object.__setattr__(self, "original_size", (shape[1], shape[0]))

    def __len__(self) -> int:
        return len(self.frames)

    def time_of(self, number: int) -> float:
        """Display time in seconds of the frame with source number ``number``."""
        return self.numbers.index(number) / self.fps

    @property
    def size(self) -> tuple[int, int]:
        """(width, height) of the stored frames."""
        h, w = self.frames[0].shape[:2]
        return (w, h)


@dataclass
class FixationLog:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    subject: np.ndarray
    n_clamped: int = 0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def records(self) -> list[tuple[float, float, float, int]]:
        return [(float(a), float(b), float(c), int(d)) for a, b, c, d in zip(self.x, self.y, self.t, self.subject)]

    @classmethod
    def from_records(cls, records) -> "FixationLog":
        arr = np.asarray(list(records), dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].astype(np.int64))


@dataclass
class ObjectMaskSet:
    """Keyframe label maps of one video; 0 is background, k > 0 is object k."""

    keyframes: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def labels(self) -> list[int]:
        found: set[int] = set()
        for _, lab in self.keyframes:
            found.update(int(v) for v in np.unique(lab) if v != 0)
        return sorted(found)


def _numbered_files(directory: Path, suffixes=IMAGE_SUFFIXES) -> list[Path]:
    files = [p for p in directory.iterdir() if p.suffix.lower() in suffixes and _NUM_RE.search(p.name)]
    return sorted(files, key=lambda p: (int(_NUM_RE.search(p.name).group(1)), p.name))


def frame_number(path: Path | str) -> int:
    m = _NUM_RE.search(Path(path).name)
    if m is None:
        raise DataError(f"no frame number in filename {Path(path).name}")
    return int(m.group(1))


def read_rgb(path: Path | str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {Path(path).name}: {exc}") from exc


def load_video(path: Path | str) -> FrameSequence:
    """Load a directory of numbered frames (or a video directory with ``frames/``)."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"not a directory: {path}")
    frame_dir = path / "frames" if (path / "frames").is_dir() else path
    meta = {}
    if (path / "meta.json").is_file():
        meta = json.loads((path / "meta.json").read_text())
    files = _numbered_files(frame_dir)
    if not files:
        raise DataError(f"no frame images in {frame_dir}")
    frames = []
    for f in files:
        img = read_rgb(f)
        if frames and img.shape != frames[0].shape:
            raise DataError(
                f"frame {f.name} has size {img.shape[1]}x{img.shape[0]}, "
                f"expected {frames[0].shape[1]}x{frames[0].shape[0]}"
            )
        frames.append(img)
    h, w = frames[0].shape[:2]
    return FrameSequence(
        video_id=str(meta.get("video_id", path.name)),
        frames=tuple(frames),
        fps=float(meta.get("fps", 30.0)),
        original_size=(w, h),
        numbers=tuple(frame_number(f) for f in files),
    )


def resize_max_side(frame: np.ndarray, max_side: int = 400) -> np.ndarray:
    """Bilinear downscale so the longer side equals ``max_side``; never upscales."""
    if max_side < 1:
        raise ValueError("max_side must be >= 1")
    h, w = frame.shape[:2]
    longest = max(h, w)
    if longest <= max_side:
        return frame
    scale = max_side / longest
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    if h >= w:
        new_h = max_side
    else:
        new_w = max_side
    out = resize(frame, (new_h, new_w) + frame.shape[2:], order=1, preserve_range=True, anti_aliasing=False)
    if frame.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(frame.dtype)


def load_fixations(path: Path | str, size: tuple[int, int] | None = None) -> FixationLog:
    """Parse a ``x,y,t,subject`` CSV; coordinates are clamped into ``size`` (w, h)."""
    path = Path(path)
    rows: list[tuple[float, float, float, int]] = []
    linenos: list[int] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return FixationLog(*(np.zeros(0) for _ in range(3)), np.zeros(0, dtype=np.int64))
        if [h.strip() for h in header] != ["x", "y", "t", "subject"]:
            raise DataError(f"{path.name}: line 1: expected header x,y,t,subject, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path.name}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                x, y, t = (float(c) for c in row[:3])
                subj = int(row[3])
            except ValueError as exc:
                raise DataError(f"{path.name}: line {lineno}: {exc}") from exc
            if not all(np.isfinite((x, y, t))):
                raise DataError(f"{path.name}: line {lineno}: non-finite value")
            rows.append((x, y, t, subj))
            linenos.append(lineno)

    arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
    fx, fy, ft = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
    subj = arr[:, 3].astype(np.int64)

    last: dict[int, float] = {}
    for lineno, s, t in zip(linenos, subj, ft):
        if t < last.get(int(s), -np.inf):
            raise DataError(f"{path.name}: line {lineno}: time decreases for subject {s}")
        last[int(s)] = t

    n_clamped = 0
    if size is not None and len(fx):
        w, h = size
        cx = np.clip(fx, 0, w - 1)
        cy = np.clip(fy, 0, h - 1)
        n_clamped = int(np.count_nonzero((cx != fx) | (cy != fy)))
        fx, fy = cx, cy
        if n_clamped:
            log.warning("%s: clamped %d out-of-frame fixations", path.name, n_clamped)
    return FixationLog(fx, fy, ft, subj, n_clamped)


def write_fixations(path: Path | str, fix: FixationLog) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "t", "subject"])
        for rec in fix.records:
            w.writerow([repr(rec[0]), repr(rec[1]), repr(rec[2]), rec[3]])


def suppress_small_regions(labels: np.ndarray, min_px: int = MIN_REGION_PX) -> np.ndarray:
    """Zero out connected pieces of any label smaller than ``min_px`` pixels."""
    out = labels.copy()
    for k in np.unique(labels):
        if k == 0:
            continue
        comp, n = ndimage.label(labels == k, structure=np.ones((3, 3)))
        if n == 0:
            continue
        sizes = np.bincount(comp.ravel())
        small = np.flatnonzero(sizes < min_px)
        small = small[small != 0]
        if small.size:
            out[np.isin(comp, small)] = 0
    return out


def read_label_map(path: Path | str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode label map {Path(path).name}: {exc}") from exc
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr.astype(np.int64)


def write_label_map(path: Path | str, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("labels must fit in 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_object_masks(directory: Path | str) -> ObjectMaskSet:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"no label-map directory {directory}")
    keyframes = []
    for f in _numbered_files(directory, (".png",)):
        keyframes.append((frame_number(f), suppress_small_regions(read_label_map(f))))
    return ObjectMaskSet(keyframes)


def write_mask(path: Path | str, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


def read_mask(path: Path | str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode mask {Path(path).name}: {exc}") from exc
    return arr > 127


def to_uint8(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("saliency map contains non-finite values")
    return np.clip(np.rint(v * 255.0), 0, 255).astype(np.uint8)


def write_saliency_map(path: Path | str, values: np.ndarray) -> None:
    """Write a [0, 1] map as 8-bit grayscale PNG."""
    Image.fromarray(to_uint8(values)).save(path)


def read_saliency_map(path: Path | str) -> np.ndarray:
    """Read an 8-bit grayscale map back into [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode saliency map {Path(path).name}: {exc}") from exc
    return arr.astype(np.float64) / 255.0


def list_videos(root: Path | str) -> list[Path]:
    """Video directories under a dataset root, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    vids = sorted(p for p in root.iterdir() if p.is_dir() and (p / "frames").is_dir())
    return vids

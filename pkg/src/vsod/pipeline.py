"""End-to-end orchestration: cue extraction, training, inference, post-processing."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from skimage.transform import resize

from . import __version__
from .config import PipelineConfig
from .cue_object import FileFixationMaps, FileProposals, object_saliency
from .cue_pixel import mbd_sum, pixel_saliency
from .cue_superpixel import superpixel_saliency
from .dataset_io import DataError, list_videos, load_video, resize_max_side, write_saliency_map
from .encoder import CueMaps, StackedEncoder, infer_frame, sample_training_set, train_stack
from .features import FlowField, build_channel_stack, compute_flow
from .postproc import postprocess_video

log = logging.getLogger(__name__)

STAGES = ("optical_flow", "object_proposal", "pixel", "superpixel", "object", "encode_post", "total")


@dataclass
class VideoCues:
    video_id: str
    numbers: tuple[int, ...]
    original_hw: tuple[int, int]
    cues: list[CueMaps]
    flows: list[FlowField]
    timings: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cues)


def _f32(a: np.ndarray) -> np.ndarray:
    # Cached and freshly computed cues must be bit-identical.
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def extract_video(video_dir: Path, config: PipelineConfig) -> VideoCues:
    """Compute the three cue maps and forward flow of every frame of one video."""
    seq = load_video(video_dir)
    frames = [resize_max_side(f, config.get("io.max_side")) for f in seq.frames]
    timings = dict.fromkeys(STAGES, 0.0)
    flow_params, mbd_params = config.flow_params(), config.mbd_params()
    sp_params, obj_params = config.superpixel_params(), config.object_params()
    files = config.get("obj.provider") == "files"
    prop_src = FileProposals(video_dir) if files else None
    fix_src = FileFixationMaps(video_dir) if files else None

    flows = []
    for t in range(len(frames)):
        t0 = time.perf_counter()
        flows.append(compute_flow(frames[t], frames[t + 1] if t + 1 < len(frames) else None, flow_params))
        timings["optical_flow"] += time.perf_counter() - t0

    cues = []
    for t, frame in enumerate(frames):
        try:
            stack, _ = build_channel_stack(frame, frames[t - 1] if t else None, None, flows[t])
            t0 = time.perf_counter()
            raw = mbd_sum(stack, mbd_params)
            t1 = time.perf_counter()
            pix = pixel_saliency(stack, mbd_params, raw)
            t2 = time.perf_counter()
            sup = superpixel_saliency(stack, sp_params)
            t3 = time.perf_counter()
            if files:
                num = seq.numbers[t]
                props = prop_src.load(num, stack.shape, obj_params.k)
                fix = fix_src.load(num, stack.shape)
                obj = object_saliency(stack, obj_params.k, obj_params, proposals=lambda s, k: props,
                                      fixations=lambda s: fix)
            else:
                obj = object_saliency(stack, obj_params.k, obj_params, raw)
            t4 = time.perf_counter()
        except DataError as exc:
            raise DataError(f"{seq.video_id} frame {seq.numbers[t]}: {exc}") from exc
        # The raw MBD sum feeds both the pixel cue and the proposals; book it under proposals.
        timings["object_proposal"] += t1 - t0
        timings["pixel"] += t2 - t1
        timings["superpixel"] += t3 - t2
        timings["object"] += t4 - t3
        cues.append(CueMaps(_f32(pix), _f32(sup), _f32(obj)))
    flows = [FlowField(_f32(f.u), _f32(f.v)) for f in flows]
    h, w = seq.frames[0].shape[:2]
    return VideoCues(seq.video_id, seq.numbers, (h, w), cues, flows, timings)


def _cache_path(cache_dir: Path, video_dir: Path, config: PipelineConfig) -> Path:
    return cache_dir / video_dir.name / f"cues_{config.extraction_hash()}.npz"


def save_cues(path: Path, vc: VideoCues) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        video_id=np.array(vc.video_id),
        numbers=np.array(vc.numbers),
        original_hw=np.array(vc.original_hw),
        pixel=np.stack([c.pixel for c in vc.cues]).astype(np.float32),
        superpixel=np.stack([c.superpixel for c in vc.cues]).astype(np.float32),
        object=np.stack([c.object for c in vc.cues]).astype(np.float32),
        u=np.stack([f.u for f in vc.flows]).astype(np.float32),
        v=np.stack([f.v for f in vc.flows]).astype(np.float32),
    )


def load_cues(path: Path) -> VideoCues:
    with np.load(path) as z:
        cues = [CueMaps(*(z[k][i].astype(np.float64) for k in ("pixel", "superpixel", "object")))
                for i in range(z["pixel"].shape[0])]
        flows = [FlowField(z["u"][i].astype(np.float64), z["v"][i].astype(np.float64)) for i in range(z["u"].shape[0])]
        return VideoCues(str(z["video_id"]), tuple(int(n) for n in z["numbers"]),
                         tuple(int(n) for n in z["original_hw"]), cues, flows)


def _extract_one(args) -> VideoCues:
    video_dir, config_data, cache_dir = args
    config = PipelineConfig(config_data)
    if cache_dir is not None:
        path = _cache_path(cache_dir, video_dir, config)
        if path.is_file():
            log.info("%s: cues from cache", video_dir.name)
            return load_cues(path)
    vc = extract_video(video_dir, config)
    if cache_dir is not None:
        save_cues(path, vc)
    return vc


def extract_dataset(dataset_dir: Path, config: PipelineConfig, cache_dir: Path | None = None, jobs: int = 1):
    videos = list_videos(dataset_dir)
    if not videos:
        raise DataError(f"no videos under {dataset_dir}")
    tasks = [(v, config.data, cache_dir) for v in videos]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_extract_one, tasks))
    return [_extract_one(t) for t in tasks]


def train_model(videos: list[VideoCues], config: PipelineConfig) -> StackedEncoder:
    hp = config.train_params()
    samples = sample_training_set([(v.cues, v.flows) for v in videos], hp.n_samples, hp.seed,
                                  config.window, config.enabled)
    return train_stack(samples, hp, config.window, config.enabled)


def infer_video(model: StackedEncoder, vc: VideoCues, config: PipelineConfig) -> list[np.ndarray]:
    maps = [infer_frame(model, vc.cues, vc.flows, t) for t in range(len(vc))]
    maps = postprocess_video(maps, config.postproc_params())
    h, w = vc.original_hw
    if maps and maps[0].shape != (h, w):
        maps = [np.clip(resize(m, (h, w), order=1, anti_aliasing=False), 0.0, 1.0) for m in maps]
    return maps


def write_maps(out_dir: Path, vc: VideoCues, maps: list[np.ndarray]) -> None:
    vdir = out_dir / vc.video_id
    vdir.mkdir(parents=True, exist_ok=True)
    for num, m in zip(vc.numbers, maps):
        write_saliency_map(vdir / f"sal_{num:06d}.png", m)


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_pipeline(
    config: PipelineConfig,
    dataset_dir: Path | str,
    out_dir: Path | str,
    model_path: Path | str | None = None,
    jobs: int = 1,
    cache_dir: Path | str | None = None,
) -> dict:
    """Extract, train when no model exists at ``model_path``, infer and post-process.

    Writes ``<out>/<video>/sal_*.png``, ``<out>/manifest.json`` and, when the
    model is trained here, the model artifact (default ``<out>/model.json``).
    Returns the manifest.
    """
    dataset_dir, out_dir = Path(dataset_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = Path(cache_dir) if cache_dir is not None else out_dir / "cache"
    model_path = Path(model_path) if model_path is not None else out_dir / "model.json"

    t_start = time.perf_counter()
    videos = extract_dataset(dataset_dir, config, cache, jobs)

    t0 = time.perf_counter()
    if model_path.is_file():
        model = StackedEncoder.load(model_path)
        if model.window != config.window or tuple(model.cues_enabled) != config.enabled:
            log.warning("model at %s was trained with window=%d cues=%s", model_path, model.window, model.cues_enabled)
        trained = False
    else:
        model = train_model(videos, config)
        model_path.parent.mkdir(parents=True, exist_ok=True)
        model.save(model_path)
        trained = True
    t_train = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_frames = 0
    for vc in videos:
        maps = infer_video(model, vc, config)
        write_maps(out_dir, vc, maps)
        n_frames += len(maps)
    t_infer = time.perf_counter() - t0

    manifest = {
        "version": __version__,
        "config": config.data,
        "config_hash": config.hash(),
        "seed": config.get("train.seed"),
        "model_path": str(model_path),
        "model_hash": file_sha256(model_path),
        "model_trained": trained,
        "videos": [{"video_id": v.video_id, "frames": len(v)} for v in videos],
        "n_frames": n_frames,
        "seconds": {"train": t_train, "infer": t_infer, "total": time.perf_counter() - t_start},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def profile(dataset_dir: Path | str, config: PipelineConfig, model: StackedEncoder | None = None) -> dict:
    """Seconds per frame for each stage, measured on a fresh (uncached) extraction.

    Without a model, a small one is trained first (not timed) so the
    encode+post-processing stage can be measured.
    """
    videos = list_videos(dataset_dir)
    if not videos:
        raise DataError(f"no videos under {dataset_dir}")
    totals = dict.fromkeys(STAGES, 0.0)
    vcs = []
    t_all = time.perf_counter()
    for v in videos:
        vc = extract_video(v, config)
        vcs.append(vc)
        for k, s in vc.timings.items():
            totals[k] += s
    extract_time = time.perf_counter() - t_all
    if model is None:
        cfg = PipelineConfig(json.loads(json.dumps(config.data)))
        n_pix = sum(c.pixel.size for vc in vcs for c in vc.cues)
        cfg.data["train"]["n_samples"] = max(1000, min(20_000, n_pix))
        cfg.data["train"]["epochs"] = 2
        model = train_model(vcs, cfg)
    t0 = time.perf_counter()
    for vc in vcs:
        infer_video(model, vc, config)
    totals["encode_post"] = time.perf_counter() - t0
    totals["total"] = extract_time + totals["encode_post"]
    n = sum(len(vc) for vc in vcs)
    return {k: totals[k] / n for k in STAGES} | {"frames": n}

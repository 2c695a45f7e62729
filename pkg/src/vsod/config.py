"""Pipeline configuration: a nested JSON document addressed with dotted keys."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .annotate import DensityParams
from .cue_object import ObjectParams
from .cue_pixel import MbdParams
from .cue_superpixel import SolverParams, SuperpixelParams
from .encoder import CUE_NAMES, TrainParams
from .features import FlowParams
from .postproc import PostprocParams

DEFAULTS: dict = {
    "io": {"max_side": 400},
    "flow": {"alpha": 15.0, "levels": 4, "iters": 100},
    "mbd": {"passes": 3, "gamma": 0.02, "border_band_frac": 0.02},
    "sp": {"n": 300, "compactness": 10.0, "prior_floor": 0.1},
    "smd": {"lambda": None, "max_iters": 200, "tol": 1e-6},
    "obj": {"k": 50, "provider": "builtin", "proposal_source": "weighted"},
    "train": {
        "n_samples": 500_000,
        "seed": 0,
        "epochs": 100,
        "lr": 0.1,
        "batch": 256,
        "lambda_w": 0.001,
        "lambda_s": 1.0,
        "rho": 0.05,
        "momentum": 0.9,
        "lr_decay": 0.5,
        "decay_every": 25,
    },
    "post": {
        "temporal_width": 3,
        "temporal_sigma": 0.75,
        "sigmoid_slope": 10.0,
        "sigmoid_center": 0.5,
        "min_component_frac": 0.001,
    },
    "annotate": {"sigma_s_frac": 0.03, "sigma_t": 0.1, "score_threshold": 50.0, "keyframe_stride": 15},
    "window": {"w": 1},
    "cues": {"enabled": list(CUE_NAMES)},
}

# Keys that change the per-frame cue maps (and hence the cache entry).
EXTRACTION_SECTIONS = ("io", "flow", "mbd", "sp", "smd", "obj")


class ConfigError(ValueError):
    """Invalid configuration value or unknown key."""


def _merge(base: dict, override: dict, prefix: str = "") -> None:
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be an object")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value


@dataclass
class PipelineConfig:
    data: dict

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls(copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict, env: bool = True) -> "PipelineConfig":
        cfg = cls.default()
        _merge(cfg.data, d)
        if env and os.environ.get("VSOD_SEED"):
            try:
                cfg.data["train"]["seed"] = int(os.environ["VSOD_SEED"])
            except ValueError as exc:
                raise ConfigError(f"VSOD_SEED must be an integer, got {os.environ['VSOD_SEED']!r}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Path | str | None, env: bool = True) -> "PipelineConfig":
        if path is None:
            return cls.from_dict({}, env)
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d.pop("_comment", None)
        return cls.from_dict(d, env)

    def get(self, dotted: str):
        node = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[part]
        return node

    def set(self, dotted: str, value) -> None:
        parts = dotted.split(".")
        node = self.data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[part]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = value
        self.validate()

    def validate(self) -> None:
        d = self.data
        enabled = d["cues"]["enabled"]
        if not isinstance(enabled, list) or not enabled or any(c not in CUE_NAMES for c in enabled):
            raise ConfigError(f"cues.enabled must be a non-empty subset of {list(CUE_NAMES)}, got {enabled!r}")
        w = d["window"]["w"]
        if not isinstance(w, int) or isinstance(w, bool) or w < 0:
            raise ConfigError(f"window.w must be a non-negative integer, got {w!r}")
        if d["obj"]["provider"] not in ("builtin", "files"):
            raise ConfigError("obj.provider must be 'builtin' or 'files'")
        if d["obj"]["proposal_source"] not in ("weighted", "raw"):
            raise ConfigError("obj.proposal_source must be 'weighted' or 'raw'")
        for key in ("train.n_samples", "train.epochs", "train.batch", "obj.k", "sp.n", "io.max_side"):
            v = self.get(key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v!r}")
        if not isinstance(d["train"]["seed"], int):
            raise ConfigError("train.seed must be an integer")
        try:
            self.postproc_params()
            self.superpixel_params()
            self.mbd_params()
            self.flow_params()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def extraction_hash(self) -> str:
        part = {k: self.data[k] for k in EXTRACTION_SECTIONS}
        return hashlib.sha256(json.dumps(part, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def window(self) -> int:
        return int(self.data["window"]["w"])

    @property
    def enabled(self) -> tuple[str, ...]:
        return tuple(c for c in CUE_NAMES if c in self.data["cues"]["enabled"])

    def flow_params(self) -> FlowParams:
        f = self.data["flow"]
        return FlowParams(float(f["alpha"]), int(f["levels"]), int(f["iters"]))

    def mbd_params(self) -> MbdParams:
        m = self.data["mbd"]
        return MbdParams(passes=int(m["passes"]), gamma=float(m["gamma"]), border_band_frac=float(m["border_band_frac"]))

    def superpixel_params(self) -> SuperpixelParams:
        s, m = self.data["sp"], self.data["smd"]
        solver = SolverParams(lam=m["lambda"], max_iters=int(m["max_iters"]), tol=float(m["tol"]))
        return SuperpixelParams(
            n=int(s["n"]), compactness=float(s["compactness"]), prior_floor=float(s["prior_floor"]), solver=solver
        )

    def object_params(self) -> ObjectParams:
        return ObjectParams(k=int(self.data["obj"]["k"]), source=self.data["obj"]["proposal_source"])

    def train_params(self) -> TrainParams:
        t = self.data["train"]
        return TrainParams(
            n_samples=int(t["n_samples"]), seed=int(t["seed"]), epochs=int(t["epochs"]), lr=float(t["lr"]),
            lr_decay=float(t["lr_decay"]), decay_every=int(t["decay_every"]), momentum=float(t["momentum"]),
            batch=int(t["batch"]), lambda_w=float(t["lambda_w"]), lambda_s=float(t["lambda_s"]), rho=float(t["rho"]),
        )

    def postproc_params(self) -> PostprocParams:
        p = self.data["post"]
        return PostprocParams(
            int(p["temporal_width"]), float(p["temporal_sigma"]), float(p["sigmoid_slope"]),
            float(p["sigmoid_center"]), float(p["min_component_frac"]),
        )

    def density_params(self) -> DensityParams:
        a = self.data["annotate"]
        return DensityParams(float(a["sigma_s_frac"]), float(a["sigma_t"]), float(a["score_threshold"]),
                             int(a["keyframe_stride"]))

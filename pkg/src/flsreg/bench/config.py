"""Experiment configuration (TOML, schema version 1).

Example::

    version = 1
    name = "noise_sweep"
    methods = ["fls", "fls-icp"]   # fls | fls-icp | icp | fls-scale | fls-icp-scale
    trials = 1                     # trials per object and grid cell
    seed = 0
    timing = true                  # false leaves time_s empty so reruns are byte-identical
    workers = 1                    # capped by $FLSREG_MAX_WORKERS

    [objects]
    source = "primitive"           # "primitive" or "files"
    count = 50                     # number of primitive objects
    paths = []                     # files/globs (relative to this file) when source = "files"
    points = [1024]                # grid axis: points sampled per object
    resample_target = false        # target drawn from a second, independent surface sample

    [perturbation]
    noise_sigma = [0.01, 0.02]     # grid axis
    angle_deg = [[-90, 90]]        # grid axis; [lo, hi] is a uniform range, a number is an exact angle
    translation = [1.0, 2.0]       # per-axis uniform range
    scale = [2.0, 5.0]             # optional
    shuffle = true

    [partial]                      # optional: target is a multi-view partial scan
    views = 3
    keep_points = 512

    [fls]
    order = 4                      # highest basis index per dimension
    max_iterations = 100

    [icp]
    max_iterations = 50
    tolerance = 1e-10

    [scale]
    max_scale = 10.0
    max_pairs = 2000000
"""

from __future__ import annotations

import glob
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "METHODS", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
METHODS = ("fls", "fls-icp", "icp", "fls-scale", "fls-icp-scale")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    methods: list[str] = field(default_factory=lambda: ["fls"])
    trials: int = 1
    seed: int = 0
    timing: bool = True
    workers: int = 1
    object_source: str = "primitive"
    object_count: int = 10
    object_paths: list[Path] = field(default_factory=list)
    points: list[int] = field(default_factory=lambda: [1024])
    resample_target: bool = False
    noise_sigma: list[float] = field(default_factory=lambda: [0.0])
    angles_deg: list[tuple[float, float]] = field(default_factory=lambda: [(-90.0, 90.0)])
    translation: tuple[float, float] = (1.0, 2.0)
    scale: tuple[float, float] | None = None
    shuffle: bool = True
    partial_views: int = 0
    partial_keep: int = 512
    fls_order: int = 4
    fls_max_iterations: int = 100
    icp_max_iterations: int = 50
    icp_tolerance: float = 1e-10
    max_scale: float = 10.0
    max_pairs: int = 2_000_000

    def validate(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown or missing methods {bad}; choose from {list(METHODS)}")
        if self.trials < 1 or self.workers < 1:
            raise ConfigError("trials and workers must be at least 1")
        if self.object_source not in ("primitive", "files"):
            raise ConfigError("objects.source must be 'primitive' or 'files'")
        if self.object_source == "files":
            if not self.object_paths:
                raise ConfigError("objects.paths matched no files")
            missing = [str(p) for p in self.object_paths if not p.is_file()]
            if missing:
                raise ConfigError(f"missing input files: {missing}")
        elif self.object_count < 1:
            raise ConfigError("objects.count must be at least 1")
        if not self.points or min(self.points) < 3:
            raise ConfigError("objects.points must list counts of at least 3")
        if not self.noise_sigma or min(self.noise_sigma) < 0:
            raise ConfigError("perturbation.noise_sigma must list nonnegative values")
        for lo, hi in self.angles_deg:
            if lo > hi or lo < -180 or hi > 180:
                raise ConfigError(f"angle range [{lo}, {hi}] must be ordered and within [-180, 180]")
        if self.translation[0] > self.translation[1]:
            raise ConfigError("perturbation.translation must be ordered")
        if self.scale is not None and not 0 < self.scale[0] <= self.scale[1]:
            raise ConfigError("perturbation.scale must be positive and ordered")
        if self.partial_views < 0 or self.partial_keep < 3:
            raise ConfigError("partial.views must be >= 0 and partial.keep_points >= 3")

    def max_workers(self) -> int:
        cap = os.environ.get("FLSREG_MAX_WORKERS")
        n = self.workers
        if cap:
            try:
                n = min(n, max(1, int(cap)))
            except ValueError:
                raise ConfigError(f"FLSREG_MAX_WORKERS must be an integer, got {cap!r}") from None
        return n

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "methods": list(self.methods),
            "trials": self.trials,
            "seed": self.seed,
            "timing": self.timing,
            "objects": {
                "source": self.object_source,
                "count": self.object_count,
                "paths": [p.name for p in self.object_paths],
                "points": list(self.points),
                "resample_target": self.resample_target,
            },
            "perturbation": {
                "noise_sigma": list(self.noise_sigma),
                "angle_deg": [list(a) for a in self.angles_deg],
                "translation": list(self.translation),
                "scale": None if self.scale is None else list(self.scale),
                "shuffle": self.shuffle,
            },
            "partial": {"views": self.partial_views, "keep_points": self.partial_keep},
            "fls": {"order": self.fls_order, "max_iterations": self.fls_max_iterations},
            "icp": {"max_iterations": self.icp_max_iterations, "tolerance": self.icp_tolerance},
            "scale": {"max_scale": self.max_scale, "max_pairs": self.max_pairs},
        }


def _pair(value, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a two-element list")
    return float(value[0]), float(value[1])


def _known(table: dict, keys: set[str], where: str) -> None:
    extra = set(table) - keys
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def from_dict(data: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    base_dir = base_dir or Path.cwd()
    version = data.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {version}; expected {SCHEMA_VERSION}")
    _known(data, {"version", "name", "methods", "trials", "seed", "timing", "workers",
                  "objects", "perturbation", "partial", "fls", "icp", "scale"}, "top level")
    cfg = ExperimentConfig()
    try:
        cfg.name = str(data.get("name", cfg.name))
        methods = data.get("methods", cfg.methods)
        cfg.methods = [methods] if isinstance(methods, str) else [str(m) for m in methods]
        cfg.trials = int(data.get("trials", cfg.trials))
        cfg.seed = int(data.get("seed", cfg.seed))
        cfg.timing = bool(data.get("timing", cfg.timing))
        cfg.workers = int(data.get("workers", cfg.workers))

        obj = data.get("objects", {})
        _known(obj, {"source", "count", "paths", "points", "resample_target"}, "[objects]")
        cfg.object_source = str(obj.get("source", cfg.object_source))
        cfg.object_count = int(obj.get("count", cfg.object_count))
        paths: list[Path] = []
        for pattern in obj.get("paths", []):
            full = pattern if os.path.isabs(pattern) else str(base_dir / pattern)
            hits = sorted(glob.glob(full))
            if hits:
                paths.extend(Path(h) for h in hits)
            else:
                # kept so validate() can report it as missing
                paths.append(Path(full))
        cfg.object_paths = paths
        pts = obj.get("points", cfg.points)
        cfg.points = [int(pts)] if isinstance(pts, (int, float)) else [int(p) for p in pts]
        cfg.resample_target = bool(obj.get("resample_target", False))

        pert = data.get("perturbation", {})
        _known(pert, {"noise_sigma", "angle_deg", "translation", "scale", "shuffle"}, "[perturbation]")
        sig = pert.get("noise_sigma", cfg.noise_sigma)
        cfg.noise_sigma = [float(sig)] if isinstance(sig, (int, float)) else [float(s) for s in sig]
        angles = pert.get("angle_deg", cfg.angles_deg)
        cfg.angles_deg = [
            (float(a), float(a)) if isinstance(a, (int, float)) else _pair(a, "angle_deg entry")
            for a in angles
        ]
        cfg.translation = _pair(pert.get("translation", cfg.translation), "translation")
        cfg.scale = None if pert.get("scale") is None else _pair(pert["scale"], "scale")
        cfg.shuffle = bool(pert.get("shuffle", True))

        part = data.get("partial", {})
        _known(part, {"views", "keep_points"}, "[partial]")
        cfg.partial_views = int(part.get("views", 0))
        cfg.partial_keep = int(part.get("keep_points", cfg.partial_keep))

        fls = data.get("fls", {})
        _known(fls, {"order", "max_iterations"}, "[fls]")
        cfg.fls_order = int(fls.get("order", cfg.fls_order))
        cfg.fls_max_iterations = int(fls.get("max_iterations", cfg.fls_max_iterations))
        icp = data.get("icp", {})
        _known(icp, {"max_iterations", "tolerance"}, "[icp]")
        cfg.icp_max_iterations = int(icp.get("max_iterations", cfg.icp_max_iterations))
        cfg.icp_tolerance = float(icp.get("tolerance", cfg.icp_tolerance))
        sc = data.get("scale", {})
        _known(sc, {"max_scale", "max_pairs"}, "[scale]")
        cfg.max_scale = float(sc.get("max_scale", cfg.max_scale))
        cfg.max_pairs = int(sc.get("max_pairs", cfg.max_pairs))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return from_dict(data, p.parent)

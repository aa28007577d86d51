"""Experiment runner: trials, metrics, aggregation and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from ..core import (
    PointCloud,
    SimilarityTransform,
    apply_transform,
    normalize_to_unit_cube,
    rotation_error_deg,
    translation_error,
)
from ..icp import icp_refine
from ..io import CloudFormatError, load_mesh, load_points, sample_mesh
from ..registration import FlsConfig, register
from ..scale import ScaleConfig, register_with_unknown_scale
from ..solver import SolverOptions
from .config import ExperimentConfig, load_config
from .perturb import PartialViewWarning, PerturbationSpec, make_rng, perturb, synthesize_partial_view
from .shapes import primitive_mesh

__all__ = [
    "FAIL_ROTATION_DEG",
    "FAIL_TRANSLATION",
    "EXACT_ROTATION_DEG",
    "EXACT_TRANSLATION",
    "CSV_COLUMNS",
    "TrialRecord",
    "BenchReport",
    "Trial",
    "is_failure",
    "is_exact",
    "run_method",
    "run_trial",
    "build_trials",
    "run_experiment",
]

FAIL_ROTATION_DEG = 45.0
FAIL_TRANSLATION = 0.5
EXACT_ROTATION_DEG = 5.0
EXACT_TRANSLATION = 0.03

CSV_COLUMNS = ("object", "method", "sigma", "scale_gt", "scale_est",
               "rot_err_deg", "trans_err", "time_s", "failed", "exact")


def is_failure(rot_err_deg: float, trans_err: float) -> bool:
    """NaN errors (a trial that raised) count as failures."""
    return not (rot_err_deg <= FAIL_ROTATION_DEG and trans_err <= FAIL_TRANSLATION)


def is_exact(rot_err_deg: float, trans_err: float) -> bool:
    return rot_err_deg < EXACT_ROTATION_DEG and trans_err < EXACT_TRANSLATION


@dataclass
class TrialRecord:
    object: str
    method: str
    sigma: float
    angle_deg: tuple[float, float]
    points: int
    trial: int
    ground_truth: SimilarityTransform
    estimate: SimilarityTransform | None
    rot_err_deg: float
    trans_err: float
    scale_err: float
    time_s: float | None
    iterations: int
    failed: bool
    exact: bool
    error: str = ""

    @property
    def scale_gt(self) -> float:
        return self.ground_truth.scale

    @property
    def scale_est(self) -> float:
        return self.estimate.scale if self.estimate is not None else math.nan

    def cell(self) -> tuple:
        return (self.method, self.sigma, self.angle_deg, self.points)

    def to_dict(self) -> dict[str, Any]:
        return {
            "object": self.object,
            "method": self.method,
            "sigma": self.sigma,
            "angle_deg": list(self.angle_deg),
            "points": self.points,
            "trial": self.trial,
            "ground_truth": self.ground_truth.to_dict(),
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
            "rot_err_deg": _num(self.rot_err_deg),
            "trans_err": _num(self.trans_err),
            "scale_err": _num(self.scale_err),
            "time_s": self.time_s,
            "iterations": self.iterations,
            "failed": self.failed,
            "exact": self.exact,
            "error": self.error,
        }


def _num(x: float | None):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


@dataclass
class BenchReport:
    records: list[TrialRecord]
    config: dict[str, Any] = field(default_factory=dict)

    def cells(self) -> dict[tuple, list[TrialRecord]]:
        out: dict[tuple, list[TrialRecord]] = {}
        for r in self.records:
            out.setdefault(r.cell(), []).append(r)
        return out

    def aggregates(self) -> list[dict[str, Any]]:
        """Per-cell statistics; error means and stds skip failed trials."""
        rows = []
        for (method, sigma, angle, points), recs in self.cells().items():
            ok = [r for r in recs if not r.failed]
            rot_m, rot_s = _mean_std([r.rot_err_deg for r in ok])
            tr_m, tr_s = _mean_std([r.trans_err for r in ok])
            sc_m, sc_s = _mean_std([r.scale_err for r in ok if math.isfinite(r.scale_err)])
            row = {
                "method": method,
                "sigma": sigma,
                "angle_deg": list(angle),
                "points": points,
                "trials": len(recs),
                "failure_rate": sum(r.failed for r in recs) / len(recs),
                "exact_recovery_rate": sum(r.exact for r in recs) / len(recs),
                "rot_err_deg_mean": rot_m,
                "rot_err_deg_std": rot_s,
                "trans_err_mean": tr_m,
                "trans_err_std": tr_s,
                "scale_err_mean": sc_m,
                "scale_err_std": sc_s,
            }
            times = [r.time_s for r in recs if r.time_s is not None]
            if times:
                t_m, t_s = _mean_std(times)
                row.update(time_s_mean=t_m, time_s_std=t_s, time_s_median=float(np.median(times)))
            rows.append(row)
        return rows

    def failure_rate(self) -> float:
        return sum(r.failed for r in self.records) / max(1, len(self.records))

    def exact_recovery_rate(self) -> float:
        return sum(r.exact for r in self.records) / max(1, len(self.records))

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([
                r.object, r.method, repr(r.sigma), repr(r.scale_gt), repr(r.scale_est),
                repr(r.rot_err_deg), repr(r.trans_err),
                "" if r.time_s is None else repr(r.time_s),
                int(r.failed), int(r.exact),
            ])
        return buf.getvalue()

    def summary(self) -> dict[str, Any]:
        return {"config": self.config, "cells": self.aggregates()}

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "csv": out / "trials.csv",
            "records": out / "records.json",
            "summary": out / "summary.json",
        }
        paths["csv"].write_text(self.csv_text())
        paths["records"].write_text(_dumps([r.to_dict() for r in self.records]))
        paths["summary"].write_text(_dumps(self.summary()))
        return paths


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class Trial:
    object_index: int
    points_index: int
    angle_index: int
    sigma_index: int
    trial: int
    method: str


def _derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


_OBJECT_STREAM, _PERTURB_STREAM, _PARTIAL_STREAM, _RESAMPLE_STREAM = 1, 2, 3, 4


@lru_cache(maxsize=64)
def _load_file_object(path: str):
    """Return ``('mesh', TriangleMesh)`` or ``('cloud', array)``."""
    p = Path(path)
    if p.suffix.lower() == ".obj":
        return "mesh", load_mesh(p)
    if p.suffix.lower() == ".ply":
        try:
            return "mesh", load_mesh(p)
        except CloudFormatError:
            pass
    return "cloud", load_points(p)


def _object_clouds(cfg: ExperimentConfig, obj: int, n_points: int) -> tuple[PointCloud, PointCloud]:
    """Source cloud in the unit cube, and the cloud the target is built from."""
    seed = _derive_seed(cfg.seed, _OBJECT_STREAM, obj, n_points)
    resample_seed = _derive_seed(cfg.seed, _RESAMPLE_STREAM, obj, n_points)
    if cfg.object_source == "primitive":
        kind, thing, name = "mesh", primitive_mesh(_derive_seed(cfg.seed, _OBJECT_STREAM, obj)), f"primitive-{obj:03d}"
    else:
        path = cfg.object_paths[obj]
        kind, thing = _load_file_object(str(path))
        name = path.stem
    if kind == "mesh":
        raw = sample_mesh(thing, n_points, seed, name)
        source, T = normalize_to_unit_cube(raw)
        base = source
        if cfg.resample_target:
            base = apply_transform(sample_mesh(thing, n_points, resample_seed, name), T)
        return source, base
    pts = thing
    if len(pts) > n_points:
        pts = pts[np.sort(make_rng(seed).choice(len(pts), n_points, replace=False))]
    source, _ = normalize_to_unit_cube(PointCloud(pts, name))
    return source, source


def _centered_identity(source: PointCloud, target: PointCloud, scale: float) -> SimilarityTransform:
    d = source.dim
    return SimilarityTransform(np.eye(d), target.centroid() - scale * source.centroid(), scale)


def run_method(method: str, source: PointCloud, target: PointCloud, cfg: ExperimentConfig,
               known_scale: float = 1.0):
    """Run one registration method; returns ``(transform, iterations)``."""
    fls_cfg = FlsConfig(order=cfg.fls_order, solver=SolverOptions(max_iterations=cfg.fls_max_iterations))
    scale_cfg = ScaleConfig(order=cfg.fls_order, max_scale=cfg.max_scale, max_pairs=cfg.max_pairs)
    if method == "icp":
        res = icp_refine(source, target, _centered_identity(source, target, known_scale),
                         max_iter=cfg.icp_max_iterations, tol=cfg.icp_tolerance)
        return res.transform, res.iterations
    if method in ("fls", "fls-icp"):
        res = register(source, target, fls_cfg, scale=known_scale)
    else:
        res = register_with_unknown_scale(source, target, fls_cfg, scale_config=scale_cfg)
    T, its = res.transform, res.iterations
    if method.startswith("fls-icp"):
        ref = icp_refine(source, target, T, max_iter=cfg.icp_max_iterations, tol=cfg.icp_tolerance)
        T, its = ref.transform, its + ref.iterations
    return T, its


def run_trial(cfg: ExperimentConfig, trial: Trial) -> TrialRecord:
    """Run one trial.  Exceptions become failed records; they never propagate."""
    n_points = cfg.points[trial.points_index]
    angle = cfg.angles_deg[trial.angle_index]
    sigma = cfg.noise_sigma[trial.sigma_index]
    key = (trial.object_index, trial.trial, trial.angle_index, trial.points_index)
    spec = PerturbationSpec(
        rotation_angle_range=(math.radians(angle[0]), math.radians(angle[1])),
        translation_range=cfg.translation,
        noise_sigma=sigma,
        scale_range=cfg.scale,
        shuffle=cfg.shuffle,
        seed=_derive_seed(cfg.seed, _PERTURB_STREAM, *key),
    )
    name = f"object-{trial.object_index:03d}"
    gt = SimilarityTransform.identity(3)
    try:
        source, base = _object_clouds(cfg, trial.object_index, n_points)
        name = source.name or name
        if cfg.partial_views > 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PartialViewWarning)
                base = synthesize_partial_view(base, cfg.partial_views, cfg.partial_keep,
                                               seed=_derive_seed(cfg.seed, _PARTIAL_STREAM, *key))
        target, gt = perturb(base, spec)
        t0 = time.perf_counter()
        est, iterations = run_method(trial.method, source, target, cfg, known_scale=gt.scale)
        elapsed = time.perf_counter() - t0
        rot = rotation_error_deg(est.rotation, gt.rotation)
        tr = translation_error(est.translation, gt.translation)
        serr = abs(est.scale - gt.scale) / gt.scale
        error = ""
    except Exception as exc:  # noqa: BLE001 - a trial error is a recorded failure
        est, iterations, elapsed = None, 0, 0.0
        rot = tr = serr = math.nan
        error = f"{type(exc).__name__}: {exc}"
    return TrialRecord(
        object=name, method=trial.method, sigma=sigma, angle_deg=angle, points=n_points,
        trial=trial.trial, ground_truth=gt, estimate=est, rot_err_deg=rot, trans_err=tr,
        scale_err=serr, time_s=elapsed if cfg.timing else None, iterations=iterations,
        failed=is_failure(rot, tr), exact=is_exact(rot, tr), error=error,
    )


def build_trials(cfg: ExperimentConfig) -> list[Trial]:
    n_obj = cfg.object_count if cfg.object_source == "primitive" else len(cfg.object_paths)
    return [
        Trial(o, p, a, s, t, m)
        for m in cfg.methods
        for p in range(len(cfg.points))
        for a in range(len(cfg.angles_deg))
        for s in range(len(cfg.noise_sigma))
        for o in range(n_obj)
        for t in range(cfg.trials)
    ]


def _run_one(args):
    return run_trial(*args)


def run_experiment(cfg: ExperimentConfig | str | Path, out_dir: str | Path | None = None,
                   workers: int | None = None) -> BenchReport:
    """Run every (method, grid cell, object, trial) combination.

    Each trial draws from its own seed derived from the master seed and the
    trial's coordinates, so results do not depend on the worker count.
    ``workers`` overrides the config value; both are capped by
    ``$FLSREG_MAX_WORKERS``.
    """
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    cfg.validate()
    if workers is not None:
        cfg = replace(cfg, workers=workers)
    n = cfg.max_workers()
    trials = build_trials(cfg)
    if n <= 1:
        records = [run_trial(cfg, t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            records = list(ex.map(_run_one, [(cfg, t) for t in trials], chunksize=4))
    report = BenchReport(records, cfg.to_dict())
    if out_dir is not None:
        report.write(out_dir)
    return report

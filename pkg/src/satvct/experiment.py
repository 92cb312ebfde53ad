"""Run configured reconstruction methods on simulated data and write artifacts.

Layout of an experiment directory::

    config.ini                 resolved config, every default written out
    phantom.hdr/.raw(.png)     ground truth
    sinogram.hdr/.raw          noisy measurements
    metrics.csv                one row per method
    <method>/recon.hdr/.raw    reconstruction (+ recon.png)
    <method>/iterations.csv    per-iteration log
    satv-ct/lambda.hdr/.raw    weight map (+ lambda.png)
    l2tv/alpha_grid.csv        grid-search table when alpha = grid
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config
from .core import GridSpec, make_fan_geometry, make_parallel_geometry
from .io import export_png16, load_image, save_image, save_sinogram
from .metrics import MetricSet, relative_error
from .phantoms import NoiseSpec, disk_phantom, head_phantom, head_regions, simulate_data
from .recon import SatvCtConfig, reconstruct
from .satv import DenoiseConfig
from .solvers import (CGLSConfig, IterativeConfig, PDHGConfig, cgls, fbp, kaczmarz,
                      l2tv_scalar, landweber)

log = logging.getLogger(__name__)


@dataclass
class MethodResult:
    method: str
    u: np.ndarray
    iterations: int
    converged: bool
    wall_time: float
    alpha: float | None = None
    lam: np.ndarray | None = None
    log_header: tuple[str, ...] = ()
    log_rows: list = field(default_factory=list)
    extra_tables: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    output_dir: Path | None
    phantom: np.ndarray
    data: np.ndarray
    sigma2: float
    results: dict[str, MethodResult]
    metrics: dict[str, MetricSet]


def build_problem(cfg: ExperimentConfig):
    """Ground truth, geometry and simulated data for ``cfg``."""
    ph, g = cfg["phantom"], cfg["geometry"]
    if ph["kind"] == "file":
        img = load_image(ph["path"])
        grid, truth = img.grid, img.values
    else:
        grid = GridSpec(ph["n"], ph["half_width"])
        if ph["kind"] == "head":
            truth = head_phantom(grid)
        else:
            truth = disk_phantom(grid, radius=ph["radius"] * grid.half_width, value=ph["value"])
    if g["kind"] == "parallel":
        geom = make_parallel_geometry(g["n_angles"], g["n_bins"], grid)
    else:
        b = grid.half_width
        geom = make_fan_geometry(g["n_angles"], g["n_bins"], grid,
                                 source_radius=g["source_radius"] * b,
                                 detector_radius=g["detector_radius"] * b)
    sim = simulate_data(truth, geom, NoiseSpec(cfg["noise"]["relative_level"], cfg.seed))
    return grid, geom, truth, sim


def alpha_grid(lo: float, hi: float, points: int) -> np.ndarray:
    """``points`` logarithmically spaced values from ``lo`` to ``hi``."""
    return np.geomspace(lo, hi, points)


def best_scalar_l2tv(f, geom, u_true, alphas, cfg: PDHGConfig | None = None):
    """Grid search over ``alphas`` keeping the smallest relative error.

    Each solve is warm-started from the previous grid point's solution.

    Returns ``(best_alpha, best_u, table)`` where ``table`` lists
    ``(alpha, relative_error, iterations)`` for every grid point.
    """
    best = (math.inf, None, None)
    table = []
    u0 = None
    for a in alphas:
        u, info = l2tv_scalar(f, geom, float(a), cfg, u0=u0, full_output=True)
        err = relative_error(u, u_true)
        table.append((float(a), err, info.iterations))
        u0 = u
        if err < best[0]:
            best = (err, float(a), u)
    return best[1], best[2], table


def _run_method(method: str, cfg: ExperimentConfig, geom, f, sigma2: float, truth) -> MethodResult:
    s = cfg[method]
    t0 = time.perf_counter()
    if method == "fbp":
        u = fbp(f, geom, window=s["window"], nonneg=s["nonneg"])
        return MethodResult(method, u, 1, True, time.perf_counter() - t0)
    if method in ("landweber", "kaczmarz"):
        step = None
        if method == "landweber" and s["step"] != "auto":
            step = float(s["step"])
        if method == "kaczmarz":
            step = s["relaxation"]
        icfg = IterativeConfig(max_iters=s["max_iters"], tol=s["tol"], step=step, nonneg=s["nonneg"],
                               randomized=s.get("randomized", False), seed=cfg.seed)
        solver = landweber if method == "landweber" else kaczmarz
        u, info = solver(f, geom, icfg, full_output=True)
        rows = [(k + 1, r) for k, r in enumerate(info.residuals)]
        return MethodResult(method, u, info.iterations, info.converged, time.perf_counter() - t0,
                            log_header=("iteration", "residual"), log_rows=rows)
    if method == "cgls":
        target = f.size * sigma2 if s["discrepancy_stop"] and sigma2 > 0 else None
        u, info = cgls(f, geom, CGLSConfig(s["max_iters"], s["tol"]), residual_target=target,
                       full_output=True)
        rows = [(k + 1, r) for k, r in enumerate(info.residuals)]
        return MethodResult(method, u, info.iterations, info.converged, time.perf_counter() - t0,
                            log_header=("iteration", "residual"), log_rows=rows)
    if method == "l2tv":
        pcfg = PDHGConfig(max_iters=s["max_iters"], tol=s["tol"])
        if s["alpha"] == "grid":
            alphas = alpha_grid(s["grid_min"], s["grid_max"], s["grid_points"])
            alpha, u, table = best_scalar_l2tv(f, geom, truth, alphas, pcfg)
            res = MethodResult(method, u, 0, True, time.perf_counter() - t0, alpha=alpha,
                               extra_tables={"alpha_grid.csv": (("alpha", "relative_error", "iterations"), table)})
            res.iterations = next(it for a, _, it in table if a == alpha)
            return res
        alpha = float(s["alpha"])
        u, info = l2tv_scalar(f, geom, alpha, pcfg, full_output=True)
        return MethodResult(method, u, info.iterations, info.converged, time.perf_counter() - t0,
                            alpha=alpha)
    if method == "satv-ct":
        rc = satv_config(cfg, sigma2)
        rep = reconstruct(f, geom, rc)
        rows = [(r.iteration, r.objective, r.data_residual, r.rel_change, r.lam_min, r.lam_mean,
                 r.lam_max, int(r.lam_updated)) for r in rep.history]
        return MethodResult(method, rep.u, len(rep.history), rep.converged, time.perf_counter() - t0,
                            alpha=rep.alpha, lam=rep.lam.values,
                            log_header=("iteration", "J", "residual", "rel_change", "lam_min",
                                        "lam_mean", "lam_max", "lam_updated"),
                            log_rows=rows)
    raise ValueError(f"unknown method {method!r}")


def satv_config(cfg: ExperimentConfig, sigma2: float) -> SatvCtConfig:
    s = cfg["satv-ct"]
    return SatvCtConfig(
        alpha="auto" if s["alpha"] == "auto" else float(s["alpha"]),
        sigma2=sigma2 if sigma2 > 0 else None,
        sigma_image2=None if s["sigma_image"] == "auto" else float(s["sigma_image"]) ** 2,
        k0=s["k0"], tol=s["tol"], max_iters=s["max_iters"], window=s["window"],
        eps=s["eps"], lam_max=s["lam_max"], smooth_lambda=s["smooth_lambda"],
        denoise=DenoiseConfig(max_iters=s["denoise_iters"], tol=s["denoise_tol"]),
        cgls=CGLSConfig(max_iters=s["cgls_iters"], tol=1e-6))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> ExperimentResult:
    """Simulate data, run every configured method, write artifacts.

    ``output_dir=None`` skips writing and only returns the results.
    """
    grid, geom, truth, sim = build_problem(cfg)
    f = sim.data
    out = Path(output_dir) if output_dir is not None else None
    png = cfg["experiment"]["png"]
    vmin, vmax = float(truth.min()), float(truth.max())
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
        save_image(out / "phantom", truth, half_width=grid.half_width)
        save_sinogram(out / "sinogram", f)
        if png:
            export_png16(out / "phantom.png", truth, vmin, vmax)

    masks = head_regions(grid) if cfg["phantom"]["kind"] == "head" else {}
    masks = {k: m for k, m in masks.items() if m.any()}
    results, metrics = {}, {}
    for method in cfg.methods:
        log.info("running %s", method)
        res = _run_method(method, cfg, geom, f, sim.sigma2, truth)
        results[method] = res
        metrics[method] = MetricSet.compute(res.u, truth, masks)
        log.info("%s: relative error %.4f (%.1f s)", method, metrics[method].relative_error,
                 res.wall_time)
        if out is None:
            continue
        d = out / method
        d.mkdir(exist_ok=True)
        save_image(d / "recon", res.u, half_width=grid.half_width)
        if png:
            export_png16(d / "recon.png", res.u, vmin, vmax)
        if res.lam is not None:
            save_image(d / "lambda", res.lam, half_width=grid.half_width)
            if png:
                export_png16(d / "lambda.png", res.lam)
        if res.log_header:
            _write_csv(d / "iterations.csv", res.log_header, res.log_rows)
        for name, (header, rows) in res.extra_tables.items():
            _write_csv(d / name, header, rows)

    if out is not None:
        region_names = sorted(masks)
        header = ["method", "relative_error", "snr_db"] + [f"rms_{r}" for r in region_names] + [
            "alpha", "iterations", "converged", "wall_time_s"]
        rows = []
        for method in cfg.methods:
            m, r = metrics[method], results[method]
            rows.append([method, m.relative_error, m.snr_db] + [m.regions[k] for k in region_names] + [
                "" if r.alpha is None else r.alpha, r.iterations, int(r.converged), round(r.wall_time, 3)])
        _write_csv(out / "metrics.csv", header, rows)
    return ExperimentResult(cfg, out, truth, f, sim.sigma2, results, metrics)

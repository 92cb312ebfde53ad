"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION <n> PASS|FAIL: ...`` line (visible
with ``pytest -v``) before asserting, so the summary survives failures.
"""
import math
import time

import numpy as np
import pytest

from satvct.cli import main as cli_main
from satvct.config import parse_config, preset_names
from satvct.core import GridSpec, LambdaMap, make_fan_geometry, make_parallel_geometry, underdetermined_rate
from satvct.experiment import run_experiment
from satvct.metrics import lambda_contrast
from satvct.phantoms import NoiseSpec, disk_chords, disk_phantom, head_phantom, head_regions, simulate_data
from satvct.projector import Projector, forward, get_projector, system_matrix
from satvct.recon import SatvCtConfig, _surrogate_residual, reconstruct, select_alpha
from satvct.satv import DenoiseConfig, weighted_tv_denoise
from satvct.solvers import CGLSConfig, IterativeConfig, cgls, kaczmarz_matrix


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_01_adjoint(report):
    t0 = time.perf_counter()
    g = GridSpec(16)
    rng = np.random.default_rng(0)
    worst = 0.0
    for geom in (make_parallel_geometry(10, 23, g), make_fan_geometry(10, 23, g)):
        P = Projector(geom)
        for _ in range(20):
            u = rng.standard_normal(g.shape)
            r = rng.standard_normal(geom.shape)
            Au, Atr = P.forward(u), P.adjoint(r)
            scale = np.linalg.norm(Au) * np.linalg.norm(r) + np.linalg.norm(u) * np.linalg.norm(Atr)
            worst = max(worst, abs(np.vdot(Au, r) - np.vdot(u, Atr)) / scale)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    report(1, ok, f"max scaled adjoint mismatch {worst:.2e} (<= 1e-10), {dt:.2f} s (< 1 s)")
    assert ok


def test_criterion_02_analytic_projection(report):
    t0 = time.perf_counter()
    g = GridSpec(256)
    geom = make_parallel_geometry(180, 363, g)
    f = forward(disk_phantom(g, radius=0.5), geom)
    exact = disk_chords(geom, radius=0.5)
    centre = geom.n_bins // 2
    centre_err = float(np.max(np.abs(f[:, centre] - 1.0)))
    rms = float(np.sqrt(np.mean((f - exact) ** 2)))
    dt = time.perf_counter() - t0
    ok = centre_err <= g.pixel_size and rms < 0.01 and dt < 10.0
    report(2, ok, f"central-ray error {centre_err:.4f} (<= {g.pixel_size:.4f}), "
                  f"sinogram RMS {rms:.4f} (< 0.01), {dt:.1f} s (< 10 s)")
    assert ok


def test_criterion_03_rates(report):
    cases = [((45, 362, 256), 0.2486), ((360, 560, 512), 0.7690), ((180, 560, 512), 0.3845)]
    got = [underdetermined_rate(make_parallel_geometry(a, b, GridSpec(n))) for (a, b, n), _ in cases]
    ok = all(abs(r - want) <= 1e-4 for r, (_, want) in zip(got, cases))
    report(3, ok, "rates " + ", ".join(f"{r:.4f}" for r in got) + " vs 0.2486, 0.7690, 0.3845")
    assert ok


def test_criterion_04_denoiser(report):
    t0 = time.perf_counter()
    tight = DenoiseConfig(max_iters=5000, tol=1e-9)
    u2 = weighted_tv_denoise(np.array([[0.0], [4.0]]), np.ones((2, 1)), tight).ravel()
    two_err = float(np.max(np.abs(u2 - [1.0, 3.0])))
    rng = np.random.default_rng(0)
    mean_ok = minmax_ok = True
    for _ in range(10):
        w = rng.random((32, 32))
        lam = rng.uniform(0.5, 20.0, (32, 32))
        u = weighted_tv_denoise(w, lam, tight)
        mean_ok &= abs(np.sum(lam * (u - w))) <= 1e-6 * np.sum(lam * np.abs(w))
        minmax_ok &= w.min() - 1e-8 <= u.min() and u.max() <= w.max() + 1e-8
    dt = time.perf_counter() - t0
    ok = two_err <= 1e-3 and mean_ok and minmax_ok and dt < 5.0
    report(4, ok, f"two-pixel error {two_err:.1e}, weighted mean {'ok' if mean_ok else 'violated'}, "
                  f"min-max {'ok' if minmax_ok else 'violated'}, {dt:.1f} s (< 5 s)")
    assert ok


def _head128(level):
    g = GridSpec(128)
    geom = make_parallel_geometry(45, 181, g)
    u_true = head_phantom(g)
    return g, geom, u_true, simulate_data(u_true, geom, NoiseSpec(level, 0))


def test_criterion_05_monotone_descent(report):
    t0 = time.perf_counter()
    _, geom, u_true, sim = _head128(0.2)
    cfg = SatvCtConfig(sigma2=sim.sigma2)
    rep = reconstruct(sim.data, geom, cfg, u_true=u_true)
    J = rep.objectives
    tail = J[cfg.k0 - 1:]
    worst = float(np.max(np.diff(tail))) if tail.size > 1 else 0.0
    slack = 1e-6 * rep.initial_objective
    dt = time.perf_counter() - t0
    ok = worst <= slack and tail.size > 1 and dt < 120.0
    report(5, ok, f"{len(J)} outer iterations, largest increase after freeze {worst:.3e} "
                  f"(slack {slack:.3e}), {dt:.1f} s (< 120 s)")
    assert ok


ORDERING_CONFIG = """
[experiment]
name = ordering
methods = fbp, landweber, kaczmarz, l2tv, satv-ct
seed = 0
[phantom]
kind = head
n = 128
[geometry]
n_angles = 45
n_bins = 181
[noise]
relative_level = {level}
[l2tv]
alpha = grid
grid_min = 1
grid_max = 1000
grid_points = 10
"""


@pytest.fixture(scope="module")
def ordering_runs():
    t0 = time.perf_counter()
    runs = {}
    for level in (0.2, 0.8):
        runs[level] = run_experiment(parse_config(ORDERING_CONFIG.format(level=level)))
    return runs, time.perf_counter() - t0


def test_criterion_06_method_ordering(report, ordering_runs):
    runs, dt = ordering_runs
    ok = dt < 900.0
    parts = []
    for level, res in runs.items():
        e = {m: res.metrics[m].relative_error for m in res.metrics}
        iterative = min(e["landweber"], e["kaczmarz"])
        holds = e["satv-ct"] <= e["l2tv"] < iterative < e["fbp"]
        ok &= holds
        parts.append(f"noise {level}: satv-ct {e['satv-ct']:.4f}, l2tv {e['l2tv']:.4f} "
                     f"(alpha {res.results['l2tv'].alpha:.3g}), landweber {e['landweber']:.4f}, "
                     f"kaczmarz {e['kaczmarz']:.4f}, fbp {e['fbp']:.4f} -> {'holds' if holds else 'violated'}")
    report(6, ok, "; ".join(parts) + f"; {dt:.0f} s (< 900 s)")
    assert ok


def test_criterion_07_lambda_contrast(report, ordering_runs):
    runs, _ = ordering_runs
    ok = True
    parts = []
    for level, res in runs.items():
        masks = head_regions(GridSpec(128))
        c = lambda_contrast(res.results["satv-ct"].lam, masks["skull_edge"], masks["interior_flat"])
        ok &= c > 1.5
        parts.append(f"noise {level}: {c:.3f}")
    report(7, ok, "skull-edge / interior-flat lambda contrast " + ", ".join(parts) + " (> 1.5)")
    assert ok


def test_criterion_08_discrepancy(report):
    t0 = time.perf_counter()
    g = GridSpec(64)
    geom = make_parallel_geometry(45, 91, g)
    sim = simulate_data(disk_phantom(g, radius=0.5), geom, NoiseSpec(0.2, 0))
    alpha = select_alpha(sim.data, geom, sim.sigma2)
    rho, _ = _surrogate_residual(get_projector(geom), sim.data, alpha, None,
                                 CGLSConfig(max_iters=3000, tol=1e-10))
    ratio = rho / (sim.data.size * sim.sigma2)
    dt = time.perf_counter() - t0
    ok = 0.9 <= ratio <= 1.1 and dt < 30.0
    report(8, ok, f"alpha {alpha:.4g}, residual / (m sigma^2) = {ratio:.4f} (in [0.9, 1.1]), "
                  f"{dt:.1f} s (< 30 s)")
    assert ok


def test_criterion_09_small_solvers(report):
    t0 = time.perf_counter()
    g = GridSpec(16)
    geom = make_parallel_geometry(20, 23, g)
    A = system_matrix(geom).toarray()
    f = np.random.default_rng(0).standard_normal(geom.shape)
    ref = np.linalg.solve(A.T @ A, A.T @ f.ravel())
    x = cgls(f, geom, CGLSConfig(max_iters=2000, tol=1e-13, nonneg=False)).ravel()
    cg_err = float(np.linalg.norm(x - ref) / np.linalg.norm(ref))
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    xt = np.array([0.7, 1.9])
    xk = kaczmarz_matrix(M, M @ xt, IterativeConfig(max_iters=500, tol=1e-15))
    kz_err = float(np.max(np.abs(xk - xt)))
    dt = time.perf_counter() - t0
    ok = cg_err <= 1e-6 and kz_err <= 1e-8 and dt < 5.0
    report(9, ok, f"CGLS relative error {cg_err:.1e} (<= 1e-6), Kaczmarz error {kz_err:.1e} "
                  f"(<= 1e-8), {dt:.1f} s (< 5 s)")
    assert ok


def _image_files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*")
                  if p.suffix in (".raw", ".png"))


@pytest.mark.parametrize("preset", preset_names())
def test_criterion_10_determinism(report, preset, tmp_path):
    t0 = time.perf_counter()
    codes = [cli_main(["run", "--preset", preset, "--deterministic", "--seed", "0",
                       "--output-dir", str(tmp_path / tag)]) for tag in ("a", "b")]
    a, b = tmp_path / "a" / preset, tmp_path / "b" / preset
    files = _image_files(a) if codes == [0, 0] else []
    same = bool(files) and files == _image_files(b) and all(
        (a / f).read_bytes() == (b / f).read_bytes() for f in files)
    dt = time.perf_counter() - t0
    ok = codes == [0, 0] and same
    report(10, ok, f"preset {preset}: {len(files)} image artifacts "
                   f"{'byte-identical' if same else 'differ'} across two runs, {dt:.0f} s")
    assert ok

"""Ground-truth phantoms and simulated noisy measurements."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import ndimage

from .core import GridSpec, as_array
from .projector import forward

HEAD_PHANTOM_FILE = "head_phantom.csv"


def load_ellipses(name: str = HEAD_PHANTOM_FILE) -> np.ndarray:
    """Rows of ``(value, cx, cy, ax, ay, rotation_deg)`` from the shipped table."""
    text = resources.files("satvct").joinpath("data", name).read_text()
    return np.loadtxt(text.splitlines(), delimiter=",", comments="#", ndmin=2)


def paint_ellipses(grid: GridSpec, ellipses: np.ndarray, supersample: int = 1) -> np.ndarray:
    """Paint ellipses in order and area-average over ``supersample^2`` points per pixel."""
    b, n, h = grid.half_width, grid.n, grid.pixel_size
    s = int(supersample)
    offs = (np.arange(s) + 0.5) / s - 0.5
    x = (-b + (np.arange(n)[:, None] + 0.5 + offs[None, :]) * h).ravel()
    X, Y = np.meshgrid(x, x, indexing="ij")
    img = np.zeros_like(X)
    for value, cx, cy, ax, ay, rot in ellipses:
        t = math.radians(rot)
        dx, dy = X - cx * b, Y - cy * b
        xr = dx * math.cos(t) + dy * math.sin(t)
        yr = -dx * math.sin(t) + dy * math.cos(t)
        img[(xr / (ax * b)) ** 2 + (yr / (ay * b)) ** 2 <= 1.0] = value
    return img.reshape(n, s, n, s).mean(axis=(1, 3))


def head_phantom(grid: GridSpec, supersample: int = 4) -> np.ndarray:
    """Piecewise-constant head-like phantom normalised to ``[0, 1]``.

    Skull ring, grey-matter interior, ventricles, a cluster of small dark
    holes on the right and small bright inclusions on the left.  Pixels at
    edges carry partial-volume averages so that different grid sizes sample
    the same continuous object.
    """
    img = paint_ellipses(grid, load_ellipses(), supersample)
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    return img


def head_regions(grid: GridSpec, margin: int = 3) -> dict[str, np.ndarray]:
    """Boolean masks on the head phantom for region-wise statistics.

    ``skull_edge``: pixels within ``margin`` pixels of the skull ring's inner
    or outer boundary.  ``interior_flat``: grey-matter pixels at least
    ``2 * margin`` pixels away from any intensity edge.  ``background``:
    pixels outside the head at least ``margin`` pixels from it.
    """
    rows = load_ellipses()
    skull = paint_ellipses(grid, rows[:1]) > 0
    inner = paint_ellipses(grid, rows[1:2]) > 0
    ring = skull & ~inner
    ring_edge = ring & (ndimage.binary_erosion(ring, iterations=1) ^ ring)
    near_ring = ndimage.binary_dilation(ring_edge, iterations=margin)
    u = paint_ellipses(grid, rows)
    gx = np.abs(np.diff(u, axis=0, append=u[-1:])) + np.abs(np.diff(u, axis=0, prepend=u[:1]))
    gy = np.abs(np.diff(u, axis=1, append=u[:, -1:])) + np.abs(np.diff(u, axis=1, prepend=u[:, :1]))
    edges = (gx + gy) > 0
    far = ~ndimage.binary_dilation(edges, iterations=2 * margin)
    grey = np.isclose(u, rows[1, 0])
    outside = ~ndimage.binary_dilation(skull, iterations=margin)
    return {"skull_edge": near_ring, "interior_flat": grey & far, "background": outside}


def disk_phantom(grid: GridSpec, center=(0.0, 0.0), radius: float = 0.5,
                 value: float = 1.0) -> np.ndarray:
    """Indicator of a disk (pixel-centre test) scaled by ``value``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    cx, cy = center
    b = grid.half_width
    # distance from the centre to the closed square [-b, b]^2
    gap = math.hypot(max(abs(cx) - b, 0.0), max(abs(cy) - b, 0.0))
    if gap >= radius:
        raise ValueError("disk lies entirely outside the domain")
    X, Y = grid.mesh()
    return np.where((X - cx) ** 2 + (Y - cy) ** 2 <= radius ** 2, float(value), 0.0)


def disk_chords(geom, center=(0.0, 0.0), radius: float = 0.5, value: float = 1.0) -> np.ndarray:
    """Exact line integrals of a uniform disk along every ray of ``geom``."""
    pts, dirs = geom.rays()
    c = np.asarray(center, dtype=float)
    # distance from the disk centre to each line
    rel = c[None, :] - pts
    dist = np.abs(rel[:, 0] * dirs[:, 1] - rel[:, 1] * dirs[:, 0])
    chord = 2.0 * np.sqrt(np.maximum(radius ** 2 - dist ** 2, 0.0))
    return (value * chord).reshape(geom.shape)


@dataclass(frozen=True)
class NoiseSpec:
    relative_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.relative_level < 0:
            raise ValueError("relative_level must be >= 0")


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """Noisy sinogram ``f = A u_true + noise`` with its realised statistics."""

    data: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    sigma2: float

    @property
    def relative_level(self) -> float:
        return float(np.linalg.norm(self.noise) / np.linalg.norm(self.clean))


def simulate_data(u_true, geom, noise: NoiseSpec) -> SimulatedData:
    """White Gaussian noise rescaled to hit ``noise.relative_level`` exactly.

    ``sigma2`` is the per-element variance of the realised noise,
    ``||noise||^2 / m``.
    """
    clean = forward(as_array(u_true), geom)
    if noise.relative_level == 0:
        return SimulatedData(clean.copy(), clean, np.zeros_like(clean), 0.0)
    norm_clean = np.linalg.norm(clean)
    if norm_clean == 0:
        raise ValueError("cannot scale noise relative to zero data")
    rng = np.random.default_rng(noise.seed)
    e = rng.standard_normal(clean.shape)
    e *= noise.relative_level * norm_clean / np.linalg.norm(e)
    return SimulatedData(clean + e, clean, e, float(np.vdot(e, e) / e.size))


def estimate_sigma_background(u, mask) -> float:
    """Sample standard deviation of ``u`` over ``mask``."""
    vals = as_array(u)[np.asarray(mask, dtype=bool)]
    if vals.size < 2:
        raise ValueError("background mask needs at least two pixels")
    return float(np.std(vals, ddof=1))

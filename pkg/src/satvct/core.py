"""Grid, acquisition geometries and the value types shared by all solvers.

Arrays are indexed ``values[i, j]`` with ``i`` along x and ``j`` along y.
Pixel ``(i, j)`` is centred at ``(-b + (i + 1/2) h, -b + (j + 1/2) h)`` with
``h = 2b / n`` the pixel size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid on the domain ``(-b, b)^2``."""

    n: int
    half_width: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.n!r}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def n_x(self) -> int:
        return self.n

    @property
    def n_y(self) -> int:
        return self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def pixel_size(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def size(self) -> int:
        return self.n * self.n

    def centers(self) -> np.ndarray:
        """1D array of pixel-centre coordinates (same for x and y)."""
        h = self.pixel_size
        return -self.half_width + (np.arange(self.n) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers()
        return np.meshgrid(c, c, indexing="ij")


@dataclass(frozen=True)
class ParallelGeometry:
    """Parallel-beam acquisition: lines ``x cos(theta) + y sin(theta) = s``."""

    grid: GridSpec
    angles: tuple[float, ...]
    n_bins: int
    detector_half_extent: float

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.size < 1:
            raise ValueError("at least one projection angle is required")
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] >= math.pi:
            raise ValueError("angles must be strictly increasing in [0, pi)")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.detector_half_extent < self.grid.half_width * math.sqrt(2) * (1 - 1e-12):
            raise ValueError("detector must cover the grid's circumscribed circle")

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def n_rays(self) -> int:
        return self.n_angles * self.n_bins

    @property
    def bin_width(self) -> float:
        return 2.0 * self.detector_half_extent / self.n_bins

    def offsets(self) -> np.ndarray:
        """Signed detector offsets ``s`` of the bin centres."""
        return -self.detector_half_extent + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(points, directions)`` of shape ``(n_angles * n_bins, 2)``.

        Each ray passes through ``points[k]`` with unit direction
        ``directions[k]``; rays are ordered angle-major.
        """
        th = np.asarray(self.angles)[:, None]
        s = self.offsets()[None, :]
        c, sn = np.cos(th), np.sin(th)
        px = np.broadcast_to(s * c, (self.n_angles, self.n_bins))
        py = np.broadcast_to(s * sn, (self.n_angles, self.n_bins))
        dx = np.broadcast_to(-sn, (self.n_angles, self.n_bins))
        dy = np.broadcast_to(c, (self.n_angles, self.n_bins))
        pts = np.stack([px.ravel(), py.ravel()], axis=1)
        dirs = np.stack([dx.ravel(), dy.ravel()], axis=1)
        return pts, dirs


@dataclass(frozen=True)
class FanGeometry:
    """Fan-beam acquisition with a flat detector opposite the source.

    The source sits at ``source_radius * (cos beta, sin beta)``; the detector
    line is perpendicular to the central ray at distance ``detector_radius``
    from the rotation centre on the far side.  Bins are equally spaced on
    the detector and span the fan of half-angle ``fan_half_angle``.
    """

    grid: GridSpec
    angles: tuple[float, ...]
    n_bins: int
    source_radius: float
    detector_radius: float
    fan_half_angle: float

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.size < 1:
            raise ValueError("at least one projection angle is required")
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] >= 2 * math.pi:
            raise ValueError("angles must be strictly increasing in [0, 2 pi)")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        r_obj = self.grid.half_width * math.sqrt(2)
        if not self.source_radius > r_obj:
            raise ValueError("source must lie outside the object's circumscribed circle")
        if self.detector_radius < 0:
            raise ValueError("detector_radius must be nonnegative")
        if not 0 < self.fan_half_angle < math.pi / 2:
            raise ValueError("fan_half_angle must lie in (0, pi/2)")
        if math.sin(self.fan_half_angle) * self.source_radius < r_obj * (1 - 1e-12):
            raise ValueError("fan does not cover the grid at every angle")

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def n_rays(self) -> int:
        return self.n_angles * self.n_bins

    @property
    def detector_half_length(self) -> float:
        return (self.source_radius + self.detector_radius) * math.tan(self.fan_half_angle)

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        beta = np.asarray(self.angles)[:, None]
        half = self.detector_half_length
        u = -half + (np.arange(self.n_bins) + 0.5) * (2 * half / self.n_bins)
        u = u[None, :]
        cb, sb = np.cos(beta), np.sin(beta)
        sx, sy = self.source_radius * cb, self.source_radius * sb
        # detector point: -R_d (cos b, sin b) + u (-sin b, cos b)
        qx = -self.detector_radius * cb - u * sb
        qy = -self.detector_radius * sb + u * cb
        dx, dy = qx - sx, qy - sy
        norm = np.hypot(dx, dy)
        shape = (self.n_angles, self.n_bins)
        pts = np.stack([np.broadcast_to(sx, shape).ravel(), np.broadcast_to(sy, shape).ravel()], axis=1)
        dirs = np.stack([(dx / norm).ravel(), (dy / norm).ravel()], axis=1)
        return pts, dirs


Geometry = Union[ParallelGeometry, FanGeometry]


def make_parallel_geometry(n_angles: int, n_bins: int, grid: GridSpec,
                           detector_half_extent: float | None = None) -> ParallelGeometry:
    """Equally spaced angles ``i * pi / n_angles`` and a detector covering the grid."""
    if n_angles < 1 or n_bins < 1:
        raise ValueError(f"n_angles and n_bins must be >= 1 (got {n_angles}, {n_bins})")
    if detector_half_extent is None:
        detector_half_extent = grid.half_width * math.sqrt(2)
    angles = tuple(i * math.pi / n_angles for i in range(n_angles))
    return ParallelGeometry(grid, angles, int(n_bins), float(detector_half_extent))


def make_fan_geometry(n_angles: int, n_bins: int, grid: GridSpec,
                      source_radius: float | None = None,
                      detector_radius: float | None = None,
                      margin: float = 1.02) -> FanGeometry:
    """Full-circle fan-beam scan, angles ``i * 2 pi / n_angles``.

    Defaults are ``source_radius = 4 b`` and ``detector_radius = 2 b``; the
    fan is opened just wide enough (times ``margin``) to cover the grid's
    circumscribed circle.
    """
    if n_angles < 1 or n_bins < 1:
        raise ValueError(f"n_angles and n_bins must be >= 1 (got {n_angles}, {n_bins})")
    b = grid.half_width
    rs = 4.0 * b if source_radius is None else float(source_radius)
    rd = 2.0 * b if detector_radius is None else float(detector_radius)
    r_obj = b * math.sqrt(2)
    if not rs > r_obj:
        raise ValueError("source must lie outside the object's circumscribed circle")
    gamma = math.asin(min(r_obj * margin / rs, 0.999999))
    angles = tuple(i * 2 * math.pi / n_angles for i in range(n_angles))
    return FanGeometry(grid, angles, int(n_bins), rs, rd, gamma)


def underdetermined_rate(geom: Geometry, grid: GridSpec | None = None) -> float:
    """Ratio of measurement count to unknown pixel count."""
    grid = geom.grid if grid is None else grid
    return geom.n_angles * geom.n_bins / (grid.n_x * grid.n_y)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class Image:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"image shape {v.shape} does not match grid {self.grid.shape}")
        _check_finite(v, "image")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class Sinogram:
    geometry: Geometry
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.geometry.shape:
            raise ValueError(f"sinogram shape {v.shape} does not match geometry {self.geometry.shape}")
        _check_finite(v, "sinogram")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class LambdaMap:
    """Per-pixel fidelity weight clamped to ``[eps, lam_max]``."""

    values: np.ndarray
    eps: float = 1e-3
    lam_max: float = 1e4
    window: int = 11

    def __post_init__(self):
        if not 0 < self.eps <= self.lam_max:
            raise ValueError("require 0 < eps <= lam_max")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        v = np.asarray(self.values, dtype=float)
        _check_finite(v, "lambda map")
        if np.any(v < self.eps) or np.any(v > self.lam_max):
            raise ValueError("lambda values outside [eps, lam_max]")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, shape, value: float | None = None, **kw) -> "LambdaMap":
        eps = kw.get("eps", 1e-3)
        return cls(np.full(shape, eps if value is None else value, dtype=float), **kw)

    def with_values(self, values: np.ndarray) -> "LambdaMap":
        return LambdaMap(values, self.eps, self.lam_max, self.window)


def as_array(x) -> np.ndarray:
    """Unwrap an Image/Sinogram/LambdaMap to its ndarray, pass arrays through."""
    return np.asarray(getattr(x, "values", x))

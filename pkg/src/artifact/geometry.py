"""Planar domains on a uniform lattice, conformal background metrics and the
discrete operators built on them.

Every grid lives on the global lattice ``z = h * (i + 1j * j)`` with integer
``(i, j)``.  Grids with the same spacing therefore share nodes, and fields can
be moved between nested domains by index matching (see :func:`embed`).

Fields are stored as full bounding-box arrays with ``NaN`` outside the mask.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .errors import DomainError, EmptyDomainError, InvalidMetricError

_ROUND = 1e-9


@dataclass(frozen=True)
class Region:
    kind: str  # "disk" | "annulus" | "square"
    params: tuple[float, ...]
    center: complex = 0j

    def __post_init__(self):
        if self.kind not in ("disk", "annulus", "square"):
            raise DomainError(f"unknown region kind {self.kind!r}")
        if any(p <= 0 for p in self.params):
            raise DomainError("region dimensions must be positive")
        if self.kind == "annulus" and self.params[0] >= self.params[1]:
            raise DomainError("annulus needs R_inner < R_outer")

    def label(self) -> str:
        body = ", ".join(f"{p:g}" for p in self.params)
        if self.center != 0:
            body += f"; center={self.center.real:g}{self.center.imag:+g}j"
        return f"{self.kind}({body})"


class DomainGrid:
    """Masked rectangular discretization of a disk, annulus or square.

    ``mask`` marks in-domain nodes.  ``boundary`` holds the in-domain nodes with
    at least one out-of-domain stencil neighbour, ``interior`` the rest.
    """

    def __init__(self, region: Region, spacing: float):
        if not spacing > 0:
            raise DomainError("spacing must be positive")
        self.region = region
        self.spacing = float(spacing)
        h = self.spacing
        c = complex(region.center)
        if region.kind == "square":
            (side,) = region.params
            n = int(math.floor(side / h + _ROUND))
            lo_i, hi_i, lo_j, hi_j = 0, n, 0, n
        else:
            reach = region.params[-1]
            lo_i = int(math.floor((c.real - reach) / h)) - 1
            hi_i = int(math.ceil((c.real + reach) / h)) + 1
            lo_j = int(math.floor((c.imag - reach) / h)) - 1
            hi_j = int(math.ceil((c.imag + reach) / h)) + 1
        # one padding ring so that every masked node has four addressable neighbours
        self.i0, self.j0 = lo_i - 1, lo_j - 1
        ii = np.arange(lo_i - 1, hi_i + 2)
        jj = np.arange(lo_j - 1, hi_j + 2)
        self.I, self.J = np.meshgrid(ii, jj, indexing="ij")
        self.x = h * self.I
        self.y = h * self.J
        self.z = self.x + 1j * self.y
        self.shape = self.x.shape

        if region.kind == "disk":
            (R,) = region.params
            mask = np.abs(self.z - c) < R - h / 2
        elif region.kind == "annulus":
            r_in, r_out = region.params
            rho = np.abs(self.z - c)
            mask = (rho > r_in + h / 2) & (rho < r_out - h / 2)
        else:
            mask = (self.I >= lo_i) & (self.I <= hi_i) & (self.J >= lo_j) & (self.J <= hi_j)
        self.mask = mask
        nb_out = np.zeros_like(mask)
        nb_out[1:, :] |= ~mask[:-1, :]
        nb_out[:-1, :] |= ~mask[1:, :]
        nb_out[:, 1:] |= ~mask[:, :-1]
        nb_out[:, :-1] |= ~mask[:, 1:]
        nb_out[0, :] = nb_out[-1, :] = True
        nb_out[:, 0] = nb_out[:, -1] = True
        self.boundary = mask & nb_out
        self.interior = mask & ~nb_out

    # constructors -----------------------------------------------------
    @classmethod
    def disk(cls, radius: float, spacing: float, center: complex = 0j) -> "DomainGrid":
        return cls(Region("disk", (float(radius),), complex(center)), spacing)

    @classmethod
    def annulus(cls, r_inner: float, r_outer: float, spacing: float, center: complex = 0j) -> "DomainGrid":
        return cls(Region("annulus", (float(r_inner), float(r_outer)), complex(center)), spacing)

    @classmethod
    def square(cls, side: float, spacing: float) -> "DomainGrid":
        return cls(Region("square", (float(side),)), spacing)

    # queries ----------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return int(self.mask.sum())

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def n_boundary(self) -> int:
        return int(self.boundary.sum())

    def is_connected(self) -> bool:
        _, count = ndimage.label(self.mask)
        return count == 1

    def empty(self) -> np.ndarray:
        return np.full(self.shape, np.nan)

    def index_of(self, i: int, j: int) -> tuple[int, int]:
        """Array position of lattice node (i, j)."""
        return i - self.i0, j - self.j0

    def compatible(self, other: "DomainGrid") -> bool:
        return abs(self.spacing - other.spacing) <= 1e-12 * self.spacing

    def header(self) -> dict:
        return {
            "region_kind": self.region.label(),
            "spacing": self.spacing,
            "nodes": self.n_nodes,
            "interior_nodes": self.n_interior,
            "boundary_nodes": self.n_boundary,
        }

    def __repr__(self) -> str:
        return f"DomainGrid({self.region.label()}, h={self.spacing:g}, nodes={self.n_nodes})"


def embed(data: np.ndarray, src: DomainGrid, dst: DomainGrid) -> np.ndarray:
    """Move a field (leading axes allowed) from ``src`` onto ``dst`` by lattice index.

    Nodes of ``dst`` that ``src`` does not cover become NaN.
    """
    if not src.compatible(dst):
        raise DomainError("grids do not share a lattice")
    lead = data.shape[:-2]
    out = np.full(lead + dst.shape, np.nan)
    di, dj = src.i0 - dst.i0, src.j0 - dst.j0
    a0, b0 = max(0, di), max(0, dj)
    a1 = min(dst.shape[0], di + src.shape[0])
    b1 = min(dst.shape[1], dj + src.shape[1])
    if a0 < a1 and b0 < b1:
        block = np.where(src.mask, data, np.nan)[..., a0 - di:a1 - di, b0 - dj:b1 - dj]
        out[..., a0:a1, b0:b1] = block
    return np.where(dst.mask, out, np.nan)


def coarsen(data: np.ndarray, fine: DomainGrid, coarse: DomainGrid) -> np.ndarray:
    """Sample a field on ``fine`` at the nodes of ``coarse`` (spacing ratio 2).

    Coarse node (i, j) is fine node (2i, 2j); coarse nodes the fine grid does
    not cover become NaN.
    """
    if abs(coarse.spacing - 2 * fine.spacing) > 1e-12 * coarse.spacing:
        raise DomainError("coarse spacing must be twice the fine spacing")
    lead = data.shape[:-2]
    a, b = fine.index_of(2 * coarse.I, 2 * coarse.J)
    ok = (a >= 0) & (a < fine.shape[0]) & (b >= 0) & (b < fine.shape[1])
    out = np.full(lead + coarse.shape, np.nan)
    out[..., ok] = np.where(fine.mask, data, np.nan)[..., a[ok], b[ok]]
    return np.where(coarse.mask, out, np.nan)


@dataclass
class ScalarField:
    grid: DomainGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.where(self.grid.mask, np.asarray(self.data, dtype=float), np.nan)

    @classmethod
    def from_values(cls, grid: DomainGrid, values) -> "ScalarField":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_nodes,):
            raise DomainError("value count must equal the masked-in node count")
        data = grid.empty()
        data[grid.mask] = values
        return cls(grid, data)

    @property
    def values(self) -> np.ndarray:
        return self.data[self.grid.mask]

    def interior_values(self) -> np.ndarray:
        return self.data[self.grid.interior]


def lap5(data: np.ndarray, grid: DomainGrid) -> np.ndarray:
    """Five-point Euclidean Laplacian on interior nodes, NaN elsewhere.

    Works on leading component axes: ``data`` may have shape ``(k, *grid.shape)``.
    """
    h2 = grid.spacing ** 2
    out = np.full(data.shape, np.nan)
    c = data[..., 1:-1, 1:-1]
    s = data[..., 2:, 1:-1] + data[..., :-2, 1:-1] + data[..., 1:-1, 2:] + data[..., 1:-1, :-2]
    out[..., 1:-1, 1:-1] = (s - 4.0 * c) / h2
    return np.where(grid.interior, out, np.nan)


# metrics ----------------------------------------------------------------

_KINDS = ("euclidean", "poincare_disk", "poincare_exterior", "custom")


@dataclass(frozen=True)
class BackgroundMetric:
    """Conformal background metric ``g = scale * g0(z) dz dz-bar``.

    ``poincare_disk(R)``: g0 = 4R^2/(R^2-|z-c|^2)^2 on |z-c| < R.
    ``poincare_exterior(R)``: g0 = 1/(|z-c|^2 log^2(|z-c|/R)) on |z-c| > R, the
    complete curvature -1 metric of the punctured-disk type.
    ``custom``: either a callable ``g0_func(z)`` or samples on a grid.
    """

    kind: str = "euclidean"
    radius: float = 1.0
    center: complex = 0j
    scale: float = 1.0
    g0_func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    g0_samples: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidMetricError(f"unknown metric kind {self.kind!r}")
        if not self.scale > 0 or not self.radius > 0:
            raise InvalidMetricError("scale and radius must be positive")
        if self.kind == "custom" and self.g0_func is None and self.g0_samples is None:
            raise InvalidMetricError("custom metric needs g0_func or g0_samples")

    @classmethod
    def euclidean(cls) -> "BackgroundMetric":
        return cls("euclidean")

    @classmethod
    def poincare_disk(cls, radius: float = 1.0, center: complex = 0j) -> "BackgroundMetric":
        return cls("poincare_disk", float(radius), complex(center))

    @classmethod
    def poincare_exterior(cls, radius: float, center: complex = 0j) -> "BackgroundMetric":
        return cls("poincare_exterior", float(radius), complex(center))

    @classmethod
    def custom(cls, g0_func=None, samples=None) -> "BackgroundMetric":
        return cls("custom", g0_func=g0_func, g0_samples=samples)

    def scaled(self, lam: float) -> "BackgroundMetric":
        return BackgroundMetric(self.kind, self.radius, self.center, self.scale * lam,
                                self.g0_func, self.g0_samples)

    @property
    def hyperbolic(self) -> bool:
        return self.kind in ("poincare_disk", "poincare_exterior") and self.scale == 1.0

    def label(self) -> str:
        if self.kind in ("poincare_disk", "poincare_exterior"):
            return f"{self.kind}({self.radius:g})"
        return self.kind

    def g0_raw(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "euclidean":
            g = np.ones(z.shape)
        elif self.kind == "poincare_disk":
            R = self.radius
            d = R * R - np.abs(z - self.center) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(d > 0, 4.0 * R * R / d ** 2, np.nan)
        elif self.kind == "poincare_exterior":
            rho = np.abs(z - self.center)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(rho > self.radius, 1.0 / (rho * np.log(rho / self.radius)) ** 2, np.nan)
        else:
            if self.g0_func is None:
                raise InvalidMetricError("sampled custom metric has no pointwise evaluation")
            g = np.asarray(self.g0_func(z), dtype=float)
        return self.scale * g

    def g0(self, grid: DomainGrid) -> np.ndarray:
        """Conformal factor on the grid's masked-in nodes (NaN elsewhere)."""
        if self.kind == "custom" and self.g0_samples is not None:
            g = self.scale * np.asarray(self.g0_samples, dtype=float)
            if g.shape != grid.shape:
                raise InvalidMetricError("custom samples do not match the grid")
        else:
            g = self.g0_raw(grid.z)
        vals = g[grid.mask]
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidMetricError(f"g0 is not positive and finite on {grid!r} for {self.label()}")
        return np.where(grid.mask, g, np.nan)


def gaussian_curvature(metric: BackgroundMetric, grid: DomainGrid) -> ScalarField:
    """k_g = -(2/g0) d_z d_zbar log g0.

    Closed-form kinds return the analytic value at every masked-in node; custom
    metrics use the five-point stencil (interior nodes only).
    """
    g0 = metric.g0(grid)
    if metric.kind == "euclidean":
        k = np.zeros(grid.shape)
    elif metric.kind in ("poincare_disk", "poincare_exterior"):
        k = np.full(grid.shape, -1.0 / metric.scale)
    else:
        k = -(2.0 / g0) * 0.25 * lap5(np.log(g0), grid)
    return ScalarField(grid, k)


def laplacian_g(f: ScalarField, metric: BackgroundMetric) -> ScalarField:
    """Delta_g f = (1/(4 g0)) * five-point Laplacian, on interior nodes."""
    grid = f.grid
    if grid.n_interior == 0:
        raise EmptyDomainError("grid has no interior nodes")
    return ScalarField(grid, lap5(f.data, grid) / (4.0 * metric.g0(grid)))


def q_norm_sq(q, metric: BackgroundMetric, grid: DomainGrid) -> ScalarField:
    """|q|_g^2 = |q(z)|^2 / g0^r."""
    g0 = metric.g0(grid)
    zz = np.where(grid.mask, grid.z, 1.0)
    qv = q.eval(zz)
    return ScalarField(grid, np.abs(qv) ** 2 / g0 ** q.r)


# dumps ------------------------------------------------------------------

def write_grid_csv(path, grid: DomainGrid, columns: Mapping[str, np.ndarray]) -> None:
    """CSV with columns i, j, x, y followed by one column per named field."""
    path = Path(path)
    names = list(columns)
    sel = np.nonzero(grid.mask)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["i", "j", "x", "y", *names])
        cols = [np.asarray(columns[nm])[sel] for nm in names]
        for k in range(sel[0].size):
            a, b = sel[0][k], sel[1][k]
            row = [int(grid.I[a, b]), int(grid.J[a, b]), repr(float(grid.x[a, b])), repr(float(grid.y[a, b]))]
            row += [repr(float(c[k])) for c in cols]
            wr.writerow(row)


def write_grid_header(path, grid: DomainGrid, extra: dict | None = None) -> None:
    hdr = grid.header()
    if extra:
        hdr.update(extra)
    Path(path).write_text(json.dumps(hdr, indent=2, sort_keys=True) + "\n")


def read_grid_csv(path, grid: DomainGrid) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_grid_csv` onto a known grid."""
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        head = next(rd)
        if head[:4] != ["i", "j", "x", "y"]:
            raise DomainError(f"{path}: expected header i,j,x,y,...")
        names = head[4:]
        out = {nm: grid.empty() for nm in names}
        for lineno, row in enumerate(rd, start=2):
            a, b = grid.index_of(int(row[0]), int(row[1]))
            if not (0 <= a < grid.shape[0] and 0 <= b < grid.shape[1]) or not grid.mask[a, b]:
                raise DomainError(f"{path}:{lineno}: node ({row[0]}, {row[1]}) is not in {grid!r}")
            for nm, val in zip(names, row[4:]):
                out[nm][a, b] = float(val)
    missing = [nm for nm, arr in out.items() if np.isnan(arr[grid.mask]).any()]
    if missing:
        raise DomainError(f"{path}: fields {missing} do not cover every node")
    return out

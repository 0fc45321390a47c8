"""Discrete Dirichlet problems (Delta_g - d) u = f and the shift constants of
the monotone iteration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import DomainError, EmptyDomainError, NoConvergenceError
from .geometry import BackgroundMetric, DomainGrid, lap5
from .toda_core import Background, TodaField, jacobian_diag, jacobian_full, jacobian_real


@dataclass
class DirichletProblem:
    grid: DomainGrid
    metric: BackgroundMetric
    shift: float | np.ndarray  # d >= 0, scalar or per node
    source: np.ndarray  # f on interior nodes
    boundary_values: np.ndarray  # prescribed on boundary nodes

    def __post_init__(self):
        d = np.asarray(self.shift, dtype=float)
        neg = np.any(d[self.grid.interior] < 0) if d.ndim else d < 0
        if neg:
            raise DomainError("shift must be non-negative")
        if not np.all(np.isfinite(np.asarray(self.source)[self.grid.interior])):
            raise DomainError("source must be finite on interior nodes")


class ShiftedOperator:
    """Factorized (Delta_g - d) on the interior nodes of one grid.

    The matrix is scaled by -4 g0 h^2 so that it is a symmetric M-matrix:
    (4 + 4 g0 h^2 d) u_p - sum of interior neighbours.
    """

    def __init__(self, grid: DomainGrid, g0: np.ndarray, shift):
        if grid.n_interior == 0:
            raise EmptyDomainError("grid has no interior nodes")
        self.grid = grid
        self.g0 = g0
        h2 = grid.spacing ** 2
        idx = -np.ones(grid.shape, dtype=np.int64)
        inner = grid.interior
        idx[inner] = np.arange(int(inner.sum()))
        self.idx = idx
        d = np.broadcast_to(np.asarray(shift, dtype=float), grid.shape)
        self.shift = d
        self.weight = 4.0 * g0 * h2  # scaling of the equation
        diag = (4.0 + self.weight * d)[inner]
        rows, cols = [np.arange(diag.size)], [np.arange(diag.size)]
        vals = [diag]
        # boundary neighbours move to the right-hand side
        self._bnd_terms = []
        for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = np.roll(np.roll(idx, -da, axis=0), -db, axis=1)
            both = inner & (nb >= 0)
            rows.append(idx[both])
            cols.append(nb[both])
            vals.append(-np.ones(int(both.sum())))
            self._bnd_terms.append((da, db))
        A = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(diag.size, diag.size))
        self.A = A
        self._lu = splu(A)

    def _rhs(self, f, phi):
        grid = self.grid
        b = -self.weight * f
        full = np.where(grid.boundary, phi, 0.0)
        acc = np.zeros(grid.shape)
        for da, db in self._bnd_terms:
            acc += np.roll(np.roll(full, -da, axis=0), -db, axis=1)
        return (b + acc)[grid.interior]

    def apply(self, u):
        """(Delta_g - d) u on interior nodes."""
        return lap5(u, self.grid) / (4.0 * self.g0) - self.shift * u

    def roundoff_floor(self, u: np.ndarray, f: np.ndarray) -> float:
        """Residual level set by double rounding in the stencil itself.

        Where g0 h^2 is small the residual is a difference of terms of size
        |u| / (g0 h^2), so an absolute tolerance below 64 eps times that size
        cannot be certified.
        """
        inner = self.grid.interior
        scale = 8.0 * np.abs(np.nan_to_num(u)) / self.weight + np.abs(self.shift * np.nan_to_num(u)) + np.abs(f)
        return float(64 * np.finfo(float).eps * np.max(scale[inner], initial=0.0))

    def solve(self, f: np.ndarray, phi: np.ndarray, tol: float = 1e-10, refine: int = 3) -> np.ndarray:
        grid = self.grid
        b = self._rhs(f, phi)
        x = self._lu.solve(b)
        u = np.where(grid.boundary, phi, np.nan)
        best = np.inf
        for _ in range(refine + 1):
            u[grid.interior] = x
            res = self.apply(u) - f
            err = float(np.max(np.abs(res[grid.interior]), initial=0.0))
            best = min(best, err)
            if err <= max(tol, self.roundoff_floor(u, f)):
                return u
            x = x + self._lu.solve(b - self.A @ x)
        raise NoConvergenceError(f"linear solve residual {best:.3e} above tol {tol:.1e}", best_residual=best)


def solve_dirichlet(p: DirichletProblem, tol: float = 1e-10) -> np.ndarray:
    """u with |(Delta_g - d) u - f| <= tol on interior nodes and u = boundary values."""
    op = ShiftedOperator(p.grid, p.metric.g0(p.grid), p.shift)
    return op.solve(np.asarray(p.source, dtype=float), np.asarray(p.boundary_values, dtype=float), tol)


# shift constants --------------------------------------------------------

def _coupled(k: int, ncomp: int, full: bool) -> list[int]:
    if full:
        return sorted({(k - 1) % ncomp, k, (k + 1) % ncomp})
    return [j for j in (k - 1, k, k + 1) if 0 <= j < ncomp]


def shift_fields(low: TodaField, high: TodaField, bg: Background) -> np.ndarray:
    """Per-node max over the box [low, high] of dF_k/dw_k, floored at 0.

    Each diagonal partial is a sum of exponentials of linear forms, hence
    convex in every coordinate, so the max is attained at a box vertex; only
    the coordinates the partial depends on are enumerated.
    """
    if low.full != high.full or low.r != high.r:
        raise DomainError("box corners must be the same kind of field")
    lo, hi = low.w, high.w
    m = low.grid.mask
    if np.any(lo[:, m] > hi[:, m] + 1e-12):
        raise DomainError("box_low must lie below box_high")
    ncomp, r, full = low.n_components, low.r, low.full
    out = np.zeros(lo.shape)
    for k in range(ncomp):
        vars_ = _coupled(k, ncomp, full)
        best = np.zeros(lo.shape[1:])
        for pick in itertools.product((0, 1), repeat=len(vars_)):
            W = hi.copy()
            for v, p in zip(vars_, pick):
                W[v] = lo[v] if p == 0 else hi[v]
            with np.errstate(over="ignore", invalid="ignore"):
                D = jacobian_diag(W, bg, r, full)[k]
            best = np.fmax(best, D)
        out[k] = np.maximum(best, 0.0)
    return np.where(m, out, np.nan)


def shift_constants(low: TodaField, high: TodaField, q, metric=None, bg: Background | None = None) -> np.ndarray:
    """d_k = max(0, max over the box of dF_k/dw_k), one constant per component."""
    bg = bg or Background.of(q, metric or low.metric, low.grid)
    D = shift_fields(low, high, bg)
    inner = low.grid.interior
    return np.array([max(0.0, float(np.max(D[k][inner], initial=0.0))) for k in range(D.shape[0])])


def offdiagonal_sign_check(q, metric, box: tuple[TodaField, TodaField], samples: int = 1000,
                           seed: int = 0, bg: Background | None = None) -> bool:
    """Sampled check that dF_k/dw_j <= 0 for j != k inside the box."""
    low, high = box
    bg = bg or Background.of(q, metric, low.grid)
    rng = np.random.default_rng(seed)
    m = low.grid.mask
    ii = np.flatnonzero(m.ravel())
    pick = rng.choice(ii, size=min(samples, ii.size), replace=samples > ii.size)
    lo = low.w.reshape(low.n_components, -1)[:, pick]
    hi = high.w.reshape(high.n_components, -1)[:, pick]
    t = rng.random(lo.shape)
    W = lo + t * (hi - lo)
    sub = Background(bg.g0.ravel()[pick], bg.kg.ravel()[pick], bg.qn2.ravel()[pick], bg.log_qn2.ravel()[pick])
    J = jacobian_full(W, sub, low.r) if low.full else jacobian_real(W, sub, low.r)
    off = ~np.eye(J.shape[0], dtype=bool)
    return bool(np.all(J[off] <= 0.0))

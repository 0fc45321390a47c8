"""Independent ODE solver for rotationally symmetric data q = z^m dz^r.

On radial functions Delta_g = (1 / (4 g0)) (d^2/drho^2 + (1/rho) d/drho); the
real Toda system becomes a two-point boundary value problem solved by
finite-difference Newton relaxation (or monotone iteration on the same mesh).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu, spsolve

from .errors import ConfigurationError, DomainError, NoConvergenceError
from .geometry import BackgroundMetric
from .toda_core import Background, base_values, jacobian_real, rhs_real_arrays


@dataclass(frozen=True)
class RadialProblem:
    r: int
    m: int
    rho_min: float
    rho_max: float
    metric: BackgroundMetric
    # Dirichlet values (n entries each); ``inner`` is ignored when rho_min == 0
    outer: tuple[float, ...]
    inner: tuple[float, ...] | None = None
    scale: complex = 1.0

    def __post_init__(self):
        if not 0 <= self.rho_min < self.rho_max:
            raise DomainError("need 0 <= rho_min < rho_max")
        if self.m < 0 or self.r < 2:
            raise DomainError("need m >= 0 and r >= 2")
        if self.metric.kind not in ("euclidean", "poincare_disk"):
            raise DomainError("radial problems use the euclidean or a centred poincare_disk metric")
        if self.metric.kind == "poincare_disk":
            if self.metric.center != 0 or self.rho_max >= self.metric.radius:
                raise DomainError("poincare_disk metric must be centred with rho_max < radius")
        n = self.r // 2
        if len(self.outer) != n or (self.rho_min > 0 and (self.inner is None or len(self.inner) != n)):
            raise DomainError(f"boundary values need {n} entries")
        vals = list(self.outer) + list(self.inner or [])
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("boundary values must be finite")

    @classmethod
    def hyperbolic_disk(cls, r: int, m: int, rho_max: float, radius: float = 1.0) -> "RadialProblem":
        """Disk problem with base-solution data at rho_max, like the 2D truncation."""
        return cls(r, m, 0.0, rho_max, BackgroundMetric.poincare_disk(radius), tuple(base_values(r)))


@dataclass(frozen=True)
class RadialConfig:
    nodes: int = 2001
    residual_tol: float = 1e-9
    max_iter: int = 100
    method: str = "newton"  # or "monotone"

    def __post_init__(self):
        if self.nodes < 5 or self.residual_tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("bad radial solver settings")
        if self.method not in ("newton", "monotone"):
            raise ConfigurationError("method must be 'newton' or 'monotone'")


@dataclass
class RadialProfile:
    rho: np.ndarray
    w: np.ndarray  # (n, nodes)
    problem: RadialProblem
    residual: float
    trace: list[float] = field(default_factory=list)

    def __call__(self, rho) -> np.ndarray:
        """Cubic-spline interpolation of every component at ``rho``."""
        return CubicSpline(self.rho, self.w, axis=1)(np.asarray(rho, dtype=float))

    def write_csv(self, path, k: int | None = None) -> None:
        """Two-column (rho, w_k) file, or every component when ``k`` is None."""
        ks = [k] if k is not None else list(range(1, self.w.shape[0] + 1))
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["rho"] + [f"w_{j}" for j in ks])
            for i, rho in enumerate(self.rho):
                wr.writerow([repr(float(rho))] + [repr(float(self.w[j - 1, i])) for j in ks])


def _background(p: RadialProblem, rho: np.ndarray) -> Background:
    g0 = p.metric.g0_raw(rho.astype(complex))
    kg = np.zeros_like(rho) if p.metric.kind == "euclidean" else np.full_like(rho, -1.0 / p.metric.scale)
    if p.scale == 0:
        lq = np.full_like(rho, -np.inf)
    else:
        with np.errstate(divide="ignore"):
            zpow = 2 * p.m * np.log(rho) if p.m else np.zeros_like(rho)
        lq = zpow + 2 * math.log(abs(p.scale)) - p.r * np.log(g0)
    return Background(g0, kg, np.exp(lq), lq)


def _operator(rho: np.ndarray, g0: np.ndarray, regular: bool) -> sparse.csr_matrix:
    """Rows of Delta_g on the interior nodes (plus rho = 0 when regular)."""
    N = rho.size
    d = rho[1] - rho[0]
    rows, cols, vals = [], [], []
    for i in range(N - 1):
        if i == 0 and not regular:
            continue
        s = 1.0 / (4.0 * g0[i])
        if i == 0:
            # w'' + w'/rho -> 2 w''(0), ghost node w_{-1} = w_1
            rows += [0, 0]
            cols += [0, 1]
            vals += [-4.0 / d ** 2 * s, 4.0 / d ** 2 * s]
            continue
        a = 1.0 / d ** 2 - 1.0 / (2 * d * rho[i])
        c = 1.0 / d ** 2 + 1.0 / (2 * d * rho[i])
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [a * s, -2.0 / d ** 2 * s, c * s]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))


def radial_solve(p: RadialProblem, cfg: RadialConfig = RadialConfig(),
                 initial: np.ndarray | None = None) -> RadialProfile:
    """Solve Delta_g w_k = F_k(w) on [rho_min, rho_max].

    ``newton`` runs damped Newton on the discrete system from ``initial``
    (default: the outer boundary values, the base solution for disk problems);
    ``monotone`` runs the shifted monotone iteration from the same start.
    """
    r, n = p.r, p.r // 2
    rho = np.linspace(p.rho_min, p.rho_max, cfg.nodes)
    regular = p.rho_min == 0
    bg = _background(p, rho)
    L = _operator(rho, bg.g0, regular)
    free = np.ones(rho.size, dtype=bool)
    free[-1] = False
    if not regular:
        free[0] = False
    w = np.empty((n, rho.size))
    w[:] = np.asarray(p.outer, dtype=float)[:, None] if initial is None else initial
    w[:, -1] = p.outer
    if not regular:
        w[:, 0] = p.inner

    def residual_of(w):
        R = np.stack([L @ w[k] for k in range(n)]) - rhs_real_arrays(w, bg, r)
        return np.where(free, R, 0.0)

    trace = []
    F = residual_of(w)
    res = float(np.max(np.abs(F)))
    trace.append(res)
    if cfg.method == "newton":
        w, res = _newton(w, F, residual_of, L, bg, r, free, cfg, trace)
    else:
        w, res = _monotone(w, residual_of, L, bg, r, free, cfg, trace)
    if res > cfg.residual_tol:
        raise NoConvergenceError(f"radial solve stalled at residual {res:.3e}", best_residual=min(trace),
                                 trace=trace)
    return RadialProfile(rho, w, p, res, trace)


def _stack(L, J, n, N):
    # block matrix: Laplacian blocks on the diagonal minus the pointwise Jacobian
    blocks = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            D = sparse.diags(J[a, b])
            blocks[a][b] = (L - D) if a == b else -D
    return sparse.bmat(blocks, format="csc")


def _newton(w, F, residual_of, L, bg, r, free, cfg, trace):
    n, N = w.shape
    res = trace[-1]
    fix = np.flatnonzero(~np.tile(free, n))
    for _ in range(cfg.max_iter):
        if res <= cfg.residual_tol:
            break
        J = jacobian_real(w, bg, r)
        A = _stack(L, J, n, N).tolil()
        for i in fix:
            A.rows[i] = [i]
            A.data[i] = [1.0]
        step = spsolve(A.tocsc(), -F.ravel()).reshape(n, N)
        t = 1.0
        while True:
            trial = w + t * step
            with np.errstate(over="ignore", invalid="ignore"):
                Ft = residual_of(trial)
            rt = float(np.max(np.abs(Ft)))
            if np.isfinite(rt) and (rt < res or t < 1e-4):
                break
            t *= 0.5
        w, F, res = trial, Ft, rt
        trace.append(res)
    return w, res


def _box_shift(lo, hi, bg, r):
    """Per-node max of dF_k/dw_k over the box [lo, hi] (vertex enumeration)."""
    from .toda_core import jacobian_diag

    n = lo.shape[0]
    out = np.zeros_like(lo)
    for k in range(n):
        vars_ = [j for j in (k - 1, k, k + 1) if 0 <= j < n]
        for pick in itertools.product((0, 1), repeat=len(vars_)):
            W = hi.copy()
            for v, b in zip(vars_, pick):
                W[v] = lo[v] if b == 0 else hi[v]
            out[k] = np.fmax(out[k], jacobian_diag(W, bg, r, False)[k])
    return np.maximum(out, 0.0)


def _monotone(w, residual_of, L, bg, r, free, cfg, trace):
    """Decreasing iteration from ``w`` (a supersolution) with the box closed from
    below by the constant subsolution."""
    from .super_sub import xi_constants, _constants_are_sub

    n, N = w.shape
    res = trace[-1]
    sup_q = float(np.max(bg.qn2))
    E = float(r)
    while not (_constants_are_sub(xi_constants(r, E), r, sup_q) and np.all(xi_constants(r, E)[:, None] <= w)):
        E *= 2.0
        if E > 2.0 ** 60:
            raise ConfigurationError("no constant subsolution below the initial profile")
    lo = np.broadcast_to(xi_constants(r, E)[:, None], w.shape).copy()
    lo[:, ~free] = w[:, ~free]
    d = _box_shift(lo, w, bg, r)
    mats = []
    for k in range(n):
        A = (L - sparse.diags(d[k])).tolil()
        for i in np.flatnonzero(~free):
            A.rows[i] = [i]
            A.data[i] = [1.0]
        mats.append(splu(A.tocsc()))
    for _ in range(cfg.max_iter * 50):
        if res <= cfg.residual_tol:
            break
        Fw = rhs_real_arrays(w, bg, r)
        new = w.copy()
        for k in range(n):
            b = Fw[k] - d[k] * w[k]
            b[~free] = w[k, ~free]
            new[k] = mats[k].solve(b)
        w = new
        res = float(np.max(np.abs(residual_of(w))))
        trace.append(res)
    return w, res

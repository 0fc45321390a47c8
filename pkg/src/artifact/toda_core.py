"""Toda right-hand sides, the real reduction, residuals, closed-form reference
solutions and the model-system constants.

Fields are g-normalized: ``w`` is measured against the background metric's
own frame.  The Euclidean-frame field is ``w_l - ((r+1-2l)/2) log g0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .differential import RDifferential, zeros_in
from .errors import DivergedFieldError, DomainError, InfeasibleConstantsError, UnsupportedMetricError
from .geometry import BackgroundMetric, DomainGrid, ScalarField, gaussian_curvature, lap5, q_norm_sq

OVERFLOW = 700.0
LOG_CLAMP = 50.0


@dataclass
class SeamInfo:
    """Bookkeeping left behind by combine_min / combine_max."""

    branches: list  # TodaField inputs
    active: np.ndarray  # (ncomp, *shape) index of the active branch
    seams: np.ndarray  # (ncomp, *shape) bool
    sense: str  # "min" or "max"


@dataclass
class TodaField:
    """Unknowns of the Toda system on a grid.

    Real fields carry n = r // 2 components (w_1..w_n); ``full=True`` fields
    carry all r components.
    """

    r: int
    w: np.ndarray
    grid: DomainGrid
    metric: BackgroundMetric
    full: bool = False
    flagged: np.ndarray | None = None
    seam: SeamInfo | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 2:
            w = w[None]
        if w.shape != (self.n_components,) + self.grid.shape:
            raise DomainError(f"field shape {w.shape} does not match {self.n_components} x {self.grid.shape}")
        self.w = np.where(self.grid.mask, w, np.nan)
        if self.flagged is None:
            self.flagged = np.zeros(self.grid.shape, dtype=bool)

    @property
    def n(self) -> int:
        return self.r // 2

    @property
    def n_components(self) -> int:
        return self.r if self.full else self.r // 2

    def component(self, k: int) -> ScalarField:
        """1-based component as a ScalarField."""
        return ScalarField(self.grid, self.w[k - 1])

    def extended(self) -> np.ndarray:
        """All r components; real fields use w_{r+1-i} = -w_i and w_{n+1} = 0 (odd r)."""
        if self.full:
            return self.w.copy()
        return extend_real(self.w, self.r)

    def copy(self, w=None, **kw) -> "TodaField":
        args = dict(r=self.r, w=self.w.copy() if w is None else w, grid=self.grid, metric=self.metric,
                    full=self.full, flagged=self.flagged.copy(), meta=dict(self.meta))
        args.update(kw)
        return TodaField(**args)

    def real_part(self) -> "TodaField":
        """First n components of a full field (as a real field)."""
        if not self.full:
            return self
        return TodaField(self.r, self.w[: self.n].copy(), self.grid, self.metric, flagged=self.flagged.copy())

    def reality_defect(self) -> float:
        W = self.extended()
        m = self.grid.mask
        return float(max(np.max(np.abs(W[i][m] + W[self.r - 1 - i][m])) for i in range(self.r)))


def extend_real(w: np.ndarray, r: int) -> np.ndarray:
    n = r // 2
    W = np.empty((r,) + w.shape[1:])
    W[:n] = w
    if r % 2:
        W[n] = 0.0
    for i in range(n):
        W[r - 1 - i] = -w[i]
    return W


def constant_field(values, r: int, grid: DomainGrid, metric: BackgroundMetric, full: bool = False) -> TodaField:
    values = np.asarray(values, dtype=float)
    w = values[:, None, None] * np.ones((1,) + grid.shape)
    return TodaField(r, w, grid, metric, full=full)


@dataclass(frozen=True)
class Background:
    """Per-node geometric data entering the right-hand side."""

    g0: np.ndarray
    kg: np.ndarray
    qn2: np.ndarray
    log_qn2: np.ndarray

    @classmethod
    def of(cls, q: RDifferential, metric: BackgroundMetric, grid: DomainGrid) -> "Background":
        g0 = metric.g0(grid)
        kg = gaussian_curvature(metric, grid).data
        qn2 = q_norm_sq(q, metric, grid).data
        with np.errstate(divide="ignore"):
            lq = np.log(qn2)
        return cls(g0, kg, qn2, lq)


def _guard(w, mask):
    vals = w[..., mask]
    if vals.size and (not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > OVERFLOW):
        raise DivergedFieldError(f"field leaves |w| <= {OVERFLOW:g}")


def _qterm(w1, lq):
    # e^{2 w_1} |q|_g^2, stable when |q|_g = 0
    with np.errstate(over="ignore"):
        return np.exp(2.0 * w1 + lq)


def rhs_real_arrays(w: np.ndarray, bg: Background, r: int) -> np.ndarray:
    """F_1..F_n of the real reduction, node by node."""
    n = r // 2
    c = 2 * n + 2 - r
    kg = bg.kg
    F = np.empty(w.shape)
    if n == 1:
        F[0] = _qterm(w[0], bg.log_qn2) - np.exp(-c * w[0]) - ((r - 1) / 4) * kg
        return F
    F[0] = _qterm(w[0], bg.log_qn2) - np.exp(-w[0] + w[1]) - ((r - 1) / 4) * kg
    for k in range(2, n):
        F[k - 1] = np.exp(-w[k - 2] + w[k - 1]) - np.exp(-w[k - 1] + w[k]) - ((r + 1 - 2 * k) / 4) * kg
    F[n - 1] = np.exp(-w[n - 2] + w[n - 1]) - np.exp(-c * w[n - 1]) - ((r + 1 - 2 * n) / 4) * kg
    return F


def rhs_full_arrays(W: np.ndarray, bg: Background, r: int) -> np.ndarray:
    """The r-equation system, node by node."""
    kg = bg.kg
    F = np.empty(W.shape)
    corner = _qterm(0.5 * (W[0] - W[r - 1]), bg.log_qn2)
    F[0] = corner - np.exp(W[1] - W[0]) - ((r - 1) / 4) * kg
    for j in range(2, r):
        F[j - 1] = np.exp(W[j - 1] - W[j - 2]) - np.exp(W[j] - W[j - 1]) - ((r + 1 - 2 * j) / 4) * kg
    F[r - 1] = np.exp(W[r - 1] - W[r - 2]) - corner + ((r - 1) / 4) * kg
    return F


def rhs_real(w: TodaField, q: RDifferential, metric: BackgroundMetric | None = None) -> np.ndarray:
    metric = metric or w.metric
    _guard(w.w, w.grid.mask)
    return rhs_real_arrays(w.w, Background.of(q, metric, w.grid), w.r)


def rhs_full(W: TodaField | np.ndarray, q: RDifferential, metric: BackgroundMetric | None = None,
             grid: DomainGrid | None = None) -> np.ndarray:
    """Right-hand sides of all r equations.  Accepts a full field, a real field
    (which is reality-extended first) or a raw (r, *shape) array with ``grid``."""
    if isinstance(W, TodaField):
        grid, metric, r = W.grid, metric or W.metric, W.r
        arr = W.extended()
    else:
        arr = np.asarray(W, dtype=float)
        r = arr.shape[0]
    if abs(np.nansum(arr, axis=0)[grid.mask]).max(initial=0.0) > 1e-9 * max(1.0, np.nanmax(np.abs(arr))):
        raise DomainError("full system requires sum w_i = 0")
    _guard(arr, grid.mask)
    return rhs_full_arrays(arr, Background.of(q, metric, grid), r)


def rhs(w: TodaField, bg: Background) -> np.ndarray:
    """Dispatch on ``w.full``."""
    _guard(w.w, w.grid.mask)
    return rhs_full_arrays(w.w, bg, w.r) if w.full else rhs_real_arrays(w.w, bg, w.r)


def rhs_magnitude(w: np.ndarray, bg: Background, r: int, full: bool) -> np.ndarray:
    """Sum of absolute values of the individual terms of each F_k (a local scale)."""
    D = rhs_full_arrays(w, bg, r) if full else rhs_real_arrays(w, bg, r)
    J = jacobian_diag(w, bg, r, full)
    curv = np.abs(bg.kg) * (r - 1) / 4
    return np.abs(D) + J + curv


def jacobian_diag(w: np.ndarray, bg: Background, r: int, full: bool) -> np.ndarray:
    """dF_k / dw_k for every component."""
    J = np.empty(w.shape)
    if full:
        corner = _qterm(0.5 * (w[0] - w[r - 1]), bg.log_qn2)
        J[0] = corner + np.exp(w[1] - w[0])
        for j in range(2, r):
            J[j - 1] = np.exp(w[j - 1] - w[j - 2]) + np.exp(w[j] - w[j - 1])
        J[r - 1] = np.exp(w[r - 1] - w[r - 2]) + corner
        return J
    n = r // 2
    c = 2 * n + 2 - r
    if n == 1:
        J[0] = 2 * _qterm(w[0], bg.log_qn2) + c * np.exp(-c * w[0])
        return J
    J[0] = 2 * _qterm(w[0], bg.log_qn2) + np.exp(-w[0] + w[1])
    for k in range(2, n):
        J[k - 1] = np.exp(-w[k - 2] + w[k - 1]) + np.exp(-w[k - 1] + w[k])
    J[n - 1] = np.exp(-w[n - 2] + w[n - 1]) + c * np.exp(-c * w[n - 1])
    return J


def jacobian_real(w: np.ndarray, bg: Background, r: int) -> np.ndarray:
    """Full (n, n, ...) Jacobian of the real reduction."""
    n = r // 2
    J = np.zeros((n, n) + w.shape[1:])
    D = jacobian_diag(w, bg, r, full=False)
    for k in range(n):
        J[k, k] = D[k]
    for k in range(n - 1):
        link = np.exp(-w[k] + w[k + 1])
        J[k, k + 1] = -link
        J[k + 1, k] = -link
    return J


def jacobian_full(W: np.ndarray, bg: Background, r: int) -> np.ndarray:
    J = np.zeros((r, r) + W.shape[1:])
    D = jacobian_diag(W, bg, r, full=True)
    for k in range(r):
        J[k, k] = D[k]
    for j in range(r - 1):
        link = np.exp(W[j + 1] - W[j])
        J[j, j + 1] -= link
        J[j + 1, j] -= link
    corner = _qterm(0.5 * (W[0] - W[r - 1]), bg.log_qn2)
    J[0, r - 1] -= corner
    J[r - 1, 0] -= corner
    return J


def defect_arrays(w: TodaField, bg: Background) -> np.ndarray:
    """Delta_g w_k - F_k on interior nodes (NaN elsewhere)."""
    return lap5(w.w, w.grid) / (4.0 * bg.g0) - rhs(w, bg)


@dataclass
class EquationResidual:
    equation_index: int
    sup_norm: float
    l2_norm: float
    flagged_nodes: int


@dataclass
class ResidualReport:
    equations: list[EquationResidual]

    @property
    def sup(self) -> float:
        return max((e.sup_norm for e in self.equations), default=0.0)

    def to_json(self) -> str:
        return json.dumps([e.__dict__ for e in self.equations])


def residual(w: TodaField, q: RDifferential, metric: BackgroundMetric | None = None,
             bg: Background | None = None) -> ResidualReport:
    """Sup and discrete L2 norms of Delta_g w_k - F_k over interior, unflagged nodes."""
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    T = defect_arrays(w, bg)
    sel = w.grid.interior & ~w.flagged
    h2 = w.grid.spacing ** 2
    nflag = int((w.grid.interior & w.flagged).sum())
    out = []
    for k in range(w.n_components):
        v = np.abs(T[k][sel])
        out.append(EquationResidual(k + 1, float(v.max(initial=0.0)), float(np.sqrt(h2 * np.sum(v * v))), nflag))
    return ResidualReport(out)


# closed-form solutions --------------------------------------------------

def base_values(r: int) -> np.ndarray:
    """log((l-1)!/(r-l)! * 2^{r+1-2l}) for l = 1..n."""
    n = r // 2
    return np.array([math.lgamma(l) - math.lgamma(r - l + 1) + (r + 1 - 2 * l) * math.log(2.0)
                     for l in range(1, n + 1)])


def base_values_full(r: int) -> np.ndarray:
    return np.array([math.lgamma(l) - math.lgamma(r - l + 1) + (r + 1 - 2 * l) * math.log(2.0)
                     for l in range(1, r + 1)])


def base_solution(r: int, metric: BackgroundMetric, grid: DomainGrid, full: bool = False) -> TodaField:
    if not metric.hyperbolic:
        raise UnsupportedMetricError("the constant solution needs a curvature -1 metric")
    vals = base_values_full(r) if full else base_values(r)
    return constant_field(vals, r, grid, metric, full=full)


def q_solution(q: RDifferential, metric: BackgroundMetric, grid: DomainGrid, full: bool = False) -> TodaField:
    """w_l = -((r+1-2l)/r) log|q|_g, clamped at |log|q|_g| <= 50 near zeros.

    Nodes within two spacings of a zero (or where q vanishes) are flagged.
    """
    r = q.r
    qn2 = q_norm_sq(q, metric, grid).data
    with np.errstate(divide="ignore"):
        L = np.clip(0.5 * np.log(qn2), -LOG_CLAMP, LOG_CLAMP)
    flagged = grid.mask & (qn2 == 0)
    if not q.is_zero:
        for z0 in zeros_in(q, grid):
            flagged |= grid.mask & (np.abs(grid.z - z0) <= 2 * grid.spacing + 1e-12)
    else:
        flagged = grid.mask.copy()
    count = r if full else r // 2
    w = np.stack([-((r + 1 - 2 * l) / r) * L for l in range(1, count + 1)])
    return TodaField(r, w, grid, metric, full=full, flagged=flagged)


def ratio_bound_constants(r: int) -> list[float]:
    """(k-1)(r-k+1) / (k(r-k)) for 2 <= k <= n."""
    if r < 4:
        return []
    n = r // 2
    return [(k - 1) * (r - k + 1) / (k * (r - k)) for k in range(2, n + 1)]


# model-system constants -------------------------------------------------

@dataclass(frozen=True)
class ModelConstants:
    m: int
    a: float
    b: float
    c: float
    d: tuple[float, ...]

    def relation_defects(self) -> list[float]:
        """Left-hand sides of the model constant system (all zero for a valid tuple)."""
        m, a, b, c, d = self.m, self.a, self.b, self.c, self.d
        if m == 1:
            # first and terminal relations merge: (a + b) d_1 = a + c
            return [(a + b) * d[0] - (a + c)]
        out = [(1 + a) * d[0] - (a + 2) + 1 / d[1]]
        for k in range(2, m):
            out.append(-d[k - 2] * d[k - 1] + 3 * d[k - 1] - 3 + 1 / d[k])
        out.append(-d[m - 2] * d[m - 1] + (2 + b) * d[m - 1] - (1 + c))
        return out


def d_constants(m: int, a: float, b: float, c: float) -> ModelConstants:
    """Terminal closed form followed by the backward recurrence."""
    if m < 1 or min(a, b, c) <= 0:
        raise InfeasibleConstantsError("need m >= 1 and a, b, c > 0")
    d = [0.0] * m
    d[m - 1] = (c * (a * m + 1 - a) + a) / (b * (a * m + 1 - a) + a)
    for t in range(m - 1, 0, -1):
        beta = (a * t + 1 - a) / a
        d[t - 1] = (1 + beta * (2 - 1 / d[t])) / (1 + beta)
        if not d[t - 1] > 0:
            raise InfeasibleConstantsError(f"recurrence gave d_{t} = {d[t - 1]}")
    if not d[m - 1] > 0:
        raise InfeasibleConstantsError("terminal constant is not positive")
    return ModelConstants(m, float(a), float(b), float(c), tuple(d))


def d_closed_form_b1c2(m: int, a: float) -> list[float]:
    """(m-k+2)(ma+ka+2-a) / ((m-k+1)(ma+ka+2)), the b = 1, c = 2 family."""
    return [(m - k + 2) * (m * a + k * a + 2 - a) / ((m - k + 1) * (m * a + k * a + 2)) for k in range(1, m + 1)]

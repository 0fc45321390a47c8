"""Construction, combination and verification of super/subsolutions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionFailureError, DomainError, UnsupportedMetricError
from .geometry import BackgroundMetric, DomainGrid, lap5
from .toda_core import (Background, SeamInfo, TodaField, base_values, constant_field,
                        rhs_magnitude, rhs_real_arrays)

E_CAP = 2.0 ** 60


@dataclass
class OrderedPair:
    sub: "TodaField"
    super: "TodaField"
    tol: float = 1e-12

    def __post_init__(self):
        a, b = self.sub, self.super
        if a.r != b.r or a.full != b.full or a.grid is not b.grid:
            raise DomainError("pair members must share r, kind and grid")
        m = a.grid.mask
        if np.any(a.w[:, m] > b.w[:, m] + self.tol):
            raise DomainError("sub must lie below super")

    def strict(self) -> bool:
        m = self.sub.grid.interior
        return bool(np.all(self.sub.w[:, m] < self.super.w[:, m]))


# E-constants subsolution -------------------------------------------------

def _a_constants(r: int, E: float) -> np.ndarray:
    n = r // 2
    a = np.empty(n)
    a[n - 1] = -math.log(n * E)
    for k in range(n - 1, 0, -1):
        a[k - 1] = a[k] - math.log(k * E)
    return a


def xi_constants(r: int, E: float) -> np.ndarray:
    """g-normalized subsolution constants a_k + (r+1-2k) log 2."""
    n = r // 2
    return _a_constants(r, E) + np.array([(r + 1 - 2 * k) * math.log(2.0) for k in range(1, n + 1)])


def _constants_are_sub(xi: np.ndarray, r: int, sup_qg2: float) -> bool:
    lq = math.log(sup_qg2) if sup_qg2 > 0 else -np.inf
    bg = Background(np.ones(1), np.full(1, -1.0), np.full(1, sup_qg2), np.full(1, lq))
    F = rhs_real_arrays(xi[:, None], bg, r)[:, 0]
    # F_1 is increasing in |q|_g^2, so the sup bound covers every node
    return bool(np.all(F <= 0.0))


def subsolution_constants(r: int, metric: BackgroundMetric, sup_qg2: float, grid: DomainGrid,
                          E0: float | None = None) -> TodaField:
    """Constant subsolution below the base solution on a curvature -1 metric.

    E is doubled from ``E0`` (default r) until the constants satisfy the
    subsolution inequality for |q|_g^2 <= sup_qg2 and lie strictly below the
    base solution.
    """
    if not metric.hyperbolic:
        raise UnsupportedMetricError("constant subsolutions need a curvature -1 metric")
    if not np.isfinite(sup_qg2) or sup_qg2 < 0:
        raise DomainError("sup |q|_g^2 must be finite")
    base = base_values(r)
    E = float(E0 if E0 is not None else r)
    while E <= E_CAP:
        xi = xi_constants(r, E)
        if _constants_are_sub(xi, r, sup_qg2) and np.all(xi < base):
            f = constant_field(xi, r, grid, metric)
            f.meta.update(E=E, a=_a_constants(r, E).tolist())
            return f
        E *= 2.0
    raise ConstructionFailureError(f"no admissible E below 2^60 for sup|q|_g^2 = {sup_qg2:g}")


# combinations ----------------------------------------------------------------

def _combine(fields: list[TodaField], sense: str) -> TodaField:
    if not fields:
        raise DomainError("nothing to combine")
    ref = fields[0]
    for f in fields[1:]:
        if f.grid is not ref.grid or f.r != ref.r or f.full != ref.full:
            raise DomainError("combined fields must share grid, r and kind")
    stack = np.stack([f.w for f in fields])  # (B, ncomp, *shape)
    big = np.where(np.isnan(stack), np.inf if sense == "min" else -np.inf, stack)
    active = np.argmin(big, axis=0) if sense == "min" else np.argmax(big, axis=0)
    w = np.take_along_axis(stack, active[None], axis=0)[0]
    mask = ref.grid.mask
    seams = np.zeros(active.shape, dtype=bool)
    for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.roll(np.roll(active, -da, axis=1), -db, axis=2)
        nbm = np.roll(np.roll(mask, -da, axis=0), -db, axis=1)
        seams |= (nb != active) & nbm
    seams &= mask
    flagged = np.zeros(ref.grid.shape, dtype=bool)
    for b, f in enumerate(fields):
        flagged |= np.any((active == b), axis=0) & f.flagged
    out = TodaField(ref.r, w, ref.grid, ref.metric, full=ref.full, flagged=flagged)
    out.seam = SeamInfo(list(fields), active, seams, sense)
    return out


def combine_min(supers: list[TodaField]) -> TodaField:
    """Componentwise minimum; NaN entries mark nodes where a branch is undefined."""
    return _combine(supers, "min")


def combine_max(subs: list[TodaField]) -> TodaField:
    return _combine(subs, "max")


def shift_solution(w: TodaField, c: float) -> TodaField:
    """All components shifted by c (a supersolution for c >= 0, sub for c <= 0)."""
    out = w.copy(w=w.w + c)
    out.meta["shift"] = c
    return out


def restrict(w: TodaField, region_mask: np.ndarray) -> TodaField:
    """Same field with values outside ``region_mask`` set undefined (NaN)."""
    return w.copy(w=np.where(region_mask, w.w, np.nan))


# verification ----------------------------------------------------------------

@dataclass
class VerificationReport:
    kind: str
    passed: bool
    slack: float
    violations: list[int]
    worst_value: float
    worst_node: tuple[int, int] | None
    seam_nodes: int
    violating_nodes: list[tuple[int, int, int]] = field(default_factory=list)

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["violating_nodes"] = [list(v) for v in self.violating_nodes[:200]]
        return json.dumps(d)


def _defect(w: TodaField, bg: Background) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        return lap5(w.w, w.grid) / (4.0 * bg.g0) - rhs_nan(w, bg)


def rhs_nan(w: TodaField, bg: Background) -> np.ndarray:
    """rhs without the divergence guard (undefined branch regions stay NaN)."""
    from .toda_core import rhs_full_arrays

    return rhs_full_arrays(w.w, bg, w.r) if w.full else rhs_real_arrays(w.w, bg, w.r)


def _verify(w: TodaField, q, metric, slack, kind: str, bg: Background | None) -> VerificationReport:
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    grid = w.grid
    sgn = 1.0 if kind == "super" else -1.0
    if slack is None:
        with np.errstate(invalid="ignore", over="ignore"):
            mag = rhs_magnitude(w.w, bg, w.r, w.full)
        slack_arr = 10.0 * grid.spacing ** 2 * (1.0 + np.nan_to_num(mag, nan=0.0, posinf=0.0))
        slack_val = float(np.nanmax(slack_arr[:, grid.interior], initial=0.0))
    else:
        slack_arr = np.full(w.w.shape, float(slack))
        slack_val = float(slack)
    T = sgn * _defect(w, bg)  # must be <= slack
    check = np.broadcast_to(grid.interior & ~w.flagged, w.w.shape).copy()
    seam_count = 0
    bad = np.zeros(w.w.shape, dtype=bool)
    if w.seam is not None:
        seams = w.seam.seams & check
        seam_count = int(seams.any(axis=0).sum())
        check &= ~seams
        # active branch at the seam node and across its one-node collar
        for b, br in enumerate(w.seam.branches):
            Tb = sgn * _defect(br, bg)
            use = seams & (w.seam.active == b)
            collar = use.copy()
            for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                collar |= np.roll(np.roll(use, da, axis=1), db, axis=2)
            collar &= grid.interior & ~br.flagged
            collar &= np.isfinite(Tb)
            bad |= collar & (Tb > slack_arr)
    with np.errstate(invalid="ignore"):
        bad |= check & (T > slack_arr)
    viol = [int(bad[k].sum()) for k in range(w.n_components)]
    Tm = np.where(check, T, -np.inf)
    worst = float(np.max(Tm)) if np.isfinite(np.max(Tm)) else 0.0
    worst_node = None
    if np.isfinite(np.max(Tm)):
        k, a, b_ = np.unravel_index(np.argmax(Tm), Tm.shape)
        worst_node = (int(grid.I[a, b_]), int(grid.J[a, b_]))
    nodes = [(int(k) + 1, int(grid.I[a, b_]), int(grid.J[a, b_])) for k, a, b_ in zip(*np.nonzero(bad))]
    return VerificationReport(kind, sum(viol) == 0, slack_val, viol, worst, worst_node, seam_count, nodes)


def verify_supersolution(w: TodaField, q, metric=None, slack: float | None = None,
                         bg: Background | None = None) -> VerificationReport:
    """Delta_g w_k <= F_k + slack at interior nodes (seams by the one-sided rule)."""
    return _verify(w, q, metric, slack, "super", bg)


def verify_subsolution(w: TodaField, q, metric=None, slack: float | None = None,
                       bg: Background | None = None) -> VerificationReport:
    """Delta_g w_k >= F_k - slack at interior nodes (seams by the one-sided rule)."""
    return _verify(w, q, metric, slack, "sub", bg)

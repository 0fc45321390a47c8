"""Monotone super/subsolution iteration and the existence constructions built
on it: bounded-q disks, disk exhaustion, plane gluing and finite zeros."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .differential import RDifferential, group_zeros, zeros_in
from .elliptic import ShiftedOperator, shift_fields
from .errors import (ConfigurationError, ExhaustionInconsistencyError, NoConvergenceError,
                     SolverInconsistencyError)
from .geometry import BackgroundMetric, DomainGrid, embed
from .super_sub import OrderedPair, combine_max, combine_min, restrict, shift_solution, subsolution_constants
from .toda_core import (Background, TodaField, base_solution, defect_arrays, q_solution, ratio_bound_constants,
                        rhs, rhs_magnitude)

log = logging.getLogger(__name__)

DEFAULT_FZ_RADIUS = 0.9
# safety factor on the linear response to the pair's stencil defect
DEFECT_ALLOWANCE_FACTOR = 2.0


@dataclass(frozen=True)
class SolverConfig:
    spacing: float = 0.02
    outer_tol: float = 1e-9
    residual_tol: float = 1e-6
    max_outer: int = 20000
    linear_tol: float = 1e-10
    exhaustion_levels: int = 4
    truncation_radius: float = 8.0
    # node-wise shifts d_k(x) instead of one constant per component
    local_shift: bool = True
    # run the increasing sequence from the subsolution too and tighten the box
    two_sided: bool = True
    rebox_every: int = 5
    # finish the exhaustion on the grid-truncated unit disk itself
    close_unit_disk: bool = True
    zero_radius: float = 0.5
    c_margin: float = 0.1
    # "absolute" or "relative" (defect divided by 1 + local rhs magnitude)
    residual_mode: str = "absolute"

    def __post_init__(self):
        for name in ("spacing", "outer_tol", "residual_tol", "linear_tol", "truncation_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.linear_tol > self.outer_tol / 10:
            raise ConfigurationError("linear_tol must be <= outer_tol / 10")
        if self.max_outer < 1 or self.exhaustion_levels < 1:
            raise ConfigurationError("max_outer and exhaustion_levels must be >= 1")
        if self.residual_mode not in ("absolute", "relative"):
            raise ConfigurationError("residual_mode must be 'absolute' or 'relative'")

    def to_dict(self) -> dict:
        return asdict(self)


def _defect_sup(w: TodaField, bg: Background, mode: str) -> float:
    T = defect_arrays(w, bg)
    if mode == "relative":
        T = T / (1.0 + rhs_magnitude(w.w, bg, w.r, w.full))
    sel = w.grid.interior & ~w.flagged
    return float(np.max(np.abs(T[:, sel]), initial=0.0))


def monotone_iterate(pair: OrderedPair, q: RDifferential, metric: BackgroundMetric | None = None,
                     cfg: SolverConfig = SolverConfig(), boundary: np.ndarray | None = None,
                     bg: Background | None = None) -> TodaField:
    """Decreasing iteration from the supersolution.

    Each step solves (Delta_g - d_k) w_k^{new} = F_k(w) - d_k w_k with the
    boundary values held fixed.  ``d`` bounds dF_k/dw_k over the current box;
    with ``cfg.two_sided`` the box is the pair of running iterates (the
    increasing one starts at the subsolution) and shrinks as they close in.
    """
    sup, sub = pair.super, pair.sub
    grid = sup.grid
    metric = metric or sup.metric
    bg = bg or Background.of(q, metric, grid)
    mask, inner = grid.mask, grid.interior
    bnd = grid.boundary
    phi = sup.w.copy() if boundary is None else np.asarray(boundary, dtype=float)
    btol = max(1e-12, pair.tol)
    if np.any(phi[:, bnd] > sup.w[:, bnd] + btol) or np.any(phi[:, bnd] < sub.w[:, bnd] - btol):
        raise ConfigurationError("boundary values must lie between sub and super")
    if not np.all(np.isfinite(sup.w[:, mask])) or not np.all(np.isfinite(sub.w[:, mask])):
        raise ConfigurationError("pair must be finite on the domain")

    U = sup.copy(seam=None)
    U.flagged = np.zeros(grid.shape, dtype=bool)
    U.w[:, bnd] = phi[:, bnd]
    Lo = sub.copy(seam=None)
    Lo.flagged = np.zeros(grid.shape, dtype=bool)
    Lo.w[:, bnd] = phi[:, bnd]
    ncomp = U.n_components
    g0 = bg.g0

    trace: list[float] = []
    rises: list[float] = []
    shifts_log: list[list[float]] = []
    ops: list[ShiftedOperator] = []
    D = None
    excursion = 0.0
    allowance = 0.0
    converged = False
    # positive part of the supersolution's discrete defect: analytic pairs miss
    # the discrete inequalities by their stencil error
    with np.errstate(invalid="ignore", over="ignore"):
        sdef = np.nan_to_num(defect_arrays(U, bg), nan=0.0, posinf=0.0, neginf=0.0)
    sdef = np.where(inner, np.maximum(sdef, 0.0), 0.0)
    pair_defect = float(np.max(sdef, initial=0.0))
    zero_phi = np.zeros(grid.shape)

    def response(ops_):
        # max of e >= 0 with (Delta_g - d) e = -defect, e = 0 on the boundary
        if pair_defect == 0.0:
            return 0.0
        return max(float(np.max(ops_[k].solve(-sdef[k], zero_phi, cfg.linear_tol)[inner], initial=0.0))
                   for k in range(ncomp))
    res_sup = np.inf

    def make_ops(low, high):
        lo = np.minimum(low.w, high.w)
        hi = np.maximum(low.w, high.w)
        Dn = shift_fields(low.copy(w=lo), high.copy(w=hi), bg)
        if not cfg.local_shift:
            Dn = np.stack([np.full(grid.shape, float(np.max(Dn[k][inner], initial=0.0))) for k in range(ncomp)])
        Dn = np.where(mask, Dn, 0.0)
        return Dn, [ShiftedOperator(grid, g0, Dn[k]) for k in range(ncomp)]

    def step(field, Dk, ops_):
        F = rhs(field, bg)
        new = field.w.copy()
        for k in range(ncomp):
            new[k] = ops_[k].solve(F[k] - Dk[k] * field.w[k], phi[k], cfg.linear_tol)
        return new

    for it in range(cfg.max_outer):
        if D is None or (it % cfg.rebox_every == 0 and cfg.two_sided):
            low = Lo if cfg.two_sided else sub
            Dn, new_ops = make_ops(low, U) if D is None or cfg.two_sided else (D, ops)
            if D is None or np.max(D[:, inner] / np.maximum(Dn[:, inner], 1e-300)) > 1.25:
                D, ops = Dn, new_ops
                allowance = max(allowance, response(ops))
                shifts_log.append([float(np.max(D[k][inner], initial=0.0)) for k in range(ncomp)])
                log.debug("step %d: new shifts %s", it, shifts_log[-1])
        Unew = step(U, D, ops)
        rise = float(np.max(Unew[:, inner] - U.w[:, inner], initial=0.0))
        rises.append(rise)
        log.debug("step %d: rise %.3e", it, rise)
        if it == 0:
            excursion = rise
        if rise > 10 * cfg.linear_tol + DEFECT_ALLOWANCE_FACTOR * allowance:
            raise SolverInconsistencyError(f"iterate rose by {rise:.3e} at step {it} "
                                           f"(defect allowance {allowance:.2e})")
        if cfg.two_sided:
            Lnew = step(Lo, D, ops)
            Lo = Lo.copy(w=Lnew)
        dU = float(np.max(np.abs(Unew[:, inner] - U.w[:, inner]), initial=0.0))
        U = U.copy(w=Unew)
        trace.append(dU)
        if dU <= cfg.outer_tol:
            res_sup = _defect_sup(U, bg, cfg.residual_mode)
            if res_sup <= cfg.residual_tol:
                converged = True
                break
    if not converged:
        res_sup = _defect_sup(U, bg, cfg.residual_mode)
        raise NoConvergenceError(f"no convergence after {cfg.max_outer} steps (last step {trace[-1]:.2e}, "
                                 f"defect {res_sup:.2e})", best_residual=res_sup, trace=trace)
    # analytic pairs are discrete super/subsolutions only up to their stencil
    # defect; the accumulated rise is the drift that defect can cause
    tol = cfg.outer_tol + float(sum(rises))
    sandwich = bool(np.all(U.w[:, mask] >= sub.w[:, mask] - tol - 1e-9)
                    and np.all(U.w[:, mask] <= sup.w[:, mask] + tol + 1e-9))
    U.meta.update(
        iterations=len(trace),
        trace=trace,
        converged=True,
        residual_sup=res_sup,
        shifts=shifts_log,
        startup_excursion=excursion,
        pair_defect=pair_defect,
        defect_allowance=allowance,
        total_rise=float(sum(rises)),
        sandwich=sandwich,
        gap=float(np.max(U.w[:, inner] - Lo.w[:, inner], initial=0.0)) if cfg.two_sided else None,
    )
    return U


# normalization changes ------------------------------------------------------------

def renormalize(w: TodaField, metric: BackgroundMetric, grid: DomainGrid | None = None) -> TodaField:
    """Re-express a field in another background metric (and optionally move it
    onto another grid on the same lattice):

        w_l^{new} = w_l^{old} + ((r+1-2l)/2) log(g0_new / g0_old).
    """
    grid = grid or w.grid
    r = w.r
    src = w.grid
    g_old = w.metric.g0(src)
    data = np.concatenate([w.w, np.log(g_old)[None]])
    moved = embed(data, src, grid) if grid is not src else np.where(grid.mask, data, np.nan)
    wv, lg_old = moved[:-1], moved[-1]
    with np.errstate(invalid="ignore"):
        g_new = np.where(grid.mask, metric.g0_raw(np.where(grid.mask, grid.z, 0.0)), np.nan)
    lg_new = np.log(g_new)
    ks = np.arange(1, w.n_components + 1)
    coef = ((r + 1 - 2 * ks) / 2.0)[:, None, None]
    out = wv + coef * (lg_new - lg_old)[None]
    flagged = embed(w.flagged.astype(float)[None], src, grid)[0] > 0.5 if grid is not src else w.flagged
    return TodaField(r, out, grid, metric, full=w.full, flagged=np.nan_to_num(flagged).astype(bool),
                     meta=dict(w.meta))


# existence constructions ------------------------------------------------------------

def bounded_disk_solve(q: RDifferential, radius: float, cfg: SolverConfig, center: complex = 0j,
                       subsolution_E: float | None = None) -> TodaField:
    """Complete-type solution on disk(radius) for its own hyperbolic metric.

    Pair: E-constant subsolution and the base solution; boundary values are the
    base solution's trace.
    """
    grid = DomainGrid.disk(radius, cfg.spacing, center)
    metric = BackgroundMetric.poincare_disk(radius, center)
    bg = Background.of(q, metric, grid)
    sup_q = float(np.max(bg.qn2[grid.mask]))
    sub = subsolution_constants(q.r, metric, sup_q, grid, E0=subsolution_E)
    top = base_solution(q.r, metric, grid)
    out = monotone_iterate(OrderedPair(sub, top), q, metric, cfg, bg=bg)
    out.meta["E"] = sub.meta["E"]
    return out


def exhaustion_radii(levels: int) -> list[float]:
    return [(math.e ** k - 1) / (math.e ** k + 1) for k in range(1, levels + 1)]


def disk_exhaustion_solve(q: RDifferential, cfg: SolverConfig = SolverConfig()) -> TodaField:
    """Complete solution on the unit disk as the limit over D_k = {|z| < R_k}.

    Each level is solved in its own hyperbolic metric, then re-expressed in the
    unit-disk metric; successive levels must increase on common nodes.
    """
    if cfg.exhaustion_levels < 2:
        raise ConfigurationError("disk exhaustion needs at least two levels")
    radii = exhaustion_radii(cfg.exhaustion_levels)
    if cfg.close_unit_disk:
        radii.append(1.0)
    unit = BackgroundMetric.poincare_disk(1.0)
    levels = []
    prev = None
    tol = 100 * cfg.outer_tol + cfg.residual_tol
    for R in radii:
        w = bounded_disk_solve(q, R, cfg)
        grid = w.grid
        wu = renormalize(w, unit)
        info = {"R": R, "iterations": w.meta["iterations"], "E": w.meta["E"], "nodes": grid.n_nodes}
        if prev is not None:
            lower = embed(prev.w, prev.grid, grid)
            common = np.isfinite(lower) & grid.mask
            inc = (wu.w - lower)[common]
            info["min_increment"] = float(inc.min())
            info["max_increment"] = float(inc.max())
            if inc.min() < -tol:
                raise ExhaustionInconsistencyError(f"level R={R:.4f} decreased by {-inc.min():.3e}")
        levels.append(info)
        prev = wu
        last = w
    out = prev
    out.meta.update(last.meta)
    out.meta["levels"] = levels
    return out


def _lattice_point(z: complex, h: float) -> complex:
    return complex(round(z.real / h) * h, round(z.imag / h) * h)


def choose_center(q: RDifferential, h: float, offset: float = 1.0) -> complex:
    """A lattice point where q does not vanish, far from the zeros."""
    roots = q.roots() if q.degree > 0 else []
    if not roots:
        return 0j
    dist0 = min(abs(z) for z in roots)
    if dist0 >= offset:
        return 0j
    cands = [_lattice_point(offset * np.exp(0.5j * np.pi * k), h) for k in range(4)]
    cands += [_lattice_point(offset * np.exp(0.5j * np.pi * (k + 0.5)), h) for k in range(4)]
    return max(cands, key=lambda p: (round(min(abs(p - z) for z in roots), 9), -abs(p)))


def exterior_solve(q: RDifferential, r_inner: float, r_outer: float, cfg: SolverConfig,
                   center: complex = 0j) -> TodaField:
    """Solution on {r_inner < |z - c| < r_outer} in the complete exterior metric,
    base-type at the inner rim and equal to w_q at the outer truncation."""
    grid = DomainGrid.annulus(r_inner, r_outer, cfg.spacing, center)
    metric = BackgroundMetric.poincare_exterior(r_inner, center)
    bg = Background.of(q, metric, grid)
    wq = q_solution(q, metric, grid)
    top = combine_min([base_solution(q.r, metric, grid), wq])
    top.seam = None
    outer = grid.boundary & (np.abs(grid.z - center) > 0.5 * (r_inner + r_outer))
    sup_q = float(np.max(bg.qn2[grid.mask]))
    E = float(q.r)
    while True:
        sub = subsolution_constants(q.r, metric, sup_q, grid, E0=E)
        if np.all(sub.w[:, grid.mask] <= top.w[:, grid.mask]):
            break
        E = 2 * sub.meta["E"]
    out = monotone_iterate(OrderedPair(sub, top), q, metric, cfg, bg=bg)
    out.meta.update(E=sub.meta["E"], outer_boundary_nodes=int(outer.sum()))
    return out


def _drift(cfg: SolverConfig, *fields: TodaField) -> float:
    return 10 * cfg.outer_tol + 1e-9 + sum(f.meta.get("total_rise", 0.0) for f in fields)


@dataclass
class GlueRecord:
    center: complex
    R1: float
    R2: float
    R2p: float
    R1p: float
    c: float


def plane_glue_solve(q: RDifferential, cfg: SolverConfig = SolverConfig()) -> TodaField:
    """Solution on disk(truncation_radius) in the Euclidean metric for a nonzero
    polynomial q, squeezed between sub = max(u, v) and super = min(w_q, v + c).

    u: complete solution on a zero-free disk B_{R1}; v: solution on the
    exterior of B_{R2}.  The construction is centred at a lattice point p with
    q(p) != 0 (the origin when it qualifies).
    """
    if q.is_zero:
        raise ConfigurationError("q = 0 on the plane: the solution set is empty")
    h = cfg.spacing
    T = cfg.truncation_radius
    p = choose_center(q, h)
    roots = q.roots() if q.degree > 0 else []
    dist = min((abs(z - p) for z in roots), default=np.inf)
    R1 = min(0.8 * dist, T / 4)
    if R1 < 8 * h:
        raise ConfigurationError(f"zero-free disk radius {R1:.3g} is too small for spacing {h:g}")
    R2 = R1 / 2
    R2p, R1p = R2 + (R1 - R2) / 3, R2 + 2 * (R1 - R2) / 3
    grid = DomainGrid.disk(T, h, p)
    eu = BackgroundMetric.euclidean()
    rel = replace(cfg, residual_mode="relative")

    u0 = bounded_disk_solve(q, R1, rel, center=p)
    v0 = exterior_solve(q, R2, T, rel, center=p)
    u, v = renormalize(u0, eu, grid), renormalize(v0, eu, grid)
    wq = q_solution(q, eu, grid)
    rho = np.abs(grid.z - p)
    # the ring fixes the gluing; the outer rim makes the super's trace equal w_q
    ring = grid.mask & (((rho >= R2p) & (rho <= R1p)) | grid.boundary)
    gap = (wq.w - v.w)[:, ring]
    c = max(0.0, float(np.nanmax(gap))) * (1 + cfg.c_margin) + 1e-6

    sub = combine_max([u, v])
    vc = restrict(shift_solution(v, c), rho >= R2p)
    top = combine_min([wq, vc])
    # u and v respect their own pairs only up to their solver drift
    pair = OrderedPair(sub, top, tol=_drift(cfg, u0, v0))
    out = monotone_iterate(pair, q, eu, cfg)
    outside = grid.mask & (rho > R1)
    slack = pair.tol + out.meta["total_rise"]
    lo_ok = bool(np.all(out.w[:, outside] >= v.w[:, outside] - slack))
    hi_ok = bool(np.all(out.w[:, outside] <= v.w[:, outside] + c + slack))
    out.meta.update(glue=asdict(GlueRecord(p, R1, R2, R2p, R1p, c)), exterior_bound=lo_ok and hi_ok,
                    exterior_slack=slack, u_E=u0.meta["E"], v_E=v0.meta["E"])
    out.meta["glue"]["center"] = [p.real, p.imag]
    out.meta["pair_fields"] = {"u": u, "v": v, "sub": sub, "super": top}
    return out


def finite_zeros_solve(q: RDifferential, cfg: SolverConfig = SolverConfig(), grid: DomainGrid | None = None,
                       metric: BackgroundMetric | None = None) -> TodaField:
    """Incomplete solution with w_q - c <= w <= w_q away from the zeros of q.

    Around each zero P: Omega_0 c Omega_1 c Omega_2 concentric disks and u_P the
    complete solution on Omega_2.  super = min(u_P + c, w_q) on Omega_1 and w_q
    outside; sub = u_P on Omega_0, max(u_P, w_q - c) on Omega_2 minus Omega_0,
    w_q - c outside.
    """
    metric = metric or BackgroundMetric.poincare_disk(1.0)
    # stop short of the rim, where the stencil defect of w_q in the hyperbolic
    # frame grows like (h / (1 - |z|))^2
    grid = grid or DomainGrid.disk(DEFAULT_FZ_RADIUS, cfg.spacing)
    if q.is_zero:
        raise ConfigurationError("q vanishes identically")
    zs = group_zeros(zeros_in(q, grid))
    if not zs:
        raise ConfigurationError("q has no zero inside the domain")
    reg = grid.region
    edge_R = reg.params[-1]
    rel = replace(cfg, residual_mode="relative")
    wq = q_solution(q, metric, grid)
    parts = []
    for P, mult in zs:
        others = [abs(P - Q) for Q, _ in zs if Q != P]
        rho2 = min(cfg.zero_radius, 0.45 * min(others, default=np.inf), 0.5 * (edge_R - abs(P - reg.center)))
        if rho2 < 6 * grid.spacing:
            raise ConfigurationError(f"zero at {P} is too close to the boundary or to another zero")
        uP = renormalize(bounded_disk_solve(q, rho2, rel, center=P), metric, grid)
        dist = np.abs(grid.z - P)
        parts.append((P, mult, rho2, uP, dist))
    cs = []
    for P, mult, rho2, uP, dist in parts:
        ring = grid.mask & (dist >= 0.4 * rho2) & (dist <= 0.7 * rho2)
        cs.append(max(0.0, float(np.nanmax((wq.w - uP.w)[:, ring]))))
    c = max(cs) * (1 + cfg.c_margin) + 1e-6
    inner0 = np.zeros(grid.shape, dtype=bool)
    outer1 = np.zeros(grid.shape, dtype=bool)
    supers, subs = [wq], []
    for P, mult, rho2, uP, dist in parts:
        inner0 |= dist < 0.4 * rho2
        outer1 |= dist < 0.7 * rho2
        supers.append(restrict(shift_solution(uP, c), dist < 0.7 * rho2))
        subs.append(uP)
    subs.append(restrict(shift_solution(wq, -c), ~inner0))
    top = combine_min(supers)
    sub = combine_max(subs)
    out = monotone_iterate(OrderedPair(sub, top, tol=_drift(cfg, *[p[3] for p in parts])), q, metric, cfg)
    away = grid.mask & ~outer1
    slack = 10 * cfg.outer_tol + 1e-9 + out.meta["total_rise"]
    env_lo = float(np.min((out.w - (wq.w - c))[:, away]))
    env_hi = float(np.max((out.w - wq.w)[:, away]))
    out.meta.update(c=c, zeros=[[P.real, P.imag, m] for P, m in zs],
                    envelope={"min_above_lower": env_lo, "max_above_upper": env_hi, "slack": slack,
                              "holds": env_lo >= -slack and env_hi <= slack},
                    zero_radii=[p[2] for p in parts])
    out.meta["pair_fields"] = {"sub": sub, "super": top, "w_q": wq}
    return out


# estimate suite ---------------------------------------------------------------------

def estimate_suite(w: TodaField, q: RDifferential, tol: float = 1e-3, exclude_radius: float = 0.05,
                   metric: BackgroundMetric | None = None) -> dict:
    """Strict bounds satisfied by complete solutions when q has zeros:

    w_k < -((r+1-2k)/r) log|q|_g, the ratio bounds, and the first-link bound,
    all with additive tolerance at nodes farther than ``exclude_radius`` from
    every zero.  For the unit-disk hyperbolic metric the completeness lower
    bounds of the Euclidean-frame links are checked too.
    """
    metric = metric or w.metric
    grid = w.grid
    r, n = w.r, w.n
    bg = Background.of(q, metric, grid)
    wq = q_solution(q, metric, grid)
    W = w.extended()
    away = grid.mask.copy()
    if not q.is_zero:
        for z0 in zeros_in(q, grid):
            away &= np.abs(grid.z - z0) > exclude_radius
    out: dict = {"tol": tol}
    if not q.is_zero:
        margin = (wq.w - w.w)[:, away & ~wq.flagged]
        out["wq_bound"] = {"min_margin": float(margin.min()), "holds": bool(margin.min() > -tol)}
    links = np.exp(W[1:] - W[:-1])  # l_1..l_{r-1}
    first = np.exp(2 * W[0] + bg.log_qn2) / links[0]
    out["first_link_ratio"] = {"max": float(np.max(first[away])), "holds": bool(np.max(first[away]) < 1 + tol)}
    ratios = []
    for k, lb in zip(range(2, n + 1), ratio_bound_constants(r)):
        rat = links[k - 2] / links[k - 1]
        lo, hi = float(np.min(rat[away])), float(np.max(rat[away]))
        ratios.append({"k": k, "lower": lb, "min": lo, "max": hi, "holds": lo > lb - tol and hi < 1 + tol})
    out["ratios"] = ratios
    if metric.kind == "poincare_disk" and metric.scale == 1.0:
        g0 = bg.g0
        ok = True
        lows = []
        for l in range(1, n + 1):
            if l < n:
                lk = links[l - 1]
            else:
                cexp = 2 * n + 2 - r
                lk = np.exp(-cexp * W[n - 1])
            val = g0 * (lk - l * (r - l) / 4.0)
            m = float(np.min(val[grid.mask]))
            lows.append({"l": l, "min_excess": m})
            ok &= m >= -tol
        out["completeness"] = {"terms": lows, "holds": bool(ok)}
    out["holds"] = all(v.get("holds", True) for v in out.values() if isinstance(v, dict)) and all(
        x["holds"] for x in ratios)
    return out

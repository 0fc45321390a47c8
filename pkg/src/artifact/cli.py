"""Batch driver: ``toda-run --config run.cfg --out DIR``.

Config files are flat ``key = value`` lines; values that parse as JSON are
taken as JSON (lists, numbers, booleans), anything else as a bare string.
``#`` starts a comment.  Exit status: 0 success, 1 solver failure or failed
invariant, 2 rejected or malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .differential import RDifferential
from .elliptic import offdiagonal_sign_check
from .errors import (ArtifactError, ConfigurationError, DomainError, InvalidMetricError,
                     UnsupportedMetricError)
from .geometry import BackgroundMetric, DomainGrid, Region, read_grid_csv, write_grid_csv
from .hitchin import commutator_field, pullback_curvature
from .iteration import (DEFAULT_FZ_RADIUS, SolverConfig, disk_exhaustion_solve, estimate_suite,
                        finite_zeros_solve, plane_glue_solve)
from .radial_oracle import RadialConfig, RadialProblem, radial_solve
from .toda_core import TodaField, base_values, residual

log = logging.getLogger("artifact.cli")

EXIT_OK, EXIT_FAIL, EXIT_REJECT = 0, 1, 2
SCENARIOS = ("disk", "plane", "finite_zeros", "radial", "validate_only")
_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


class UsageError(Exception):
    pass


class Rejected(Exception):
    pass


@dataclass
class RunConfig:
    scenario: str = "disk"
    r: int = 2
    q: list = field(default_factory=lambda: [0])  # coefficients c_0..c_m of q(z) dz^r
    laurent_shift: int = 0
    metric: str = "poincare_disk"
    domain_radius: float | None = None
    rho_max: float | None = None
    solution: str | None = None
    output_dir: str = "out"
    emit_plot_data: bool = False
    seed: int = 0
    threads: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def differential(self) -> RDifferential:
        try:
            return RDifferential(self.r, tuple(_complex(c) for c in self.q), self.laurent_shift)
        except (DomainError, TypeError, ValueError) as exc:
            raise UsageError(f"bad q/r: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        d["q"] = [_jsonable(_complex(c)) for c in self.q]
        # where results go does not change them
        d.pop("output_dir")
        return d


def _complex(c) -> complex:
    if isinstance(c, (list, tuple)) and len(c) == 2:
        return complex(float(c[0]), float(c[1]))
    return complex(c)


def _jsonable(v):
    if isinstance(v, complex):
        return v.real if v.imag == 0 else [v.real, v.imag]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


# config parsing ------------------------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    raw: dict[str, tuple[int, object]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"{source}:{lineno}: expected key = value, got {body!r}")
        key, val = (s.strip() for s in body.split("=", 1))
        if not key:
            raise UsageError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise UsageError(f"{source}:{lineno}: duplicate key {key!r} (first on line {raw[key][0]})")
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        raw[key] = (lineno, parsed)
    return build_config(raw, source)


def build_config(raw: dict[str, tuple[int, object]], source: str = "<config>") -> RunConfig:
    top = {f.name: f for f in fields(RunConfig)} | {"output": None}
    cfg_kw, solver_kw = {}, {}
    for key, (lineno, val) in raw.items():
        where = f"{source}:{lineno}: key {key!r}"
        if key in _SOLVER_KEYS:
            solver_kw[key] = val
        elif key in top and key != "solver":
            cfg_kw["output_dir" if key == "output" else key] = val
        else:
            raise UsageError(f"{where}: unknown key")
    try:
        solver = SolverConfig(**{k: _coerce(SolverConfig, k, v) for k, v in solver_kw.items()})
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise UsageError(f"{source}: solver settings: {exc}") from None
    try:
        kw = {k: _coerce(RunConfig, k, v) for k, v in cfg_kw.items()}
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{source}: {exc}") from None
    cfg = RunConfig(solver=solver, **kw)
    if cfg.scenario not in SCENARIOS:
        line = raw.get("scenario", (0, None))[0]
        raise UsageError(f"{source}:{line}: key 'scenario': must be one of {', '.join(SCENARIOS)}")
    if not isinstance(cfg.q, list):
        cfg.q = [cfg.q]
    return cfg


def _coerce(cls, key, val):
    ftype = {f.name: f.type for f in fields(cls)}[key]
    t = str(ftype)
    if val is None:
        return None
    if t.startswith("int"):
        if isinstance(val, bool) or not float(val).is_integer():
            raise ValueError(f"key {key!r} needs an integer, got {val!r}")
        return int(val)
    if t.startswith("float"):
        return float(val)
    if t.startswith("bool"):
        if not isinstance(val, bool):
            raise ValueError(f"key {key!r} needs true/false, got {val!r}")
        return val
    if t.startswith("str"):
        return str(val)
    return val


# scenarios -------------------------------------------------------------------------

def _metric(cfg: RunConfig, default_radius: float = 1.0) -> BackgroundMetric:
    try:
        if cfg.metric == "poincare_disk":
            return BackgroundMetric.poincare_disk(1.0)
        if cfg.metric == "euclidean":
            return BackgroundMetric.euclidean()
    except InvalidMetricError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError(f"key 'metric': unsupported value {cfg.metric!r} (use poincare_disk or euclidean)")


def check_preconditions(cfg: RunConfig, q: RDifferential) -> None:
    """Scenario rules applied before any solve."""
    if cfg.scenario == "plane":
        if q.is_zero:
            raise Rejected("scenario=plane with q = 0: the solution set Toda(q, g) is empty on a "
                           "parabolic surface when q vanishes, so there is nothing to solve")
        if q.laurent_shift:
            raise Rejected("scenario=plane needs a polynomial q")
    if cfg.scenario == "disk":
        if cfg.metric != "poincare_disk":
            raise Rejected("scenario=disk solves for the complete solution in the unit-disk hyperbolic metric")
        if q.laurent_shift:
            raise Rejected("scenario=disk needs a polynomial q")
    if cfg.scenario == "finite_zeros" and q.is_zero:
        raise Rejected("scenario=finite_zeros needs a q with at least one zero, not q = 0")
    if cfg.scenario == "radial":
        nz = [k for k, c in enumerate(q.coeffs) if c != 0]
        if len(nz) > 1 or q.laurent_shift:
            raise Rejected("scenario=radial needs a monomial q = c z^m dz^r")


def _field_columns(w: TodaField) -> dict[str, np.ndarray]:
    return {f"w_{k + 1}": w.w[k] for k in range(w.n_components)}


def _hard_checks(w: TodaField, q: RDifferential, cfg: RunConfig) -> dict:
    res = residual(w, q)
    checks = {
        "converged": bool(w.meta.get("converged", False)),
        "residual_sup": res.sup,
        "residual_ok": res.sup <= cfg.solver.residual_tol,
    }
    return checks


def _report(w: TodaField, q: RDifferential, cfg: RunConfig) -> dict:
    rep: dict = {"residual": json.loads(residual(w, q).to_json())}
    if cfg.scenario in ("disk", "plane") and not q.is_zero:
        rep["estimates"] = estimate_suite(w, q)
    if cfg.scenario == "disk" and q.is_zero:
        base = base_values(q.r)
        sel = w.grid.mask & (np.abs(w.grid.z) <= 0.9)
        rep["base_deviation"] = float(np.max(np.abs(w.w[:, sel] - base[:, None])))
    K, flags = pullback_curvature(w, q)
    vals = K.data[w.grid.mask & ~flags]
    rep["pullback_curvature"] = {"max": float(np.max(vals)) if vals.size else None,
                                 "flagged": int(flags.sum())}
    box = (w.meta["pair_fields"]["sub"], w.meta["pair_fields"]["super"]) if "pair_fields" in w.meta else (w, w)
    rep["offdiagonal_sign"] = offdiagonal_sign_check(q, w.metric, box, samples=200, seed=cfg.seed)
    return rep


def _meta_summary(w: TodaField) -> dict:
    keep = ("iterations", "trace", "residual_sup", "shifts", "startup_excursion", "total_rise", "sandwich",
            "pair_defect", "defect_allowance", "gap", "E", "levels", "glue", "exterior_bound", "exterior_slack",
            "u_E", "v_E", "c", "envelope", "zeros", "zero_radii")
    return {k: w.meta[k] for k in keep if k in w.meta}


def _problem_record(w: TodaField, q: RDifferential) -> dict:
    reg = w.grid.region
    m = w.metric
    return {
        "grid": {"kind": reg.kind, "params": list(reg.params), "center": [reg.center.real, reg.center.imag],
                 "spacing": w.grid.spacing, **w.grid.header()},
        "metric": {"kind": m.kind, "radius": m.radius, "center": [m.center.real, m.center.imag], "scale": m.scale},
        "q": {"r": q.r, "coeffs": [_jsonable(c) for c in q.coeffs], "laurent_shift": q.laurent_shift},
        "full": w.full,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def run_solve(cfg: RunConfig, out: Path) -> int:
    q = cfg.differential()
    check_preconditions(cfg, q)
    scfg = cfg.solver
    if cfg.scenario == "disk":
        w = disk_exhaustion_solve(q, scfg)
    elif cfg.scenario == "plane":
        w = plane_glue_solve(q, scfg)
    elif cfg.scenario == "finite_zeros":
        metric = _metric(cfg)
        R = cfg.domain_radius or (DEFAULT_FZ_RADIUS if metric.kind == "poincare_disk" else 4.0)
        w = finite_zeros_solve(q, scfg, grid=DomainGrid.disk(R, scfg.spacing), metric=metric)
    else:
        return run_radial(cfg, q, out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(out / "solution.csv", w.grid, _field_columns(w))
    checks = _hard_checks(w, q, cfg)
    report = _report(w, q, cfg)
    if cfg.emit_plot_data:
        K, _ = pullback_curvature(w, q)
        cols = _field_columns(w) | {"commutator": commutator_field(w, q).data, "pullback_curvature": K.data}
        write_grid_csv(out / "plot_data.csv", w.grid, cols)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "problem": _problem_record(w, q),
        "run": _meta_summary(w),
        "checks": checks,
        "estimates": report.get("estimates"),
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "report.json", report)
    ok = checks["converged"] and checks["residual_ok"]
    if "estimates" in report:
        ok &= bool(report["estimates"]["holds"])
    if "base_deviation" in report:
        ok &= report["base_deviation"] <= 2e-3
    print(("ok" if ok else "FAILED") + f": scenario={cfg.scenario} residual={checks['residual_sup']:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


def run_radial(cfg: RunConfig, q: RDifferential, out: Path) -> int:
    metric = _metric(cfg)
    m = len(q.coeffs) - 1
    scale = q.coeffs[-1]
    rho_max = cfg.rho_max or (1.0 - cfg.solver.spacing if metric.kind == "poincare_disk" else 4.0)
    outer = tuple(base_values(q.r)) if metric.kind == "poincare_disk" else \
        tuple(-((q.r + 1 - 2 * k) / q.r) * (m * math.log(rho_max) + math.log(abs(scale) or 1.0))
              for k in range(1, q.r // 2 + 1))
    prob = RadialProblem(q.r, m, 0.0, rho_max, metric, outer, scale=scale)
    prof = radial_solve(prob, RadialConfig(residual_tol=cfg.solver.residual_tol))
    out.mkdir(parents=True, exist_ok=True)
    prof.write_csv(out / "profile.csv")
    _write_json(out / "manifest.json", {"version": __version__, "config": cfg.to_dict(),
                                        "run": {"residual": prof.residual, "trace": prof.trace,
                                                "nodes": int(prof.rho.size)}})
    print(f"ok: scenario=radial residual={prof.residual:.3e}")
    return EXIT_OK


def load_solution(path: Path, manifest: dict) -> tuple[TodaField, RDifferential]:
    prob = manifest["problem"]
    g = prob["grid"]
    region = Region(g["kind"], tuple(g["params"]), complex(*g["center"]))
    grid = DomainGrid(region, g["spacing"])
    mm = prob["metric"]
    metric = BackgroundMetric(mm["kind"], mm["radius"], complex(*mm["center"]), mm["scale"])
    qq = prob["q"]
    q = RDifferential(qq["r"], tuple(_complex(c) for c in qq["coeffs"]), qq["laurent_shift"])
    cols = read_grid_csv(path, grid)
    n = q.r if prob.get("full") else q.r // 2
    names = [f"w_{k}" for k in range(1, n + 1)]
    if sorted(cols) != sorted(names):
        raise DomainError(f"{path}: expected columns {names}, found {sorted(cols)}")
    w = TodaField(q.r, np.stack([cols[nm] for nm in names]), grid, metric, full=bool(prob.get("full")))
    return w, q


def run_validate(cfg: RunConfig, path: Path, out: Path) -> int:
    mpath = path.parent / "manifest.json"
    if not mpath.exists():
        raise UsageError(f"{path}: no manifest.json next to the solution")
    try:
        manifest = json.loads(mpath.read_text())
        w, q = load_solution(path, manifest)
    except (OSError, ValueError, KeyError, DomainError) as exc:
        raise UsageError(f"{path}: cannot load solution: {exc}") from None
    res = residual(w, q)
    tol = manifest.get("config", {}).get("solver", {}).get("residual_tol", cfg.solver.residual_tol)
    report = {"source": str(path.name), "residual": json.loads(res.to_json()), "residual_tol": tol,
              "residual_ok": res.sup <= tol}
    scen = manifest.get("config", {}).get("scenario")
    if scen in ("disk", "plane") and not q.is_zero:
        report["estimates"] = estimate_suite(w, q)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "validation.json", report)
    ok = report["residual_ok"] and report.get("estimates", {"holds": True})["holds"]
    print(("ok" if ok else "FAILED") + f": validated {path.name} residual={res.sup:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


# entry point -----------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toda-run", description="Run a cyclic Toda scenario.")
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--threads", type=int, help="thread budget recorded in the manifest")
    p.add_argument("--seed", type=int, help="seed for sampled checks")
    p.add_argument("--validate", type=Path, help="solution CSV to validate (no solve)")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_REJECT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.config is not None:
            try:
                text = args.config.read_text()
            except OSError as exc:
                raise UsageError(f"cannot read config: {exc}") from None
            cfg = parse_config_text(text, str(args.config))
        elif args.validate is not None:
            cfg = RunConfig(scenario="validate_only")
        else:
            raise UsageError("need --config or --validate")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            cfg.threads = args.threads
        out = args.out or Path(cfg.output_dir)
        if args.validate is not None or cfg.scenario == "validate_only":
            src = args.validate or (Path(cfg.solution) if cfg.solution else None)
            if src is None:
                raise UsageError("validate_only needs --validate PATH or solution = PATH")
            return run_validate(cfg, src, out)
        return run_solve(cfg, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except Rejected as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except (ConfigurationError, UnsupportedMetricError, InvalidMetricError) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except ArtifactError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

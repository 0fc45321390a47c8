"""Holomorphic r-differentials q = q(z) dz^r with polynomial (optionally
centrally Laurent-shifted) coefficient function."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDifferentialError, DomainError, PoleError


@dataclass(frozen=True)
class RDifferential:
    r: int
    coeffs: tuple[complex, ...]  # c_0 .. c_m, q(z) = z^{-laurent_shift} * sum c_k z^k
    laurent_shift: int = 0

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 2:
            raise DomainError("r must be an integer >= 2")
        if self.laurent_shift < 0:
            raise DomainError("laurent_shift must be >= 0")
        cs = [complex(c) for c in self.coeffs] or [0j]
        while len(cs) > 1 and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def monomial(cls, m: int, r: int, scale: complex = 1.0) -> "RDifferential":
        return cls(r, tuple([0j] * m + [complex(scale)]))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def eval(self, z):
        """q(z) by Horner's rule; scalar in, scalar out."""
        z_arr = np.asarray(z, dtype=complex)
        if self.laurent_shift and np.any(z_arr == 0):
            raise PoleError("q has a pole at z = 0")
        acc = np.zeros(z_arr.shape, dtype=complex)
        for c in reversed(self.coeffs):
            acc = acc * z_arr + c
        if self.laurent_shift:
            acc = acc / z_arr ** self.laurent_shift
        return acc[()] if acc.ndim == 0 else acc

    def __call__(self, z):
        return self.eval(z)

    def derivative_eval(self, z):
        """d/dz of the polynomial part (Laurent factor excluded)."""
        z_arr = np.asarray(z, dtype=complex)
        acc = np.zeros(z_arr.shape, dtype=complex)
        for k in range(self.degree, 0, -1):
            acc = acc * z_arr + k * self.coeffs[k]
        return acc[()] if acc.ndim == 0 else acc

    def _poly(self, z):
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def roots(self) -> list[complex]:
        """All roots of the polynomial part, with multiplicity.

        Eigenvalues of the companion matrix followed by one Newton polish step
        (kept only when it lowers |q|).
        """
        if self.is_zero:
            raise DegenerateDifferentialError("q vanishes identically")
        cs = np.array(self.coeffs, dtype=complex)
        low = 0
        while cs[low] == 0:
            low += 1
        out = [0j] * low
        cs = cs[low:]
        m = cs.size - 1
        if m == 0:
            return out
        comp = np.zeros((m, m), dtype=complex)
        comp[1:, :-1] = np.eye(m - 1)
        comp[:, -1] = -cs[:-1] / cs[-1]
        for z in np.linalg.eigvals(comp):
            d = self.derivative_eval(z)
            if d != 0:
                zn = z - self._poly(z) / d
                if abs(self._poly(zn)) < abs(self._poly(z)):
                    z = zn
            out.append(complex(z))
        return sorted(out, key=lambda w: (round(w.real, 9), round(w.imag, 9)))

    def pullback(self, phi: float) -> "RDifferential":
        """F*q for the rotation F(z) = e^{i phi} z."""
        s = self.laurent_shift
        cs = tuple(c * np.exp(1j * (k - s + self.r) * phi) for k, c in enumerate(self.coeffs))
        return RDifferential(self.r, cs, s)

    def recentered(self, p: complex) -> "RDifferential":
        """q(z + p) dz^r as a new polynomial in z (no Laurent shift allowed)."""
        if self.laurent_shift:
            raise DomainError("cannot translate a Laurent-shifted differential")
        poly = np.polynomial.Polynomial(np.array(self.coeffs, dtype=complex))
        moved = poly(np.polynomial.Polynomial([p, 1.0]))
        return RDifferential(self.r, tuple(moved.coef))

    def to_text(self) -> str:
        cs = [_fmt_c(c) for c in self.coeffs]
        return f"poly r={self.r} coeffs=[{', '.join(cs)}]"


def _fmt_c(c: complex):
    if c.imag == 0:
        v = c.real
        return str(int(v)) if v == int(v) else repr(v)
    return f'"{c!r}"'.replace("(", "").replace(")", "")


def zeros_in(q: RDifferential, grid) -> list[complex]:
    """Roots of q inside the grid's region, repeated by multiplicity."""
    reg = grid.region
    out = []
    for z in q.roots():
        if q.laurent_shift and z == 0:
            continue
        rho = abs(z - reg.center)
        if reg.kind == "disk":
            inside = rho < reg.params[0]
        elif reg.kind == "annulus":
            inside = reg.params[0] < rho < reg.params[1]
        else:
            side = reg.params[0]
            inside = 0 <= z.real <= side and 0 <= z.imag <= side
        if inside:
            out.append(z)
    return out


def group_zeros(zs, tol: float = 1e-6) -> list[tuple[complex, int]]:
    """Cluster numerically repeated roots into (point, multiplicity)."""
    groups: list[list[complex]] = []
    for z in zs:
        for g in groups:
            if abs(g[0] - z) <= tol * max(1.0, abs(z)):
                g.append(z)
                break
        else:
            groups.append([z])
    return [(complex(np.mean(g)), len(g)) for g in groups]


_SPEC_RE = re.compile(r"^\s*poly\s+r\s*=\s*(\d+)\s+coeffs\s*=\s*(\[.*\])\s*$")


def parse_differential(text: str, laurent_shift: int = 0) -> RDifferential:
    """Parse ``"poly r=3 coeffs=[0,1]"`` (meaning z dz^3).

    Complex coefficients may be written as Python literals or strings, e.g.
    ``[1, "0.5+2j"]``.
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise ConfigurationError(f"cannot parse differential {text!r}; expected 'poly r=<int> coeffs=[...]'")
    try:
        raw = ast.literal_eval(m.group(2))
        coeffs = tuple(complex(c) for c in raw)
    except (ValueError, SyntaxError, TypeError) as exc:
        raise ConfigurationError(f"bad coefficient list in {text!r}: {exc}") from None
    return RDifferential(int(m.group(1)), coeffs, int(laurent_shift))

"""Harmonic-bundle side: the cyclic Higgs field at a node, the commutator with
its adjoint, the Hitchin residual and curvature diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BackgroundMetric, ScalarField, lap5
from .matrix_estimates import CyclicFrame, adjoint, h_frobenius
from .toda_core import Background, TodaField

DENOM_EPS = 1e-12


@dataclass(frozen=True)
class CyclicHiggsSample:
    r: int
    theta: np.ndarray  # in the frame v_1..v_r: theta(v_i) = v_{i+1}, theta(v_r) = beta v_1
    h_diag: np.ndarray  # |v_i|_h^2 = e^{w_i}
    z: complex
    beta: complex

    def adjoint(self) -> np.ndarray:
        return adjoint(self.theta, np.diag(self.h_diag).astype(complex))

    def commutator(self) -> np.ndarray:
        """theta theta^dagger - theta^dagger theta (endomorphism part)."""
        A = self.adjoint()
        return self.theta @ A - A @ self.theta

    def norm_sq(self) -> float:
        return h_frobenius(self.theta, np.diag(self.h_diag)) ** 2

    def commutator_norm(self) -> float:
        return h_frobenius(self.commutator(), np.diag(self.h_diag))

    def trace_theta_sq(self) -> complex:
        return complex(np.trace(self.theta @ self.theta))

    def sectional_curvature(self) -> float:
        den = self.norm_sq() ** 2 - abs(self.trace_theta_sq()) ** 2
        return -self.commutator_norm() ** 2 / (2 * self.r * den)

    def frame(self) -> CyclicFrame:
        """Induced cyclic frame with alpha^r = beta."""
        r = self.r
        alpha = complex(self.beta) ** (1.0 / r) if self.beta != 0 else 0j
        return CyclicFrame(r, tuple(np.sqrt(self.h_diag)), alpha)


def build_sample(w: TodaField, q, metric: BackgroundMetric | None, node: tuple[int, int]) -> CyclicHiggsSample:
    """Dense Higgs field at lattice node ``node = (i, j)``."""
    metric = metric or w.metric
    grid = w.grid
    a, b = grid.index_of(*node)
    if not (0 <= a < grid.shape[0] and 0 <= b < grid.shape[1]) or not grid.mask[a, b]:
        raise IndexError(f"node {node} is not in the domain")
    z = complex(grid.z[a, b])
    g0 = float(metric.g0_raw(np.array([z]))[0])
    r = w.r
    beta = complex(q.eval(z)) / g0 ** (r / 2)
    theta = np.zeros((r, r), dtype=complex)
    theta[np.arange(1, r), np.arange(r - 1)] = 1.0
    theta[0, r - 1] = beta
    W = w.extended()[:, a, b]
    return CyclicHiggsSample(r, theta, np.exp(W), z, beta)


def _links(W: np.ndarray, bg: Background) -> np.ndarray:
    """l_0..l_r with l_i = e^{w_{i+1}-w_i} and l_0 = l_r = |q|_g^2 e^{w_1-w_r}."""
    r = W.shape[0]
    corner = np.exp(W[0] - W[r - 1] + bg.log_qn2)
    inner = np.exp(W[1:] - W[:-1])
    return np.concatenate([corner[None], inner, corner[None]])


def commutator_diagonal(w: TodaField, bg: Background) -> np.ndarray:
    """Diagonal of theta theta^dagger - theta^dagger theta, component by component."""
    L = _links(w.extended(), bg)
    return L[:-1] - L[1:]


def theta_norm_sq(w: TodaField, bg: Background) -> np.ndarray:
    L = _links(w.extended(), bg)
    return L[1:].sum(axis=0)


def commutator_field(w: TodaField, q, metric: BackgroundMetric | None = None,
                     bg: Background | None = None) -> ScalarField:
    """|[theta, theta^dagger_h]|_h at every node."""
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    C = commutator_diagonal(w, bg)
    return ScalarField(w.grid, np.sqrt(np.sum(C * C, axis=0)))


def hitchin_residual(w: TodaField, q, metric: BackgroundMetric | None = None,
                     bg: Background | None = None) -> np.ndarray:
    """i Lambda (R(h) + [theta, theta^dagger_h]) on the diagonal, r components.

    Curvature of the i-th line: -((r+1-2i)/2) k_g - 2 Delta_g w_i; the Higgs
    term contributes twice the commutator diagonal.
    """
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    r = w.r
    W = w.extended()
    curv = np.stack([-((r + 1 - 2 * i) / 2) * bg.kg - 2.0 * lap5(W[i - 1], w.grid) / (4.0 * bg.g0)
                     for i in range(1, r + 1)])
    return curv + 2.0 * commutator_diagonal(w, bg)


def pullback_curvature(w: TodaField, q, metric: BackgroundMetric | None = None,
                       bg: Background | None = None) -> tuple[ScalarField, np.ndarray]:
    """K = -(1/2r) |[theta, theta^dagger]|^2 / (|theta|^4 - |tr theta^2|^2).

    Returns the field and a flag mask: nodes where the denominator or the
    numerator is below 1e-12 |theta|^4 (the flat equality regime).
    """
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    r = w.r
    C = commutator_diagonal(w, bg)
    num = np.sum(C * C, axis=0)
    t2 = theta_norm_sq(w, bg)
    tr2 = 4.0 * bg.qn2 if r == 2 else np.zeros_like(t2)
    den = t2 ** 2 - tr2
    scale = DENOM_EPS * t2 ** 2
    flags = w.grid.mask & ((den <= scale) | (num <= scale))
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(flags, np.nan, -num / (2 * r * den))
    return ScalarField(w.grid, K), flags


def derived_metric_curvature(w: TodaField, metric: BackgroundMetric | None = None) -> np.ndarray:
    """Gaussian curvature of e^{w_{i+1}-w_i} g for i = 1..r-1, interior nodes.

    k_{e^u g} = e^{-u} (k_g - 2 Delta_g u).
    """
    metric = metric or w.metric
    from .geometry import gaussian_curvature

    g0 = metric.g0(w.grid)
    kg = gaussian_curvature(metric, w.grid).data
    W = w.extended()
    U = W[1:] - W[:-1]
    return np.exp(-U) * (kg - 2.0 * lap5(U, w.grid) / (4.0 * g0))


def simpson_field(w: TodaField, q, metric: BackgroundMetric | None = None,
                  bg: Background | None = None) -> np.ndarray:
    """Delta_g log|theta|^2 - |[theta, theta^dagger]|^2 / |theta|^2 - k_g / 2 (interior)."""
    bg = bg or Background.of(q, metric or w.metric, w.grid)
    t2 = theta_norm_sq(w, bg)
    C = commutator_diagonal(w, bg)
    lt = np.log(t2)
    return lap5(lt, w.grid) / (4.0 * bg.g0) - np.sum(C * C, axis=0) / t2 - 0.5 * bg.kg

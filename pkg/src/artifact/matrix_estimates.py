"""Finite-dimensional oracles: commutator lower bounds for triangular and
cyclic endomorphisms, and the F/G functionals on the product-one simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class CyclicFrame:
    """Orthogonal frame e_1..e_r with f(e_i) = e_{i+1}, f(e_r) = alpha^r e_1."""

    r: int
    norms: tuple[float, ...]
    alpha: complex

    def __post_init__(self):
        if len(self.norms) != self.r or self.r < 2:
            raise DomainError("need r >= 2 norms")
        if min(self.norms) <= 0:
            raise DomainError("frame norms must be positive")
        if abs(np.prod(self.norms) - 1.0) > 1e-12:
            raise DomainError("frame norms must multiply to 1")

    @classmethod
    def normalized(cls, norms, alpha: complex) -> "CyclicFrame":
        """Rescale arbitrary positive norms by a common factor so their product is 1.

        Every quantity built from the frame depends on norm ratios only, so the
        rescaling changes nothing downstream.
        """
        norms = np.asarray(norms, dtype=float)
        s = np.exp(-np.mean(np.log(norms)))
        return cls(len(norms), tuple(norms * s), complex(alpha))

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(matrix of f, Gram matrix of h) in the frame."""
        r = self.r
        M = np.zeros((r, r), dtype=complex)
        M[np.arange(1, r), np.arange(r - 1)] = 1.0
        M[0, r - 1] = self.alpha ** r
        H = np.diag(np.square(self.norms)).astype(complex)
        return M, H


def _diag_terms(frame: CyclicFrame) -> np.ndarray:
    n2 = np.square(np.asarray(frame.norms))
    r = frame.r
    corner = n2[0] * abs(frame.alpha) ** (2 * r) / n2[r - 1]
    links = np.concatenate([[corner], n2[1:] / n2[:-1], [corner]])  # l_0 .. l_r
    return links[:-1] - links[1:]


def cyclic_commutator_normsq(frame: CyclicFrame) -> float:
    """|[f, f^dagger_h]|_h^2 as the sum of squared diagonal differences."""
    return float(np.sum(_diag_terms(frame) ** 2))


def cyclic_normsq(frame: CyclicFrame) -> float:
    """|f|_h^2."""
    n2 = np.square(np.asarray(frame.norms))
    r = frame.r
    return float(np.sum(n2[1:] / n2[:-1]) + abs(frame.alpha) ** (2 * r) * n2[0] / n2[r - 1])


def adjoint(M: np.ndarray, H: np.ndarray) -> np.ndarray:
    """h-adjoint of an endomorphism given the Gram matrix of h: H^{-1} M^* H."""
    return np.linalg.solve(H, M.conj().T @ H)


def h_frobenius(X: np.ndarray, H: np.ndarray) -> float:
    """|X|_h for an endomorphism X when H is diagonal positive."""
    s = np.sqrt(np.real(np.diag(H)))
    return float(np.linalg.norm((s[:, None] * X) / s[None, :]))


def dense_commutator_normsq(frame: CyclicFrame) -> float:
    """Brute-force oracle: build f, its adjoint and the commutator as matrices."""
    M, H = frame.matrices()
    A = adjoint(M, H)
    return h_frobenius(M @ A - A @ M, H) ** 2


def triangular_commutator_bound(A: np.ndarray) -> tuple[float, float]:
    """(|[A, A^*]|_F, |A_1|_F^2) with A_1 the strictly lower part."""
    A = np.asarray(A, dtype=complex)
    if np.any(np.triu(A, 1) != 0):
        raise DomainError("matrix must be lower triangular")
    A1 = np.tril(A, -1)
    C = A @ A.conj().T - A.conj().T @ A
    return float(np.linalg.norm(C)), float(np.linalg.norm(A1) ** 2)


def _check_Z(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("entries must be positive")
    if abs(np.prod(a) - 1.0) > 1e-10:
        raise DomainError("entries must multiply to 1")
    return a


def F_functional(a) -> float:
    a = _check_Z(a)
    return float(np.sum(np.diff(a) ** 2) + (a[0] - a[-1]) ** 2)


def G_functional(a) -> float:
    return float(np.sum(_check_Z(a)))


def fg_delta(eps: float, r: int) -> float:
    """Constructive delta for F > delta G^2 whenever some a_i < eps."""
    return r ** -4.0 * (1.0 - eps ** (r / (r - 1))) ** 2


def cyclic_delta(eps: float, r: int) -> float:
    """delta in |[f, f^dagger]| >= delta |f|^2 when some |e_{i+1}|/|e_i| <= eps |alpha|.

    Follows from :func:`fg_delta` applied to a_i = |e_{i+1}|^2 / (|e_i|^2 |alpha|^2).
    """
    return float(np.sqrt(fg_delta(eps * eps, r)))


# samplers ---------------------------------------------------------------------

def sample_Z(r: int, size: int, rng: np.random.Generator, eps: float | None = None,
             spread: float = 2.0) -> np.ndarray:
    """Points of the product-one simplex; with ``eps`` one entry is forced below it."""
    x = rng.normal(0.0, spread, (size, r))
    if eps is not None:
        j = rng.integers(0, r, size)
        low = np.log(eps) + np.log(rng.random(size)) * rng.choice([0.05, 1.0, 5.0], size)
        keep = np.ones((size, r), dtype=bool)
        keep[np.arange(size), j] = False
        x[~keep] = low
        others = np.where(keep, x, 0.0)
        shift = (others.sum(axis=1) + low) / (r - 1)
        x = np.where(keep, x - shift[:, None], x)
    else:
        x -= x.mean(axis=1, keepdims=True)
    return np.exp(x)


def sample_lower_triangular(r: int, size: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(size=(size, r, r)) + 1j * rng.normal(size=(size, r, r))
    A *= np.exp(rng.normal(0.0, 1.0, (size, 1, 1)))
    return np.tril(A)


def sample_frames(r: int, size: int, rng: np.random.Generator) -> list[CyclicFrame]:
    out = []
    for _ in range(size):
        x = rng.normal(0.0, 1.0, r)
        x -= x.mean()
        alpha = np.exp(rng.normal(0.0, 0.5)) * np.exp(2j * np.pi * rng.random())
        out.append(CyclicFrame(r, tuple(np.exp(x)), alpha))
    return out


def calibrate_delta(r: int, eps: float, samples: int, rng: np.random.Generator) -> float:
    """Empirical min of F/G^2 over sampled points with some a_i < eps."""
    a = sample_Z(r, samples, rng, eps)
    F = np.sum(np.diff(a, axis=1) ** 2, axis=1) + (a[:, 0] - a[:, -1]) ** 2
    G = a.sum(axis=1)
    return float(np.min(F / G ** 2))


def calibrate_C0(r: int, samples: int, rng: np.random.Generator) -> float:
    """Empirical min of |[A, A^*]| / |A_1|^2 over sampled lower-triangular A."""
    best = np.inf
    for A in sample_lower_triangular(r, samples, rng):
        lhs, rhs = triangular_commutator_bound(A)
        if rhs > 0:
            best = min(best, lhs / rhs)
    return float(best)

"""State-space realisation of basis expansions and extraction of their zeros.

The orthonormal family is a cascade of all-pass sections
``G_k(q) = (1 - conj(xi_k) q) / (q - xi_k)``; its states are the basis
functions up to the ``sqrt(1 - |xi|^2)`` factors, so the expansion
``d_0 + sum d_k B_k(q)`` is read out with ``D = d_0`` and
``C_k = d_k sqrt(1 - |xi_k|^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import BasisSet, PairSection, RealSection
from .core import poly_roots
from .errors import BadPoint, DegenerateDenominator, DimensionMismatch

D_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __call__(self, q) -> np.ndarray:
        """Transfer function ``C (qI - A)^-1 B + D`` at the given points."""
        q = np.atleast_1d(np.asarray(q, dtype=complex))
        n = self.A.shape[0]
        out = np.empty(q.size, dtype=complex)
        for k, z in enumerate(q):
            if n == 0:
                out[k] = self.D
                continue
            x = np.linalg.solve(z * np.eye(n) - self.A, self.B)
            out[k] = self.C @ x + self.D
        return out


def realize_section(section):
    """Realisation ``(a, b, c, d)`` of one all-pass section.

    Real point: ``(xi, 1, 1 - xi^2, -xi)``.  Conjugate pair: 2x2 block whose
    states are ``[beta1 q + mu1, beta2 q + mu2] / (q^2 - 2 Re(xi) q + |xi|^2)``
    and whose output is ``(|xi|^2 q^2 - 2 Re(xi) q + 1) / (q^2 - 2 Re(xi) q + |xi|^2)``.
    """
    if isinstance(section, RealSection):
        xi = section.xi
        if abs(xi) >= 1:
            raise BadPoint(f"section point {xi} not inside the unit disk")
        if xi == 0:
            return np.zeros((1, 1)), np.ones(1), np.ones((1, 1)), 0.0
        return np.array([[xi]]), np.ones(1), np.array([[1 - xi * xi]]), -xi
    if not isinstance(section, PairSection):
        raise TypeError("expected a RealSection or PairSection")
    xi = section.xi
    if abs(xi) >= 1:
        raise BadPoint(f"section point {xi} not inside the unit disk")
    b1, m1, b2, m2 = section.coeffs
    det = b1 * m2 - m1 * b2
    if b1 == 0 or b2 == 0 or det == 0:
        raise BadPoint("pair coefficients violate beta1, beta2 != 0 and beta1 mu2 != mu1 beta2")
    re, n = xi.real, abs(xi) ** 2
    a11 = (n + (m1 * m2) / (b1 * b2) + (2 * re * m2) / b2) / (m2 / b2 - m1 / b1)
    a12 = (m1 + 2 * b1 * re - b1 * a11) / b2
    a21 = (m2 + b2 * a11) / b1
    a22 = 2 * re - a11
    c11 = (2 * m2 * re * (n - 1) + (n * n - 1) * b2) / det
    c12 = (2 * re * (n - 1) - c11 * b1) / b2
    a = np.array([[a11, a12], [a21, a22]])
    return a, np.array([b1, b2]), np.array([[c11, c12]]), n


def realize_denominator(basis: BasisSet, coeffs) -> StateSpace:
    """Realise ``d_0 + sum d_k B_k(q)``; the eigenvalues of ``A`` are the basis points."""
    d = np.asarray(coeffs, dtype=float).reshape(-1)
    if d.size != basis.order + 1:
        raise DimensionMismatch(f"expected {basis.order + 1} coefficients, got {d.size}")
    r = basis.order
    if basis.kind == "barycentric":
        return StateSpace(np.diag(basis.points), np.ones(r, dtype=complex), d[1:].astype(complex), d[0])
    if basis.kind != "orthonormal":
        raise ValueError("state-space realisation needs an orthonormal or barycentric basis")
    A = np.zeros((0, 0))
    B = np.zeros(0)
    c_out = np.zeros((1, 0))
    d_out = 1.0
    scale = []
    for sec in basis.sections:
        a, b, c, dd = realize_section(sec)
        k = a.shape[0]
        n = A.shape[0]
        A_new = np.zeros((n + k, n + k))
        A_new[:n, :n] = A
        A_new[n:, :n] = np.outer(b, c_out)
        A_new[n:, n:] = a
        A = A_new
        B = np.concatenate([B, b * d_out])
        c_out = np.hstack([dd * c_out, c])
        d_out = dd * d_out
        xi = sec.xi
        scale.extend([np.sqrt(1 - abs(xi) ** 2)] * k)
    C = d[1:] * np.asarray(scale)
    return StateSpace(A, B, C, float(d[0]))


def denominator_zeros(ss: StateSpace) -> np.ndarray:
    """Zeros of the numerator polynomial of the realised expansion.

    Uses ``eig(A - B C / D)`` when ``D`` is not negligible, otherwise the finite
    generalised eigenvalues of the system pencil.
    """
    C = np.asarray(ss.C).reshape(-1)
    D = ss.D
    scale = max(abs(D), np.max(np.abs(C), initial=0.0))
    if scale == 0:
        raise DegenerateDenominator("all coefficients are zero")
    n = ss.A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if abs(D) >= D_TOL * scale:
        return np.asarray(linalg.eigvals(ss.A - np.outer(ss.B, C) / D), dtype=complex)
    pencil = np.block([[ss.A, ss.B[:, None]], [C[None, :], np.array([[D]])]])
    mass = np.zeros((n + 1, n + 1))
    mass[:n, :n] = np.eye(n)
    alpha, beta = linalg.eigvals(pencil, mass, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-10 * np.abs(alpha)
    return np.asarray(alpha[finite] / beta[finite], dtype=complex)


def expansion_zeros(basis: BasisSet, coeffs) -> np.ndarray:
    """Zeros of ``sum c_k B_k`` (numerator polynomial) for any basis family."""
    c = np.asarray(coeffs, dtype=float)
    if basis.kind == "monomial":
        if not np.any(c):
            raise DegenerateDenominator("all coefficients are zero")
        return poly_roots(c)
    return denominator_zeros(realize_denominator(basis, c))

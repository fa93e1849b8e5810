"""Basis function families for the numerator and denominator expansions.

Three families are supported:

* ``monomial``: ``1, x, x^2, ..., x^r``
* ``barycentric``: ``1, 1/(x - l_1), ..., 1/(x - l_r)``
* ``orthonormal``: rational functions orthonormal on the unit circle
  (Takenaka-Malmquist construction).  A real point ``xi`` contributes

      sqrt(1 - xi^2) / (q - xi) * prod_{earlier} (1 - conj(x_m) q) / (q - x_m)

  and a conjugate pair contributes two real-coefficient functions

      sqrt(1 - |xi|^2) (beta_k q + mu_k) / (q^2 - 2 Re(xi) q + |xi|^2) * prod_{earlier} ...

Index 0 is always the constant function 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import CONJ_TOL
from .errors import BadPoint, BasisSingularity

MAX_RADIUS = 1.0 - 1e-6
KINDS = ("monomial", "barycentric", "orthonormal")


@dataclass(frozen=True)
class RealSection:
    xi: float


@dataclass(frozen=True)
class PairSection:
    xi: complex  # Im(xi) > 0
    coeffs: tuple  # (beta1, mu1, beta2, mu2)


@dataclass(frozen=True, eq=False)
class BasisSet:
    kind: str
    order: int
    points: np.ndarray
    sections: tuple = ()

    @classmethod
    def monomial(cls, order: int) -> "BasisSet":
        if order < 0:
            raise ValueError("order must be >= 0")
        return cls("monomial", int(order), np.zeros(0, dtype=complex))

    @classmethod
    def barycentric(cls, points) -> "BasisSet":
        pts = np.asarray(points, dtype=complex).reshape(-1)
        if pts.size > 1:
            diff = np.abs(pts[:, None] - pts[None, :]) + np.eye(pts.size)
            if np.any(diff == 0):
                raise BadPoint("barycentric points must be pairwise distinct")
        return cls("barycentric", pts.size, pts)

    @classmethod
    def orthonormal(cls, points) -> "BasisSet":
        """Orthonormal basis on conjugate-closed points strictly inside the disk."""
        pts = np.asarray(points, dtype=complex).reshape(-1)
        if np.any(np.abs(pts) > MAX_RADIUS + 1e-12):
            raise BadPoint("orthonormal basis points must satisfy |xi| <= 1 - 1e-6")
        sections = []
        ordered = []
        used = np.zeros(pts.size, dtype=bool)
        for k, x in enumerate(pts):
            if used[k]:
                continue
            used[k] = True
            if abs(x.imag) <= CONJ_TOL * max(1.0, abs(x)):
                sections.append(RealSection(float(x.real)))
                ordered.append(complex(x.real))
                continue
            cand = np.flatnonzero(~used)
            if cand.size == 0:
                raise BadPoint("complex point without conjugate partner")
            j = cand[np.argmin(np.abs(pts[cand] - np.conj(x)))]
            if abs(pts[j] - np.conj(x)) > 1e-6 * max(1.0, abs(x)):
                raise BadPoint("complex point without conjugate partner")
            used[j] = True
            xi = x if x.imag > 0 else np.conj(x)
            sections.append(PairSection(complex(xi), solve_pair_coefficients(xi)))
            ordered.extend([complex(xi), complex(np.conj(xi))])
        return cls("orthonormal", len(ordered), np.array(ordered, dtype=complex), tuple(sections))


def solve_pair_coefficients(xi) -> tuple:
    """Real (beta1, mu1, beta2, mu2) making the pair functions orthonormal.

    Gram-Schmidt on ``{q, 1} / (q^2 - 2 Re(xi) q + |xi|^2)``.  The Gram matrix
    of that pair is the controllability Gramian of the companion realisation,
    solved from a discrete Lyapunov equation.
    """
    xi = complex(xi)
    if xi.imag <= 0 or abs(xi) > MAX_RADIUS + 1e-12:
        raise BadPoint(f"pair point must have Im > 0 and |xi| <= 1 - 1e-6, got {xi}")
    t, n = 2 * xi.real, abs(xi) ** 2
    comp = np.array([[t, -n], [1.0, 0.0]])
    gram = linalg.solve_discrete_lyapunov(comp, np.array([[1.0, 0.0], [0.0, 0.0]]))
    low = np.linalg.cholesky((1 - n) * gram)
    k = np.linalg.solve(low, np.eye(2))
    (b1, m1), (b2, m2) = k
    if abs(b2) < 1e-8 * abs(m2):
        # an orthogonal rotation keeps orthonormality and makes both betas nonzero
        c = s = np.sqrt(0.5)
        k = np.array([[c, -s], [s, c]]) @ k
        (b1, m1), (b2, m2) = k
    return (float(b1), float(m1), float(b2), float(m2))


def eval_basis(basis: BasisSet, points) -> np.ndarray:
    """Rows ``[1, B_1(x), ..., B_r(x)]``; shape (n, r+1), or (r+1,) for a scalar."""
    scalar = np.ndim(points) == 0
    x = np.asarray(points, dtype=complex).reshape(-1)
    r = basis.order
    out = np.empty((x.size, r + 1), dtype=complex)
    out[:, 0] = 1.0
    if basis.kind == "monomial":
        for k in range(1, r + 1):
            out[:, k] = out[:, k - 1] * x
    elif basis.kind == "barycentric":
        _check_hits(x, basis.points)
        out[:, 1:] = 1.0 / (x[:, None] - basis.points[None, :])
    elif basis.kind == "orthonormal":
        _check_hits(x, basis.points)
        blaschke = np.ones(x.size, dtype=complex)
        col = 1
        for sec in basis.sections:
            if isinstance(sec, RealSection):
                xi = sec.xi
                out[:, col] = np.sqrt(1 - xi * xi) / (x - xi) * blaschke
                blaschke = blaschke * (1 - xi * x) / (x - xi)
                col += 1
            else:
                xi = sec.xi
                b1, m1, b2, m2 = sec.coeffs
                n = abs(xi) ** 2
                den = x * x - 2 * xi.real * x + n
                g = np.sqrt(1 - n) / den * blaschke
                out[:, col] = (b1 * x + m1) * g
                out[:, col + 1] = (b2 * x + m2) * g
                blaschke = blaschke * (1 - 2 * xi.real * x + n * x * x) / den
                col += 2
    else:
        raise ValueError(f"unknown basis kind {basis.kind!r}")
    return out[0] if scalar else out


def _check_hits(x, pts):
    if pts.size and np.any(np.abs(x[:, None] - pts[None, :]) <= 1e-14):
        raise BasisSingularity("evaluation point coincides with a basis pole")


def gram_matrix(basis: BasisSet, quadrature_points: int | None = None) -> np.ndarray:
    """Trapezoid-rule inner products ``(1/2pi) int B_a conj(B_b) dtheta`` on the circle.

    The rule's aliasing error decays like ``rho^N`` for the largest point
    modulus ``rho``; the default ``N`` pushes it below rounding level.
    """
    if quadrature_points is None:
        rho = float(np.max(np.abs(basis.points), initial=0.0))
        extra = int(np.ceil(np.log(1e-17) / np.log(rho))) if rho > 0 else 0
        quadrature_points = min(4 * basis.order + 16 + extra, 1 << 22)
    if quadrature_points < 4 * basis.order + 16:
        raise ValueError("need at least 4r + 16 quadrature points")
    theta = 2 * np.pi * np.arange(quadrature_points) / quadrature_points
    f = eval_basis(basis, np.exp(1j * theta))
    g = f.T @ f.conj() / quadrature_points
    if np.max(np.abs(g.imag)) <= 1e-12 * max(1.0, np.max(np.abs(g))):
        return g.real
    return g


def sanitize_points(points, separate_duplicates: bool = False) -> np.ndarray:
    """Make interpolation points usable for the next basis.

    Points outside the disk are reflected to ``1/conj(xi)``, magnitudes are
    clamped to ``1 - 1e-6``, near-conjugate pairs are made exact, and (for
    barycentric use) coincident points are separated.  Output order is real
    points ascending, then pairs ``(xi, conj(xi))`` sorted by Re then Im.
    """
    pts = np.asarray(points, dtype=complex).reshape(-1)
    if pts.size == 0:
        return pts.copy()
    out = pts.copy()
    big = np.abs(out) > 1
    out[big] = 1.0 / np.conj(out[big])
    mag = np.abs(out)
    over = mag > MAX_RADIUS
    out[over] = out[over] / mag[over] * MAX_RADIUS

    is_real = np.abs(out.imag) <= CONJ_TOL * np.maximum(1.0, np.abs(out))
    reals = list(out[is_real].real)
    upper = list(out[~is_real & (out.imag > 0)])
    lower = list(out[~is_real & (out.imag < 0)])
    pairs = []
    for x in upper:
        if lower:
            k = int(np.argmin([abs(y - np.conj(x)) for y in lower]))
            y = lower.pop(k)
            pairs.append(0.5 * (x + np.conj(y)))
        else:
            reals.append(x.real)
    reals.extend(y.real for y in lower)
    reals = np.sort(np.asarray(reals, dtype=float))
    pairs = sorted(pairs, key=lambda z: (z.real, z.imag))
    res = list(reals.astype(complex))
    for z in pairs:
        res.extend([z, np.conj(z)])
    res = np.asarray(res, dtype=complex)
    mag = np.abs(res)
    over = mag > MAX_RADIUS
    res[over] = res[over] / mag[over] * MAX_RADIUS
    if separate_duplicates:
        res = _separate(res)
    return res


def _separate(pts):
    pts = pts.copy()
    for k in range(1, pts.size):
        while np.any(np.abs(pts[:k] - pts[k]) <= 1e-8 * max(1.0, abs(pts[k]))):
            # conjugate partners get the same inward nudges, so pairs stay exact
            pts[k] = pts[k] * (1 - 2e-8) if pts[k] != 0 else 2e-8
    return pts

"""Affine constraints on s-domain transfer function coefficients.

Estimated parameters live in basis coordinates on the unit disk, but the
relation to ordinary s-domain coefficients is linear.  Multiplying
``d(q) = sum theta_k B_k(q)`` by ``(alpha - s)^R prod(q - x_k)`` gives a
degree-R polynomial in ``s``; sampling it at R+1 nodes on a circle and
applying the (unitary after scaling) inverse Vandermonde recovers the
coefficients.  Constraints written on s-domain coefficients therefore
compile to linear constraints on ``theta``.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import BasisSet, eval_basis
from .errors import (IllConditionedMap, InfeasibleConstraints, NodeSingularity, RankDeficient,
                     SingularKKT, SolveFailure)
from .mapping import BilinearMap


@dataclass(frozen=True, eq=False)
class CoefficientMap:
    """``theta_s = T theta_q`` with ``T = diag(alpha^(R-k)) @ T_norm``.

    ``T_norm`` acts in the normalised variable ``s / alpha`` and carries the
    numerical content; the diagonal is exact power scaling.
    """

    T_norm: np.ndarray
    alpha: float
    points: np.ndarray
    nodes: np.ndarray
    cond: float

    @property
    def order(self) -> int:
        return self.T_norm.shape[0] - 1

    @property
    def row_scale(self) -> np.ndarray:
        r = self.order
        return self.alpha ** (r - np.arange(r + 1, dtype=float))

    @property
    def T(self) -> np.ndarray:
        return self.row_scale[:, None] * self.T_norm

    def to_s(self, theta_q) -> np.ndarray:
        return self.row_scale * (self.T_norm @ np.asarray(theta_q, dtype=float))

    def to_q(self, theta_s) -> np.ndarray:
        return np.linalg.solve(self.T_norm, np.asarray(theta_s, dtype=float) / self.row_scale)


def node_set(count: int, extra_turns: int = 0) -> np.ndarray:
    """Roots of unity rotated by half a step (plus optional extra half-steps)."""
    t = np.arange(count)
    return np.exp(1j * (2 * np.pi * t + np.pi * (1 + extra_turns)) / count)


def build_coefficient_map(basis: BasisSet, bmap: BilinearMap) -> CoefficientMap:
    r = basis.order
    a = bmap.alpha
    for attempt in range(4):
        u = node_set(r + 1, attempt)
        q = (1 + u) / (1 - u)
        if basis.points.size == 0 or np.min(np.abs(q[:, None] - basis.points[None, :])) > 1e-10:
            break
    else:
        raise NodeSingularity("evaluation nodes keep hitting basis poles")
    diag = (1 - u) ** r
    if basis.points.size:
        diag = diag * np.prod(q[:, None] - basis.points[None, :], axis=1)
    rows = eval_basis(basis, q) * diag[:, None]
    vand = u[:, None] ** np.arange(r + 1)[None, :]
    t = vand.conj().T @ rows / (r + 1)
    scale = max(1.0, np.max(np.abs(t)))
    if np.max(np.abs(t.imag)) > 1e-9 * scale:
        raise ValueError("coefficient map is not real; basis points are not conjugate-closed")
    t = t.real
    cond = float(np.linalg.cond(t))
    if cond > 1e12:
        warnings.warn(f"coefficient map condition number {cond:.3g}", IllConditionedMap,
                      stacklevel=2)
    return CoefficientMap(t, a, basis.points.copy(), a * u, cond)


# --- constraint specification -------------------------------------------------

def num_key(i: int = 0, j: int = 0):
    return ("num", int(i), int(j))


DEN = ("den",)


@dataclass(frozen=True)
class ConstraintSet:
    """Equalities and bounds on s-domain coefficients.

    Coefficients are addressed by ``(poly, index)`` with ``poly`` either
    ``("num", i, j)`` for channel (i, j) or ``("den",)``; ``index`` is the
    power of ``s``.  Values refer to the model with a monic denominator
    unless the user fixes the leading denominator coefficient.
    """

    equalities: tuple = ()  # ((((poly, index), coef), ...), rhs)
    fixed: tuple = ()  # ((poly, index), value)
    bounds: tuple = ()  # ((poly, index), lo, hi)

    def fix(self, poly, index: int, value: float = 0.0) -> "ConstraintSet":
        return dataclasses.replace(self, fixed=self.fixed + (((tuple(poly), int(index)), float(value)),))

    def fix_num(self, index, value=0.0, channel=(0, 0)):
        return self.fix(num_key(*channel), index, value)

    def fix_den(self, index, value=0.0):
        return self.fix(DEN, index, value)

    def bound(self, poly, index, lo=-np.inf, hi=np.inf) -> "ConstraintSet":
        if lo > hi:
            raise ValueError(f"bound lower {lo} exceeds upper {hi}")
        return dataclasses.replace(self, bounds=self.bounds + (((tuple(poly), int(index)), float(lo), float(hi)),))

    def bound_num(self, index, lo=-np.inf, hi=np.inf, channel=(0, 0)):
        return self.bound(num_key(*channel), index, lo, hi)

    def bound_den(self, index, lo=-np.inf, hi=np.inf):
        return self.bound(DEN, index, lo, hi)

    def add_equality(self, terms, rhs: float) -> "ConstraintSet":
        terms = tuple(((tuple(k[0]), int(k[1])), float(c)) for k, c in terms)
        return dataclasses.replace(self, equalities=self.equalities + ((terms, float(rhs)),))

    @property
    def empty(self) -> bool:
        return not (self.equalities or self.fixed or self.bounds)

    @property
    def homogeneous(self) -> bool:
        return all(v == 0 for _, v in self.fixed) and all(r == 0 for _, r in self.equalities)

    def touches(self, key) -> bool:
        key = (tuple(key[0]), int(key[1]))
        return (any(k == key for k, _ in self.fixed)
                or any(k == key for terms, _ in self.equalities for k, _ in terms))

    def to_dict(self) -> dict:
        def enc(key):
            poly, idx = key
            if poly[0] == "den":
                return {"poly": "den", "index": idx}
            return {"poly": "num", "channel": [poly[1], poly[2]], "index": idx}
        return {
            "fixed": [dict(enc(k), value=v) for k, v in self.fixed],
            "bounds": [dict(enc(k), lower=lo, upper=hi) for k, lo, hi in self.bounds],
            "equalities": [{"terms": [dict(enc(k), coef=c) for k, c in terms], "rhs": rhs}
                           for terms, rhs in self.equalities],
        }


class CoefficientLayout:
    """Index bookkeeping for the stacked vector ``[num_(0,0), ..., num_(p-1,m-1), den]``."""

    def __init__(self, p: int, m: int, order: int):
        self.p, self.m, self.order = p, m, order
        self.block = order + 1
        self.size = (p * m + 1) * self.block

    def offset(self, poly) -> int:
        if poly[0] == "den":
            return self.p * self.m * self.block
        _, i, j = poly
        if not (0 <= i < self.p and 0 <= j < self.m):
            raise ValueError(f"channel ({i}, {j}) out of range")
        return (i * self.m + j) * self.block

    def index(self, key) -> int | None:
        poly, idx = key
        if idx < 0:
            raise ValueError("coefficient index must be >= 0")
        if idx > self.order:
            return None
        return self.offset(poly) + idx

    def den_slice(self) -> slice:
        o = self.offset(DEN)
        return slice(o, o + self.block)

    def num_slice(self, i, j) -> slice:
        o = self.offset(("num", i, j))
        return slice(o, o + self.block)


def materialize(cs: ConstraintSet, layout: CoefficientLayout):
    """Equality matrix ``(A_s, b_s)`` and bound vectors over the stacked s-coefficients."""
    rows, rhs = [], []
    for key, value in cs.fixed:
        k = layout.index(key)
        if k is None:
            if value != 0:
                raise InfeasibleConstraints(f"coefficient {key} is beyond the model order")
            continue
        row = np.zeros(layout.size)
        row[k] = 1.0
        rows.append(row)
        rhs.append(value)
    for terms, b in cs.equalities:
        row = np.zeros(layout.size)
        for key, c in terms:
            k = layout.index(key)
            if k is not None:
                row[k] += c
        if not np.any(row):
            if b != 0:
                raise InfeasibleConstraints("equality involves only coefficients beyond the model order")
            continue
        rows.append(row)
        rhs.append(b)
    lo = np.full(layout.size, -np.inf)
    hi = np.full(layout.size, np.inf)
    for key, l_, h_ in cs.bounds:
        k = layout.index(key)
        if k is None:
            if l_ > 0 or h_ < 0:
                raise InfeasibleConstraints(f"bounded coefficient {key} is beyond the model order")
            continue
        lo[k] = max(lo[k], l_)
        hi[k] = min(hi[k], h_)
        if lo[k] > hi[k]:
            raise InfeasibleConstraints(f"empty bound interval for {key}")
    A = np.array(rows).reshape(len(rows), layout.size)
    b = np.array(rhs, dtype=float)
    if A.shape[0] and np.linalg.matrix_rank(A) < A.shape[0]:
        raise RankDeficient("s-domain equality rows are linearly dependent")
    return A, b, lo, hi


def block_map(cmap: CoefficientMap, layout: CoefficientLayout, channel_scale=None) -> np.ndarray:
    """Block-diagonal ``theta_s = M theta_q``; numerator blocks carry the channel scale."""
    nblk = layout.p * layout.m + 1
    scales = np.ones(nblk)
    if channel_scale is not None:
        scales[:-1] = np.asarray(channel_scale, dtype=float).reshape(-1)
    T = cmap.T
    return linalg.block_diag(*[s * T for s in scales])


def compile_constraints(A_s, b_s, cmap: CoefficientMap, layout: CoefficientLayout,
                        channel_scale=None):
    """``A_q = A_s blockdiag(T)``, row-normalised; returns ``(A_q, b_q)``."""
    A_s = np.asarray(A_s, dtype=float).reshape(-1, layout.size)
    b_s = np.asarray(b_s, dtype=float).reshape(-1)
    if A_s.shape[0] == 0:
        return np.zeros((0, layout.size)), np.zeros(0)
    A_q = A_s @ block_map(cmap, layout, channel_scale)
    norms = np.linalg.norm(A_q, axis=1)
    if np.any(norms == 0):
        raise RankDeficient("a compiled constraint row vanished")
    A_q = A_q / norms[:, None]
    b_q = b_s / norms
    sv = np.linalg.svd(A_q, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient("compiled constraints lost rank (conflicting constraints)")
    return A_q, b_q


# --- solvers -----------------------------------------------------------------

def _null_space(Aeq, beq):
    """Particular solution and orthonormal null-space basis of ``Aeq x = beq``."""
    n = Aeq.shape[1]
    if Aeq.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    u, s, vt = np.linalg.svd(Aeq)
    tol = max(Aeq.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    k = int(np.sum(s > tol))
    x_p = vt[:k].T @ ((u[:, :k].T @ beq) / s[:k])
    resid = np.linalg.norm(Aeq @ x_p - beq)
    if resid > 1e-9 * (1 + np.linalg.norm(beq)):
        raise InfeasibleConstraints(f"equality constraints are inconsistent (residual {resid:.3g})")
    return x_p, vt[k:].T


def solve_constrained_lls(M, y, Aeq=None, beq=None, column_scaling: bool = False):
    """Minimise ``||M theta - y||`` subject to ``Aeq theta = beq`` (null-space method).

    Returns ``(theta, cond)`` where ``cond`` is the 2-norm condition number of
    the reduced matrix ``M Z`` (after column scaling, if requested).
    """
    M = np.asarray(M, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = M.shape[1]
    if Aeq is None:
        Aeq, beq = np.zeros((0, n)), np.zeros(0)
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    x_p, Z = _null_space(Aeq, beq)
    if Z.shape[1] == 0:
        return x_p, 1.0
    MZ = M @ Z
    rhs = y - M @ x_p
    colnorm = np.ones(Z.shape[1])
    if column_scaling:
        colnorm = np.linalg.norm(MZ, axis=0)
        colnorm[colnorm == 0] = 1.0
        MZ = MZ / colnorm
    if not np.any(MZ):
        raise SolveFailure("least-squares matrix is identically zero")
    z, _, _, sv = np.linalg.lstsq(MZ, rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    return x_p + Z @ (z / colnorm), cond


def solve_bounded_lls(M, y, Aeq, beq, G, lo, hi, column_scaling=False, max_active=None):
    """Equality-constrained LLS with box bounds on ``G theta`` via a greedy active set.

    The most violated bound becomes a temporary equality and the problem is
    re-solved until no bound is violated.
    """
    n = np.asarray(M).shape[1]
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    active = []
    max_active = G.shape[0] if max_active is None else max_active
    while True:
        if active:
            rows = np.array([G[k] / np.linalg.norm(G[k]) for k, _ in active])
            vals = np.array([v / np.linalg.norm(G[k]) for k, v in active])
            A_all, b_all = np.vstack([Aeq, rows]), np.concatenate([beq, vals])
        else:
            A_all, b_all = Aeq, beq
        theta, cond = solve_constrained_lls(M, y, A_all, b_all, column_scaling)
        g = G @ theta
        width = np.maximum(np.abs(lo), np.abs(hi))
        width = np.where(np.isfinite(width), width, 0.0) + np.abs(g) + 1e-300
        viol = np.maximum(lo - g, g - hi) / width
        taken = {k for k, _ in active}
        viol[list(taken)] = -np.inf
        k = int(np.argmax(viol)) if viol.size else -1
        if k < 0 or viol[k] <= 1e-12 or len(active) >= max_active:
            return theta, cond
        active.append((k, lo[k] if g[k] < lo[k] else hi[k]))


def solve_constrained_stationarity(G, g, Aeq=None, beq=None):
    """Solve the KKT system ``[[G, Aeq^T], [Aeq, 0]] (theta, lam) = (g, beq)``.

    The multipliers are eliminated on the null space of ``Aeq``: with
    ``theta = x_p + Z z``, ``Z^T G Z z = Z^T (g - G x_p)``.  This keeps the
    equalities satisfied to rounding.
    """
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1)
    n = G.shape[1]
    if Aeq is None:
        Aeq, beq = np.zeros((0, n)), np.zeros(0)
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    x_p, Z = _null_space(Aeq, beq)
    if Z.shape[1] == 0:
        return x_p
    K = Z.T @ G @ Z
    rhs = Z.T @ (g - G @ x_p)
    if not np.all(np.isfinite(K)) or np.linalg.cond(K) > 1e15:
        raise SingularKKT("bordered stationarity system is numerically singular")
    return x_p + Z @ np.linalg.solve(K, rhs)


def solve_iv_factored(M, Psi, Aeq=None, beq=None):
    """Solve ``Psi^T M theta = 0`` subject to ``Aeq theta = beq`` without forming ``Psi^T M``.

    Same solution as ``solve_constrained_stationarity(Psi.T @ M, 0, Aeq, beq)``,
    but the error grows with ``cond(M Z)`` instead of its square.  With
    ``M Z = Q R``, ``M x_p = Q a + r_perp`` and ``D = (Psi - M) Z``, the reduced
    system is ``(R^T + D^T Q) y = -D^T r_perp`` and ``R z = y - a``.

    Returns ``(theta, cond)`` with ``cond`` the condition number of the
    square factor ``R + Q^T D``.
    """
    M = np.asarray(M, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    n = M.shape[1]
    if Aeq is None:
        Aeq, beq = np.zeros((0, n)), np.zeros(0)
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    x_p, Z = _null_space(Aeq, beq)
    if Z.shape[1] == 0:
        return x_p, 1.0
    MZ = M @ Z
    D = (Psi - M) @ Z
    Q, R = np.linalg.qr(MZ)
    r0 = M @ x_p
    a = Q.T @ r0
    r_perp = r0 - Q @ a
    K = R + Q.T @ D
    if not np.all(np.isfinite(K)):
        raise SingularKKT("instrumental-variable system has non-finite entries")
    sv_k = np.linalg.svd(K, compute_uv=False)
    sv_r = np.abs(np.diag(R))
    if sv_k[-1] <= 1e-15 * sv_k[0] or sv_r.min() <= 1e-15 * sv_r.max():
        raise SingularKKT("instrumental-variable system is numerically singular")
    y = np.linalg.solve(K.T, -D.T @ r_perp)
    z = linalg.solve_triangular(R, y - a)
    return x_p + Z @ z, float(sv_k[0] / sv_k[-1])

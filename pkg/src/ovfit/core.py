"""Data types, rational-function evaluation and the weighted least-squares cost."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import AllZero, DimensionMismatch, PoleHit

# imaginary parts below this (relative) are treated as rounding noise
CONJ_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FrequencyResponseData:
    """Complex MIMO frequency response samples.

    Parameters
    ----------
    frequencies : array_like, shape (l,)
        Strictly ascending angular frequencies in rad/s.
    responses : array_like, shape (l, p, m) or (l,)
        Complex response matrices, one per frequency. A 1-d array is a SISO
        response.
    weights : array_like, shape (l,), optional
        Nonnegative scalar weight per frequency.
    """

    frequencies: np.ndarray
    responses: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float).reshape(-1)
        h = np.asarray(self.responses, dtype=complex)
        if h.ndim == 1:
            h = h[:, None, None]
        if h.ndim != 3 or h.shape[0] != w.size:
            raise DimensionMismatch(
                f"responses shape {h.shape} does not match {w.size} frequencies")
        if w.size == 0:
            raise ValueError("empty frequency vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("frequencies must be finite and > 0")
        if np.any(np.diff(w) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if not np.all(np.isfinite(h)):
            raise ValueError("responses contain non-finite entries")
        weights = self.weights
        if weights is not None:
            weights = np.asarray(weights, dtype=float).reshape(-1)
            if weights.size != w.size:
                raise DimensionMismatch("weights length differs from frequencies")
            if np.any(weights < 0) or not np.any(weights > 0) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be finite, >= 0, and not all zero")
            weights.setflags(write=False)
        w.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "responses", h)
        object.__setattr__(self, "weights", weights)

    @property
    def l(self) -> int:
        return self.frequencies.size

    @property
    def p(self) -> int:
        return self.responses.shape[1]

    @property
    def m(self) -> int:
        return self.responses.shape[2]

    @property
    def s(self) -> np.ndarray:
        return 1j * self.frequencies

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.l)
        return self.weights


def _as_channel_grid(zeros, p, m):
    grid = []
    for i in range(p):
        row = []
        for j in range(m):
            z = np.asarray(zeros[i][j], dtype=complex).reshape(-1)
            z.setflags(write=False)
            row.append(z)
        grid.append(tuple(row))
    return tuple(grid)


def _real_poly_from_roots(roots) -> np.ndarray:
    """Monic ascending coefficients of prod(x - root)."""
    c = P.polyfromroots(roots) if len(roots) else np.ones(1, dtype=complex)
    c = np.asarray(c, dtype=complex)
    scale = np.max(np.abs(c))
    if np.max(np.abs(c.imag)) > CONJ_TOL * scale:
        raise ValueError("roots are not conjugate-closed")
    return c.real.copy()


@dataclass(frozen=True, eq=False)
class RationalModel:
    """Common-denominator rational model ``H(x) = N(x) / d(x)``.

    The zero-pole-gain form is primary: ``H_ij(x) = k_ij * prod(x - z_ij) / prod(x - p)``.
    A coefficient form (ascending powers) may be attached; when absent it is
    expanded from the zpk data on request.

    ``domain`` is ``"s"`` for the continuous-time plane and ``"q"`` for the
    unit-disk image of the bilinear map.
    """

    poles: np.ndarray
    zeros: tuple
    gains: np.ndarray
    domain: str = "s"
    num: np.ndarray | None = None
    den: np.ndarray | None = None

    def __post_init__(self):
        if self.domain not in ("s", "q"):
            raise ValueError(f"unknown domain {self.domain!r}")
        poles = np.asarray(self.poles, dtype=complex).reshape(-1)
        gains = np.asarray(self.gains, dtype=float)
        if gains.ndim == 0:
            gains = gains.reshape(1, 1)
        p, m = gains.shape
        zeros = self.zeros
        if p == m == 1 and _is_flat(zeros):
            zeros = [[zeros]]
        zeros = _as_channel_grid(zeros, p, m)
        poles.setflags(write=False)
        gains.setflags(write=False)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "zeros", zeros)
        if self.num is not None:
            num = np.asarray(self.num, dtype=float)
            if num.ndim == 1:
                num = num.reshape(1, 1, -1)
            den = np.asarray(self.den, dtype=float).reshape(-1)
            if num.shape[:2] != (p, m):
                raise DimensionMismatch("numerator grid does not match gains")
            num.setflags(write=False)
            den.setflags(write=False)
            object.__setattr__(self, "num", num)
            object.__setattr__(self, "den", den)

    @classmethod
    def from_zpk(cls, zeros, poles, gains, domain="s") -> "RationalModel":
        return cls(poles=poles, zeros=zeros, gains=gains, domain=domain)

    @classmethod
    def from_coeffs(cls, num, den, domain="s") -> "RationalModel":
        """Build from ascending coefficients; zpk data come from rootfinding."""
        num = np.asarray(num, dtype=float)
        if num.ndim == 1:
            num = num.reshape(1, 1, -1)
        den = np.asarray(den, dtype=float).reshape(-1)
        dtrim = _trim(den)
        if dtrim.size == 0:
            raise AllZero("denominator is identically zero")
        poles = poly_roots(dtrim)
        p, m = num.shape[:2]
        gains = np.zeros((p, m))
        zeros = [[np.zeros(0, dtype=complex) for _ in range(m)] for _ in range(p)]
        for i in range(p):
            for j in range(m):
                n = _trim(num[i, j])
                if n.size == 0:
                    continue
                zeros[i][j] = poly_roots(n) if n.size > 1 else np.zeros(0, dtype=complex)
                gains[i, j] = n[-1] / dtrim[-1]
        return cls(poles=poles, zeros=zeros, gains=gains, domain=domain, num=num, den=den)

    @property
    def p(self) -> int:
        return self.gains.shape[0]

    @property
    def m(self) -> int:
        return self.gains.shape[1]

    @property
    def order(self) -> int:
        return self.poles.size

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(num, den)``: num has shape (p, m, n+1), den is monic unless attached."""
        if self.num is not None:
            return self.num, self.den
        den = _real_poly_from_roots(self.poles)
        nmax = max(z.size for row in self.zeros for z in row)
        num = np.zeros((self.p, self.m, nmax + 1))
        for i in range(self.p):
            for j in range(self.m):
                c = self.gains[i, j] * _real_poly_from_roots(self.zeros[i][j])
                num[i, j, :c.size] = c
        return num, den

    def with_coefficients(self) -> "RationalModel":
        num, den = self.coefficients()
        return RationalModel(self.poles, self.zeros, self.gains, self.domain, num, den)

    def __call__(self, points, form="zpk") -> np.ndarray:
        return eval_model(self, points, form=form)


def _is_flat(z) -> bool:
    if isinstance(z, np.ndarray):
        return z.ndim <= 1
    return all(np.ndim(v) == 0 for v in z)


def _trim(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:0]


def _check_pole_hit(x, poles):
    if poles.size == 0:
        return
    dist = np.abs(x[:, None] - poles[None, :])
    tol = 1e-14 * np.maximum(1.0, np.abs(poles))[None, :]
    if np.any(dist <= tol):
        raise PoleHit("evaluation point coincides with a pole")


def _zpk_ratio(x, zeros, poles):
    """prod(x - z) / prod(x - p), interleaved to keep intermediates in range."""
    out = np.ones(x.shape, dtype=complex)
    k = min(zeros.size, poles.size)
    for a, b in zip(zeros[:k], poles[:k]):
        out *= (x - a) / (x - b)
    for a in zeros[k:]:
        out *= x - a
    for b in poles[k:]:
        out /= x - b
    return out


def eval_model(model: RationalModel, points, form: str = "zpk") -> np.ndarray:
    """Evaluate ``model`` at complex ``points``; returns shape (n, p, m)."""
    x = np.asarray(points, dtype=complex).reshape(-1)
    out = np.empty((x.size, model.p, model.m), dtype=complex)
    if form == "zpk":
        _check_pole_hit(x, model.poles)
        for i in range(model.p):
            for j in range(model.m):
                out[:, i, j] = model.gains[i, j] * _zpk_ratio(x, model.zeros[i][j], model.poles)
        return out
    if form != "coeff":
        raise ValueError(f"unknown form {form!r}")
    num, den = model.coefficients()
    d = P.polyval(x, den)
    if np.any(d == 0):
        raise PoleHit("evaluation point coincides with a pole")
    _check_pole_hit(x, model.poles)
    for i in range(model.p):
        for j in range(model.m):
            out[:, i, j] = P.polyval(x, num[i, j]) / d
    return out


def nls_cost(model: RationalModel, data: FrequencyResponseData) -> float:
    """Weighted Frobenius cost ``sum_i ||W_i (H_r(j w_i) - H_i)||_F^2``."""
    if model.domain != "s":
        raise ValueError("nls_cost expects an s-domain model")
    if (model.p, model.m) != (data.p, data.m):
        raise DimensionMismatch("model and data channel counts differ")
    resid = eval_model(model, data.s) - data.responses
    return weighted_cost(resid, data.weight_vector())


def weighted_cost(resid: np.ndarray, weights: np.ndarray) -> float:
    r = np.abs(resid.reshape(resid.shape[0], -1)) ** 2
    return float(np.sum(weights ** 2 * np.sum(r, axis=1)))


def poly_roots(coeffs) -> np.ndarray:
    """Roots of ``sum c_k x^k`` (ascending coefficients) via the companion matrix."""
    c = _trim(coeffs)
    if c.size == 0:
        raise AllZero("every coefficient is zero")
    if c.size == 1:
        return np.zeros(0, dtype=complex)
    return np.asarray(P.polyroots(c), dtype=complex)


def nrmse_fit(fitted, measured) -> float:
    """Fit percentage ``100 (1 - ||H_fit - H|| / ||H - mean(H)||)``, mean per channel."""
    fitted = np.asarray(fitted)
    measured = np.asarray(measured)
    centred = measured - measured.mean(axis=0, keepdims=True)
    err, spread = np.linalg.norm(fitted - measured), np.linalg.norm(centred)
    if spread == 0:
        # constant data: perfect or infinitely bad
        return 100.0 if err == 0 else -np.inf
    return float(100.0 * (1.0 - err / spread))


@dataclass
class FitReport:
    """Per-stage cost history and numerical diagnostics of one estimation run."""

    costs: dict = field(default_factory=lambda: {"initial": [], "sk": [], "iv": []})
    conditions: list = field(default_factory=list)
    iterations: dict = field(default_factory=lambda: {"sk": 0, "iv": 0})
    converged: dict = field(default_factory=lambda: {"sk": False, "iv": False})
    best_stage: str | None = None
    best_index: int = -1
    best_cost: float = np.inf
    alpha: float | None = None
    messages: list = field(default_factory=list)

    def record(self, stage: str, cost: float, condition: float | None = None) -> bool:
        """Append a stage cost; returns True if it is the best so far."""
        self.costs[stage].append(float(cost))
        if condition is not None:
            self.conditions.append(float(condition))
        if cost < self.best_cost:
            self.best_cost = float(cost)
            self.best_stage = stage
            self.best_index = len(self.costs[stage]) - 1
            return True
        return False

    @property
    def worst_condition(self) -> float:
        return max(self.conditions) if self.conditions else float("nan")

    def all_costs(self) -> list:
        return [c for stage in ("initial", "sk", "iv") for c in self.costs[stage]]

    def to_dict(self) -> dict:
        return {
            "costs": {k: list(v) for k, v in self.costs.items()},
            "conditions": list(self.conditions),
            "iterations": dict(self.iterations),
            "converged": dict(self.converged),
            "best_stage": self.best_stage,
            "best_cost": self.best_cost,
            "worst_condition": self.worst_condition,
            "alpha": self.alpha,
        }

"""Sanathanan-Koerner and instrumental-variable iterations on the unit disk.

Pipeline (``run_pipeline``):

1. map ``j w`` to the unit circle with the bilinear map,
2. scale each channel's measurements,
3. initial linear fit in the monomial basis (denominator weight 1),
4. SK iterations with orthonormal basis relocated to the previous denominator zeros,
5. IV iterations in the final SK basis,
6. keep the lowest-cost solution of all stages,
7. map it back to the s-plane, 8. undo the scaling, 9. emit coefficients.
"""

from __future__ import annotations

import logging
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .basis import BasisSet, eval_basis, sanitize_points
from .constraints import (DEN, CoefficientLayout, ConstraintSet, block_map, build_coefficient_map,
                          compile_constraints, materialize, num_key, solve_bounded_lls,
                          solve_constrained_lls, solve_iv_factored)
from .core import FitReport, FrequencyResponseData, RationalModel, nls_cost
from .errors import (DegenerateDenominator, IllConditionedMap, InfeasibleConstraints, OvfitError,
                     RankDeficient, SingularIVSystem, SingularKKT, SolveFailure)
from .mapping import BilinearMap, map_model, select_alpha, to_disk
from .realization import expansion_zeros
from .scaling import ChannelScaling, apply_scaling, compute_scaling, unscale_model

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("auto", "first", "sum_real", "monic")
IV_STARTS = ("best", "initial", "last")


@dataclass(frozen=True)
class EstimationOptions:
    den_order: int
    num_order: int | None = None
    max_sk: int = 20
    max_iv: int = 20
    tol_param: float = 1e-8
    tol_cost: float = 1e-10
    alpha: float | None = None
    column_scaling: bool = False
    use_iv: bool = True
    seed: int = 0
    constraints: ConstraintSet | None = None
    normalization: str = "auto"
    initial: str = "monomial"
    iv_start: str = "initial"
    scale_measurements: bool = True

    def __post_init__(self):
        if self.den_order < 0 or (self.num_order is not None and self.num_order < 0):
            raise ValueError("orders must be >= 0")
        if self.max_sk < 0 or self.max_iv < 0:
            raise ValueError("iteration caps must be >= 0")
        if self.tol_param <= 0 or self.tol_cost <= 0:
            raise ValueError("tolerances must be > 0")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.initial not in ("monomial", "lightly_damped"):
            raise ValueError("initial must be 'monomial' or 'lightly_damped'")
        if self.iv_start not in IV_STARTS:
            raise ValueError(f"iv_start must be one of {IV_STARTS}")

    @property
    def numerator_order(self) -> int:
        return self.den_order if self.num_order is None else self.num_order

    @property
    def basis_order(self) -> int:
        return max(self.den_order, self.numerator_order)


@dataclass(frozen=True, eq=False)
class IterationState:
    """One iterate: basis, stacked parameters ``[num_(0,0) .. num_(p-1,m-1), den]``."""

    basis: BasisSet
    theta: np.ndarray
    cost: float
    cond: float
    den_values: np.ndarray
    stage: str = "initial"


@dataclass(eq=False)
class Problem:
    """Everything the iteration steps need, computed once per run."""

    data: FrequencyResponseData  # scaled measurements
    bmap: BilinearMap
    q: np.ndarray
    weights: np.ndarray
    scaling: ChannelScaling
    layout: CoefficientLayout
    constraints: ConstraintSet  # user constraints + implicit order zeros
    normalization: str
    A_s: np.ndarray
    b_s: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    options: EstimationOptions
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def has_bounds(self) -> bool:
        return bool(np.any(np.isfinite(self.lo)) or np.any(np.isfinite(self.hi)))

    @property
    def needs_map(self) -> bool:
        return self.A_s.shape[0] > 0 or self.has_bounds


def prepare_problem(data: FrequencyResponseData, options: EstimationOptions) -> Problem:
    """Steps 1-2: choose alpha, map the points, scale the measurements, set up constraints."""
    alpha = options.alpha if options.alpha is not None else select_alpha(
        data.frequencies[0], data.frequencies[-1])
    bmap = BilinearMap(alpha)
    scaling = compute_scaling(data) if options.scale_measurements else ChannelScaling(
        np.ones((data.p, data.m)))
    scaled = apply_scaling(data, scaling)
    R = options.basis_order
    layout = CoefficientLayout(data.p, data.m, R)
    cs = options.constraints or ConstraintSet()
    user_cs = cs
    for k in range(options.numerator_order + 1, R + 1):
        for i in range(data.p):
            for j in range(data.m):
                if not cs.touches((num_key(i, j), k)):
                    cs = cs.fix(num_key(i, j), k, 0.0)
    for k in range(options.den_order + 1, R + 1):
        if not cs.touches((DEN, k)):
            cs = cs.fix(DEN, k, 0.0)
    norm = options.normalization
    if norm == "auto":
        norm = "first" if (user_cs.homogeneous and not user_cs.bounds) else "monic"
    if norm == "monic" and not cs.touches((DEN, options.den_order)):
        cs_mat = cs.fix(DEN, options.den_order, 1.0)
    else:
        cs_mat = cs
    A_s, b_s, lo, hi = materialize(cs_mat, layout)
    return Problem(scaled, bmap, to_disk(bmap, data.s), data.weight_vector(), scaling, layout,
                   cs, norm, A_s, b_s, lo, hi, options, np.random.default_rng(options.seed))


# --- regression assembly -------------------------------------------------------

def _stack(z):
    return np.concatenate([z.real, z.imag], axis=0)


def regression(basis: BasisSet, prob: Problem, phi=None):
    """Complex SK regressor: rows ``W [B(q) | -H B(q)]`` per frequency and channel."""
    lay = prob.layout
    phi = eval_basis(basis, prob.q) if phi is None else phi
    w = prob.weights[:, None]
    l = prob.q.size
    M = np.zeros((l * lay.p * lay.m, lay.size), dtype=complex)
    dsl = lay.den_slice()
    for i in range(lay.p):
        for j in range(lay.m):
            c = i * lay.m + j
            rows = slice(c * l, (c + 1) * l)
            M[rows, lay.num_slice(i, j)] = w * phi
            M[rows, dsl] = -w * prob.data.responses[:, i, j][:, None] * phi
    return M, phi


def equality_system(basis: BasisSet, prob: Problem, phi):
    """Normalisation row plus compiled s-domain constraints, and transported bound rows."""
    lay = prob.layout
    rows, rhs = [], []
    if prob.normalization == "first":
        row = np.zeros(lay.size)
        row[lay.den_slice().start] = 1.0
        rows.append(row)
        rhs.append(1.0)
    elif prob.normalization == "sum_real":
        row = np.zeros(lay.size)
        row[lay.den_slice()] = np.sum(phi.real, axis=0)
        nrm = np.linalg.norm(row)
        rows.append(row / nrm)
        rhs.append(1.0 / nrm)
    A = np.array(rows).reshape(-1, lay.size)
    b = np.array(rhs, dtype=float)
    G = lo = hi = None
    if prob.needs_map:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedMap)
            cmap = build_coefficient_map(basis, prob.bmap)
        gam = prob.scaling.factors.reshape(-1)
        A_q, b_q = compile_constraints(prob.A_s, prob.b_s, cmap, lay, gam)
        A = np.vstack([A, A_q])
        b = np.concatenate([b, b_q])
        if A.shape[0] and np.linalg.svd(A, compute_uv=False)[-1] <= 1e-10 * np.linalg.norm(A, 2):
            raise RankDeficient("normalisation conflicts with the constraints")
        if prob.has_bounds:
            sel = np.isfinite(prob.lo) | np.isfinite(prob.hi)
            G = block_map(cmap, lay, gam)[sel]
            lo, hi = prob.lo[sel], prob.hi[sel]
    return A, b, G, lo, hi


def model_values(basis: BasisSet, theta, prob: Problem, phi=None):
    """Responses ``N(q_i)/d(q_i)`` (scaled units) and denominator values."""
    lay = prob.layout
    phi = eval_basis(basis, prob.q) if phi is None else phi
    d = phi @ theta[lay.den_slice()]
    out = np.empty((prob.q.size, lay.p, lay.m), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(lay.p):
            for j in range(lay.m):
                out[:, i, j] = (phi @ theta[lay.num_slice(i, j)]) / d
    return out, d


def true_cost(hfit_scaled, prob: Problem) -> float:
    """Weighted cost in the original (unscaled) units."""
    r = (hfit_scaled - prob.data.responses) * prob.scaling.factors[None]
    val = np.sum(prob.weights ** 2 * np.sum(np.abs(r.reshape(r.shape[0], -1)) ** 2, axis=1))
    return float(val) if np.isfinite(val) else np.inf


def _solve_state(basis: BasisSet, prob: Problem, stage: str) -> IterationState:
    M, phi = regression(basis, prob)
    Mr = _stack(M)
    y = np.zeros(Mr.shape[0])
    A, b, G, lo, hi = equality_system(basis, prob, phi)
    colscale = prob.options.column_scaling
    if G is not None:
        theta, cond = solve_bounded_lls(Mr, y, A, b, G, lo, hi, colscale)
    else:
        theta, cond = solve_constrained_lls(Mr, y, A, b, colscale)
    hfit, d = model_values(basis, theta, prob, phi)
    return IterationState(basis, theta, true_cost(hfit, prob), cond, d, stage)


# --- stages --------------------------------------------------------------------

def lightly_damped_points(count: int, wmin: float, wmax: float, bmap: BilinearMap,
                          damping: float = 0.01) -> np.ndarray:
    """q-images of lightly damped s-poles log-spaced over ``[wmin, wmax]``."""
    if count <= 0:
        return np.zeros(0, dtype=complex)
    npair = count // 2
    wk = np.logspace(np.log10(wmin), np.log10(wmax), npair + 2)[1:-1] if npair else []
    s = []
    for w in wk:
        p = -damping * w + 1j * w * np.sqrt(1 - damping ** 2)
        s.extend([p, np.conj(p)])
    if count % 2:
        s.append(-np.sqrt(wmin * wmax))
    return to_disk(bmap, np.asarray(s, dtype=complex))


def initial_fit(prob: Problem) -> IterationState:
    """Step 3: one linear solve with denominator weight 1."""
    R = prob.options.basis_order
    if prob.options.initial == "lightly_damped":
        w = prob.data.frequencies
        pts = sanitize_points(lightly_damped_points(R, w[0], w[-1], prob.bmap))
        basis = BasisSet.orthonormal(pts)
    else:
        basis = BasisSet.monomial(R)
    return _solve_state(basis, prob, "initial")


def next_points(state: IterationState, prob: Problem) -> np.ndarray:
    """Zeros of the current denominator, refilled and sanitised for the next basis."""
    R = prob.options.basis_order
    den = state.theta[prob.layout.den_slice()]
    try:
        z = expansion_zeros(state.basis, den)
    except (DegenerateDenominator, np.linalg.LinAlgError):
        z = np.zeros(0, dtype=complex)
    z = z[np.isfinite(z)]
    if z.size < R:
        w = prob.data.frequencies
        z = np.concatenate([z, lightly_damped_points(R - z.size, w[0], w[-1], prob.bmap)])
    return sanitize_points(z[:R] if z.size > R else z)


def sk_step(state: IterationState, prob: Problem) -> IterationState:
    """Relocate the basis to the previous denominator zeros and solve the SK problem.

    The ``1/d^(k-1)`` weight is not applied: with the basis poles at the zeros
    of the previous denominator that weight is already absorbed.
    """
    basis = BasisSet.orthonormal(next_points(state, prob))
    return _solve_state(basis, prob, "sk")


def iv_step(state: IterationState, prob: Problem) -> IterationState:
    """One instrumental-variable step in the fixed basis of ``state``.

    Solves ``Re(Psi^H M) theta = 0`` (plus equalities), where ``M`` is the SK
    regressor and ``Psi`` the instrument matrix built from the previous model
    response, both divided by the previous denominator.  At a fixed point this
    is the gradient of the weighted output-error cost.
    """
    basis = state.basis
    M, phi = regression(basis, prob)
    lay = prob.layout
    hprev, dprev = model_values(basis, state.theta, prob, phi)
    if not np.all(np.isfinite(hprev)) or np.any(dprev == 0):
        raise SingularIVSystem("previous denominator vanishes at a data point")
    l = prob.q.size
    psi = M.copy()
    dsl = lay.den_slice()
    w = prob.weights[:, None]
    for i in range(lay.p):
        for j in range(lay.m):
            rows = slice((i * lay.m + j) * l, (i * lay.m + j + 1) * l)
            psi[rows, dsl] = -w * hprev[:, i, j][:, None] * phi
    inv_d = np.tile(1.0 / dprev, lay.p * lay.m)[:, None]
    Mr = _stack(M * inv_d)
    Pr = _stack(psi * inv_d)
    if not (np.all(np.isfinite(Mr)) and np.all(np.isfinite(Pr))):
        raise SingularIVSystem("instrumental-variable matrices are not finite")
    A, b, Gb, lo, hi = equality_system(basis, prob, phi)
    try:
        theta, cond = solve_iv_factored(Mr, Pr, A, b)
        if Gb is not None:
            theta, cond = _iv_bounds(theta, cond, Mr, Pr, A, b, Gb, lo, hi)
    except (SingularKKT, np.linalg.LinAlgError) as exc:
        raise SingularIVSystem(str(exc)) from exc
    hfit, d = model_values(basis, theta, prob, phi)
    return IterationState(basis, theta, true_cost(hfit, prob), cond, d, "iv")


def _iv_bounds(theta, cond, Mr, Pr, A, b, Gb, lo, hi):
    active_rows, active_vals = [], []
    for _ in range(Gb.shape[0]):
        g = Gb @ theta
        viol = np.maximum(lo - g, g - hi)
        k = int(np.argmax(viol))
        if viol[k] <= 1e-12 * max(1.0, abs(g[k])):
            break
        nrm = np.linalg.norm(Gb[k])
        active_rows.append(Gb[k] / nrm)
        active_vals.append((lo[k] if g[k] < lo[k] else hi[k]) / nrm)
        theta, cond = solve_iv_factored(Mr, Pr, np.vstack([A, active_rows]),
                                        np.concatenate([b, active_vals]))
    return theta, cond


def reexpress(state: IterationState, basis: BasisSet, prob: Problem) -> IterationState:
    """The same rational model written in another basis of the same order.

    Both bases map linearly to s-domain coefficients, so the new parameters
    are ``T_new^-1 T_old theta`` per block, renormalised to the active rule.
    """
    if basis is state.basis:
        return state
    lay = prob.layout
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedMap)
        old = build_coefficient_map(state.basis, prob.bmap)
        new = build_coefficient_map(basis, prob.bmap)
    theta = np.empty_like(state.theta)
    for blk in range(lay.p * lay.m + 1):
        sl = slice(blk * lay.block, (blk + 1) * lay.block)
        theta[sl] = np.linalg.solve(new.T_norm, old.T_norm @ state.theta[sl])
    phi = eval_basis(basis, prob.q)
    if prob.normalization == "first":
        theta = theta / theta[lay.den_slice().start]
    elif prob.normalization == "sum_real":
        theta = theta / np.sum(phi.real @ theta[lay.den_slice()])
    hfit, d = model_values(basis, theta, prob, phi)
    return replace(state, basis=basis, theta=theta, den_values=d, cost=true_cost(hfit, prob))


def _point_change(a, b) -> float:
    if a.size != b.size:
        return np.inf
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(np.max(cost[r, c]))


def _rel_change(new, old) -> float:
    return abs(new - old) / max(abs(old), np.finfo(float).tiny)


# --- model extraction ----------------------------------------------------------

def state_to_qmodel(state: IterationState, prob: Problem) -> RationalModel:
    """Zero-pole-gain model in the q-domain (scaled units), gain matched at q = j."""
    lay = prob.layout
    basis, theta = state.basis, state.theta
    poles = expansion_zeros(basis, theta[lay.den_slice()])
    ref = np.array([1j])
    phi = eval_basis(basis, ref)
    dref = (phi @ theta[lay.den_slice()])[0]
    zeros = [[np.zeros(0, dtype=complex)] * lay.m for _ in range(lay.p)]
    gains = np.zeros((lay.p, lay.m))
    for i in range(lay.p):
        for j in range(lay.m):
            n = theta[lay.num_slice(i, j)]
            if not np.any(n):
                continue
            z = expansion_zeros(basis, n)
            href = (phi @ n)[0] / dref
            shape = np.prod(ref[0] - z) / np.prod(ref[0] - poles)
            zeros[i][j] = z
            gains[i, j] = (href / shape).real
    return RationalModel(poles=poles, zeros=zeros, gains=gains, domain="q")


def state_to_coefficients(state: IterationState, prob: Problem):
    """s-domain coefficients (original units) through the exact linear map."""
    lay = prob.layout
    opts = prob.options
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedMap)
        cmap = build_coefficient_map(state.basis, prob.bmap)
    gam = prob.scaling.factors.reshape(-1)
    theta_s = block_map(cmap, lay, gam) @ state.theta
    den = theta_s[lay.den_slice()]
    if prob.normalization != "monic":
        lead = den[opts.den_order]
        if lead == 0:
            nz = np.flatnonzero(den)
            lead = den[nz[-1]] if nz.size else 1.0
        theta_s = theta_s / lead
    if prob.A_s.shape[0]:
        # remove rounding residue so the equalities hold exactly
        corr = np.linalg.lstsq(prob.A_s, prob.A_s @ theta_s - prob.b_s, rcond=None)[0]
        theta_s = theta_s - corr
        for k in np.flatnonzero(np.sum(prob.A_s != 0, axis=0) == 1):
            r = np.flatnonzero(prob.A_s[:, k])
            if np.count_nonzero(prob.A_s[r[0]]) == 1:
                theta_s[k] = prob.b_s[r[0]] / prob.A_s[r[0], k]
    num = np.stack([theta_s[lay.num_slice(i, j)] for i in range(lay.p) for j in range(lay.m)])
    num = num.reshape(lay.p, lay.m, -1)
    return num, theta_s[lay.den_slice()].copy()


def state_to_model(state: IterationState, prob: Problem) -> RationalModel:
    """Steps 7-9: s-domain model in original units with coefficient form attached."""
    if prob.needs_map:
        num, den = state_to_coefficients(state, prob)
        return RationalModel.from_coeffs(num, den, domain="s")
    qmodel = state_to_qmodel(state, prob)
    smodel = map_model(prob.bmap, qmodel, "q->s")
    return unscale_model(smodel, prob.scaling).with_coefficients()


# --- pipeline ------------------------------------------------------------------

@dataclass(eq=False)
class FitResult:
    model: RationalModel
    report: FitReport
    state: IterationState
    problem: Problem
    history: list


def run_pipeline(data: FrequencyResponseData, options: EstimationOptions):
    """Estimate an s-domain model; returns ``(model, report)``."""
    res = estimate(data, options)
    return res.model, res.report


def estimate(data: FrequencyResponseData, options: EstimationOptions) -> FitResult:
    """Full pipeline, also returning the best iterate and per-stage history."""
    with _stage("setup"):
        n_par = (data.p * data.m + 1) * (options.basis_order + 1)
        if n_par > 2 * data.l * data.p * data.m + 1:
            raise SolveFailure(f"{n_par} parameters exceed the "
                               f"{2 * data.l * data.p * data.m} real equations")
        prob = prepare_problem(data, options)
    report = FitReport(alpha=prob.bmap.alpha)
    history = []

    with _stage("initial fit"):
        state = initial_fit(prob)
    history.append(state)
    report.record("initial", state.cost, state.cond)
    best = state

    for k in range(options.max_sk):
        try:
            new = sk_step(state, prob)
        except (OvfitError, np.linalg.LinAlgError) as exc:
            report.messages.append(f"sk step {k + 1} failed: {exc}")
            logger.info("SK step %d failed: %s", k + 1, exc)
            if isinstance(exc, (InfeasibleConstraints, RankDeficient)):
                exc.stage = f"sk step {k + 1}"
                raise
            break
        report.iterations["sk"] += 1
        history.append(new)
        if report.record("sk", new.cost, new.cond):
            best = new
        done = _rel_change(new.cost, state.cost) < options.tol_cost
        if not done and state.stage == "sk":
            done = _point_change(new.basis.points, state.basis.points) < options.tol_param
        state = new
        if done:
            moved = _point_change(next_points(state, prob), state.basis.points)
            report.converged["sk"] = True
            logger.debug("SK converged after %d steps (point change %.3g)", k + 1, moved)
            break
    else:
        if options.max_sk and _point_change(next_points(state, prob), state.basis.points) < options.tol_param:
            report.converged["sk"] = True

    if options.use_iv and state.stage == "sk":
        final_basis = state.basis
        chosen = {"best": best, "initial": history[0], "last": state}[options.iv_start]
        starts = [chosen] + ([best] if best is not chosen else [])
        for n_try, start in enumerate(starts):
            # instruments come from the chosen model, written in the final SK basis
            try:
                state = reexpress(start, final_basis, prob)
            except (OvfitError, np.linalg.LinAlgError) as exc:
                report.messages.append(f"iv warm start failed: {exc}")
                continue
            best, done = _iv_loop(state, prob, options, report, history, best)
            if done or n_try == len(starts) - 1:
                break
            report.messages.append("iv restarted from the best state so far")

    with _stage("model conversion"):
        model = state_to_model(best, prob)
    return FitResult(model, report, best, prob, history)


@contextmanager
def _stage(name):
    # tag escaping errors with the pipeline stage for callers' messages
    try:
        yield
    except (OvfitError, np.linalg.LinAlgError) as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def _iv_loop(state, prob, options, report, history, best):
    """Run IV steps; returns ``(best, ran)`` where ``ran`` is False if the first step failed."""
    for k in range(options.max_iv):
        try:
            new = iv_step(state, prob)
        except (OvfitError, np.linalg.LinAlgError) as exc:
            report.messages.append(f"iv step {k + 1} failed: {exc}")
            logger.info("IV step %d failed: %s", k + 1, exc)
            return best, k > 0
        report.iterations["iv"] += 1
        history.append(new)
        if report.record("iv", new.cost, new.cond):
            best = new
        step = np.linalg.norm(new.theta - state.theta) / max(np.linalg.norm(state.theta), 1e-300)
        state = new
        if step < options.tol_param:
            report.converged["iv"] = True
            break
    return best, True


def condition_diagnostics(matrix, column_scaling: bool = False) -> float:
    """2-norm condition number, optionally after Euclidean column normalisation."""
    a = np.asarray(matrix)
    if a.size == 0:
        raise ValueError("empty matrix")
    if column_scaling:
        n = np.linalg.norm(a, axis=0)
        n[n == 0] = 1.0
        a = a / n
    sv = np.linalg.svd(a, compute_uv=False)
    return float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf

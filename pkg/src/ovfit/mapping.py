"""Bilinear map q(s) = (alpha + s) / (alpha - s) between the s-plane and the unit disk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrequencyResponseData, RationalModel, _zpk_ratio, eval_model
from .errors import BadRange, GainReferenceHit, MapSingularity, PointAtInfinity, PoleHit

GOLDEN = (1 + 5 ** 0.5) / 2
# q-roots closer than this to -1 are s-roots at infinity
INF_TOL = 1e-9


@dataclass(frozen=True)
class BilinearMap:
    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not np.isfinite(a) or a <= 0:
            raise BadRange(f"alpha must be finite and > 0, got {self.alpha}")
        object.__setattr__(self, "alpha", a)


def select_alpha(omega_min: float, omega_max: float) -> float:
    """Geometric mean of the band edges.

    This is the maximiser of the chord ``|q(j w_min) - q(j w_max)|``.
    """
    lo, hi = float(omega_min), float(omega_max)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo <= 0 or hi < lo:
        raise BadRange(f"need 0 < omega_min <= omega_max, got ({omega_min}, {omega_max})")
    return float(np.sqrt(lo * hi))


def to_disk(bmap: BilinearMap, s):
    s = np.asarray(s, dtype=complex)
    a = bmap.alpha
    if np.any(np.abs(a - s) <= 1e-15 * a):
        raise MapSingularity("s = alpha has no image")
    q = (a + s) / (a - s)
    return q if q.ndim else complex(q)


def from_disk(bmap: BilinearMap, q):
    q = np.asarray(q, dtype=complex)
    if np.any(np.abs(q + 1) <= 1e-15):
        raise PointAtInfinity("q = -1 is the image of s = infinity")
    s = bmap.alpha * (q - 1) / (q + 1)
    return s if s.ndim else complex(s)


def map_data(bmap: BilinearMap, data: FrequencyResponseData) -> np.ndarray:
    """Unit-circle images of the measurement points ``j w_i``."""
    return to_disk(bmap, data.s)


def _transport(bmap, roots, direction):
    """Map roots pointwise; return finite images and the number dropped at infinity."""
    roots = np.asarray(roots, dtype=complex)
    a = bmap.alpha
    if direction == "s->q":
        inf = np.abs(roots - a) <= INF_TOL * a
        fin = roots[~inf]
        return (a + fin) / (a - fin), int(inf.sum())
    inf = np.abs(roots + 1) <= INF_TOL
    fin = roots[~inf]
    return a * (fin - 1) / (fin + 1), int(inf.sum())


def map_model(bmap: BilinearMap, model: RationalModel, direction: str) -> RationalModel:
    """Transport a zpk model across the bilinear map.

    Each finite factor maps to a finite factor (or a constant when the root
    goes to infinity).  The change of variable leaves a factor
    ``(a - s)^(np - nz)`` (s side) or ``(q + 1)^(np - nz)`` (q side), so the
    surplus appears as extra zeros at ``s = alpha`` or ``q = -1``.  The gain is
    re-fitted so that both models agree at ``s = j alpha`` (``q = j``).
    """
    if direction not in ("s->q", "q->s"):
        raise ValueError(f"unknown direction {direction!r}")
    src, dst = ("s", "q") if direction == "s->q" else ("q", "s")
    if model.domain != src:
        raise ValueError(f"model is in the {model.domain}-domain, expected {src}")
    a = bmap.alpha
    extra_root = -1.0 if direction == "s->q" else a

    poles, _ = _transport(bmap, model.poles, direction)
    npole = model.poles.size
    live = [(i, j) for i in range(model.p) for j in range(model.m) if model.gains[i, j] != 0]
    # every source root contributes one 1/(q + 1) (or 1/(a - s)) factor
    extra_poles = max([model.zeros[i][j].size - npole for i, j in live] + [0])
    poles = np.concatenate([poles, np.full(extra_poles, extra_root, dtype=complex)])
    zeros_grid = [[np.zeros(0, dtype=complex)] * model.m for _ in range(model.p)]
    for i, j in live:
        z, _ = _transport(bmap, model.zeros[i][j], direction)
        surplus = npole - model.zeros[i][j].size + extra_poles
        zeros_grid[i][j] = np.concatenate([z, np.full(surplus, extra_root, dtype=complex)])

    ref_src = 1j * a if src == "s" else 1j
    ref_dst = 1j if dst == "q" else 1j * a
    gains = np.zeros((model.p, model.m))
    for attempt in range(4):
        try:
            h_ref = eval_model(model, [ref_src])[0]
            if poles.size and np.min(np.abs(ref_dst - poles)) <= 1e-12 * max(1.0, abs(ref_dst)):
                raise GainReferenceHit("pole at gain reference point")
            break
        except (PoleHit, GainReferenceHit) as exc:
            if attempt == 3:
                raise GainReferenceHit("no usable gain reference point") from exc
            ref_src = ref_src * GOLDEN
            ref_dst = to_disk(bmap, ref_src) if dst == "q" else from_disk(bmap, ref_src)
    for i, j in live:
        shape = _zpk_ratio(np.array([ref_dst]), zeros_grid[i][j], poles)[0]
        gains[i, j] = (h_ref[i, j] / shape).real
    return RationalModel(poles=poles, zeros=zeros_grid, gains=gains, domain=dst)

"""Condition numbers of one SK least-squares matrix across basis and domain choices.

Setup: a modal test model, unit weights, previous denominator 1, first
denominator parameter fixed to 1, and basis points at the true poles (mapped
to the disk for the q-domain).  These are the points a converged SK run would
use, so the numbers reflect the accuracy of the final step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, eval_basis, sanitize_points
from .datagen import ModalModelSpec, NoiseSpec, log_frequencies, modal_model, sample_with_noise
from .mapping import BilinearMap, select_alpha, to_disk
from .scaling import apply_scaling, compute_scaling
from .solver import condition_diagnostics

BASES = ("monomial", "barycentric", "orthonormal")
DOMAINS = ("s", "q")


@dataclass(frozen=True)
class BenchRow:
    basis: str
    domain: str
    column_scaling: bool
    cond: float

    def to_dict(self) -> dict:
        return {"basis": self.basis, "domain": self.domain,
                "column_scaling": self.column_scaling, "cond": self.cond}


def sk_matrix(basis: BasisSet, points, responses) -> np.ndarray:
    """Real-stacked ``[B(x), -H B_1..r(x)]``; the d_0 column is on the right-hand side."""
    phi = eval_basis(basis, points)
    h = np.asarray(responses, dtype=complex).reshape(-1, 1)
    m = np.hstack([phi, -h * phi[:, 1:]])
    return np.vstack([m.real, m.imag])


def conditioning_table(seed: int = 0, modes: int = 10, points: int = 700, fmin: float = 0.1,
                       fmax: float = 1e6, bases=BASES, domains=DOMAINS,
                       column_scaling=(False, True), scale_measurements: bool = False,
                       noise: bool = False) -> list:
    """Condition numbers for every requested (basis, domain, column scaling) combination.

    ``orthonormal`` is defined on the disk only and is skipped for the s-domain.
    """
    spec = ModalModelSpec(modes=modes, seed=seed)
    model = modal_model(spec)
    w = log_frequencies(fmin, fmax, points)
    data = sample_with_noise(model, w, NoiseSpec(seed=seed) if noise else None)
    if scale_measurements:
        data = apply_scaling(data, compute_scaling(data))
    h = data.responses[:, 0, 0]
    bmap = BilinearMap(select_alpha(w[0], w[-1]))
    poles = model.poles
    rows = []
    for dom in domains:
        if dom not in DOMAINS:
            raise ValueError(f"unknown domain {dom!r}")
        x = 1j * w if dom == "s" else to_disk(bmap, 1j * w)
        lam = poles if dom == "s" else to_disk(bmap, poles)
        for kind in bases:
            if kind == "monomial":
                basis = BasisSet.monomial(poles.size)
            elif kind == "barycentric":
                basis = BasisSet.barycentric(lam)
            elif kind == "orthonormal":
                if dom == "s":
                    continue
                basis = BasisSet.orthonormal(sanitize_points(lam))
            else:
                raise ValueError(f"unknown basis {kind!r}")
            mat = sk_matrix(basis, x, h)
            for cs in column_scaling:
                rows.append(BenchRow(kind, dom, bool(cs), condition_diagnostics(mat, bool(cs))))
    return rows


def format_table(rows) -> str:
    lines = [f"{'basis':<12} {'domain':<6} {'colscale':<8} {'cond':>12}"]
    for r in rows:
        lines.append(f"{r.basis:<12} {r.domain:<6} {'on' if r.column_scaling else 'off':<8} {r.cond:>12.3e}")
    return "\n".join(lines)

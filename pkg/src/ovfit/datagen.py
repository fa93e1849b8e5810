"""Synthetic models and noisy frequency response samples.

The modal generator draws ``G(s) = sum r_k w_k^2 / (s^2 + 2 z_k w_k s + w_k^2)``
with lightly damped modes; the fixed grey-box model has an integrator and
relative degree 3.  Noise is multiplicative, ``H = G (1 + n1 exp(j n2))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import FrequencyResponseData, RationalModel, eval_model


@dataclass(frozen=True)
class ModalModelSpec:
    """Modal parameters; any field left as ``None`` is drawn from the default ranges."""

    modes: int = 10
    residues: tuple | None = None
    frequencies: tuple | None = None
    dampings: tuple | None = None
    residue_range: tuple = (0.1, 10.0)
    frequency_range: tuple = (1.0, 10 ** 5.5)
    damping_range: tuple = (0.005, 0.05)
    seed: int = 0

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("need at least one mode")
        for name in ("residues", "frequencies", "dampings"):
            v = getattr(self, name)
            if v is not None and len(v) != self.modes:
                raise ValueError(f"{name} must have {self.modes} entries")
        if self.frequencies is not None and min(self.frequencies) <= 0:
            raise ValueError("natural frequencies must be > 0")
        if self.dampings is not None and not all(0 < z < 1 for z in self.dampings):
            raise ValueError("dampings must lie in (0, 1)")

    def draw(self):
        """``(r, w, zeta)`` arrays, drawing unspecified ones from the seeded generator."""
        rng = np.random.default_rng(self.seed)
        k = self.modes
        r = rng.uniform(*self.residue_range, k) * rng.choice([-1.0, 1.0], k)
        lw = rng.uniform(np.log10(self.frequency_range[0]), np.log10(self.frequency_range[1]), k)
        z = rng.uniform(*self.damping_range, k)
        if self.residues is not None:
            r = np.asarray(self.residues, dtype=float)
        w = 10.0 ** lw if self.frequencies is None else np.asarray(self.frequencies, dtype=float)
        if self.dampings is not None:
            z = np.asarray(self.dampings, dtype=float)
        return r, w, z


@dataclass(frozen=True)
class NoiseSpec:
    var_n1: float = 0.01
    var_n2: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.var_n1 < 0 or self.var_n2 < 0:
            raise ValueError("variances must be >= 0")

    @classmethod
    def from_snr_db(cls, snr_db: float, seed: int = 0) -> "NoiseSpec":
        """Both variances set to ``10^(-snr/10)`` (20 dB gives 0.01)."""
        v = 10.0 ** (-snr_db / 10.0)
        return cls(v, v, seed)


def modal_model(spec: ModalModelSpec) -> RationalModel:
    """Order-2K sum of second-order modes in zero-pole-gain form.

    The zeros are the finite generalised eigenvalues of the system pencil of
    the block-diagonal modal realisation.
    """
    r, w, z = spec.draw()
    k = r.size
    poles = []
    A = np.zeros((2 * k, 2 * k))
    B = np.zeros(2 * k)
    C = np.zeros(2 * k)
    for i in range(k):
        wd = w[i] * np.sqrt(1 - z[i] ** 2)
        p = -z[i] * w[i] + 1j * wd
        poles.extend([p, np.conj(p)])
        # frequency-scaled block of r w^2 / (s^2 + 2 z w s + w^2); entries are O(w)
        A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [[0.0, w[i]], [-w[i], -2 * z[i] * w[i]]]
        B[2 * i + 1] = 1.0
        C[2 * i] = r[i] * w[i]
    zeros = _ss_zeros(A, B, C)
    poles = np.asarray(poles)
    # gain from the modal sum at a point away from every pole and zero
    s0 = 1j * np.sqrt(w.min() * w.max()) * 1.2345
    g0 = np.sum(r * w ** 2 / (s0 ** 2 + 2 * z * w * s0 + w ** 2))
    shape = np.prod(s0 - zeros) / np.prod(s0 - poles)
    return RationalModel(poles=poles, zeros=zeros, gains=np.array([[(g0 / shape).real]]), domain="s")


def modal_response(spec: ModalModelSpec, s) -> np.ndarray:
    """Direct evaluation of the modal sum (no root finding)."""
    r, w, z = spec.draw()
    s = np.asarray(s, dtype=complex)[..., None]
    return np.sum(r * w ** 2 / (s ** 2 + 2 * z * w * s + w ** 2), axis=-1)


def _ss_zeros(A, B, C):
    n = A.shape[0]
    sys = np.block([[A, B[:, None]], [C[None, :], np.zeros((1, 1))]])
    e = np.zeros((n + 1, n + 1))
    e[:n, :n] = np.eye(n)
    al, be = linalg.eigvals(sys, e, homogeneous_eigvals=True)
    fin = np.abs(be) > 1e-9 * np.abs(al)
    zs = al[fin] / be[fin]
    zs = zs[np.isfinite(zs)]
    # restore exact conjugate symmetry
    real = np.abs(zs.imag) <= 1e-8 * np.abs(zs)
    upper = zs[~real & (zs.imag > 0)]
    return np.concatenate([zs[real].real, upper, upper.conj()]).astype(complex)


def fixed_model_4_2() -> RationalModel:
    """Grey-box test system with an integrator and relative degree 3."""
    num = np.array([5e10, 4.8e7, 1.2e8])
    den = np.array([0.0, 1.6e9, 1.7e6, 4e6, 200.0, 1.0])
    return RationalModel.from_coeffs(num.reshape(1, 1, -1), den, domain="s")


def sample_with_noise(model: RationalModel, frequencies, noise: NoiseSpec | None = None,
                      ) -> FrequencyResponseData:
    """``H_i = G(j w_i) (1 + n1_i exp(j n2_i))`` with Gaussian ``n1``, ``n2``."""
    w = np.asarray(frequencies, dtype=float)
    h = eval_model(model, 1j * w)
    noise = NoiseSpec(0.0, 0.0) if noise is None else noise
    rng = np.random.default_rng(noise.seed)
    shape = h.shape
    n1 = rng.normal(0.0, np.sqrt(noise.var_n1), shape)
    n2 = rng.normal(0.0, np.sqrt(noise.var_n2), shape)
    return FrequencyResponseData(w, h * (1 + n1 * np.exp(1j * n2)))


def log_frequencies(fmin: float, fmax: float, count: int) -> np.ndarray:
    if not (0 < fmin < fmax) or count < 2:
        raise ValueError("need 0 < fmin < fmax and at least 2 points")
    return np.logspace(np.log10(fmin), np.log10(fmax), count)

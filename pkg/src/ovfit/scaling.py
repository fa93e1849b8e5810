"""Per-channel magnitude scaling of measurements and its reversal on models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrequencyResponseData, RationalModel
from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class ChannelScaling:
    factors: np.ndarray  # (p, m), strictly positive

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=float)
        if f.ndim != 2 or not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("scale factors must be a finite positive (p, m) matrix")
        f.setflags(write=False)
        object.__setattr__(self, "factors", f)


def compute_scaling(data: FrequencyResponseData) -> ChannelScaling:
    """gamma_ij = sqrt(max_t |H_t(i,j)| * min_t |H_t(i,j)|) over nonzero samples."""
    mag = np.abs(data.responses)
    factors = np.ones((data.p, data.m))
    for i in range(data.p):
        for j in range(data.m):
            nz = mag[:, i, j][mag[:, i, j] > 0]
            if nz.size:
                # geometric mean written to avoid overflow of max * min
                factors[i, j] = np.sqrt(nz.max()) * np.sqrt(nz.min())
    return ChannelScaling(factors)


def apply_scaling(data: FrequencyResponseData, scaling: ChannelScaling) -> FrequencyResponseData:
    if scaling.factors.shape != (data.p, data.m):
        raise DimensionMismatch("scaling does not match data channels")
    return FrequencyResponseData(data.frequencies, data.responses / scaling.factors[None],
                                 data.weights)


def unscale_model(model: RationalModel, scaling: ChannelScaling) -> RationalModel:
    f = scaling.factors
    if f.shape != (model.p, model.m):
        raise DimensionMismatch("scaling does not match model channels")
    num = None if model.num is None else model.num * f[:, :, None]
    return RationalModel(model.poles, model.zeros, model.gains * f, model.domain, num, model.den)

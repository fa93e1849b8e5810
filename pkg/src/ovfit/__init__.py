"""Rational transfer function estimation from frequency response data.

Sanathanan-Koerner and instrumental-variable iterations over orthonormal
rational bases on the unit disk, with bilinear domain mapping, measurement
scaling and affine coefficient constraints for grey-box models.
"""

__version__ = "0.1.0"

from .basis import BasisSet, eval_basis, gram_matrix
from .constraints import DEN, ConstraintSet, num_key
from .core import FitReport, FrequencyResponseData, RationalModel, eval_model, nls_cost, nrmse_fit
from .datagen import ModalModelSpec, NoiseSpec, fixed_model_4_2, modal_model, sample_with_noise
from .mapping import BilinearMap, from_disk, select_alpha, to_disk
from .solver import EstimationOptions, FitResult, estimate, run_pipeline

__all__ = [
    "BasisSet", "BilinearMap", "ConstraintSet", "DEN", "EstimationOptions", "FitReport",
    "FitResult", "FrequencyResponseData", "ModalModelSpec", "NoiseSpec", "RationalModel",
    "estimate", "eval_basis", "eval_model", "fixed_model_4_2", "from_disk", "gram_matrix",
    "modal_model", "nls_cost", "nrmse_fit", "num_key", "run_pipeline", "sample_with_noise",
    "select_alpha", "to_disk", "__version__",
]

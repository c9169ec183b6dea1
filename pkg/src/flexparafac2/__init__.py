"""Nonnegative flexible PARAFAC2 and the classic PARAFAC2 ALS baseline."""
from .classic import run_classic
from .flexible import MuPhase, MuState, run_flexible
from .init import random_init
from .linalg import get_backend, khatri_rao, nnls, procrustes, set_backend
from .metrics import align_columns, relative_B_error, relative_fit
from .synth import SynthGroundTruth, SynthSpec, gen_dataset
from .tensor import (
    Parafac2Error,
    Parafac2Factors,
    RaggedTensor,
    RunReport,
    SolverConfig,
    Termination,
    fit_residuals,
    normalize_columns,
    reconstruct_slice,
    validate,
)

__version__ = "0.1.0"

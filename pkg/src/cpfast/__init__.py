"""Fast damped Gauss-Newton CP tensor decomposition toolkit."""

from .tensor import (
    COMPLEX,
    DenseTensor,
    REAL,
    ScalarKindError,
    fold,
    hadamard,
    khatri_rao,
    khatri_rao_excl,
    kronecker,
    unfold,
    vectorize,
)
from .kruskal import (
    GramCache,
    KruskalModel,
    build_gram_cache,
    gradient,
    mttkrp,
    reconstruct,
    relative_error,
)
from .hessian import (
    OracleSizeError,
    SingularKernelError,
    StructuredInverse,
    fast_damped_inverse,
    phi_density,
)
from .solver import FitConfig, FitResult, fit
from .complexcp import as_complex, complex_model, fit_complex
from .synth import (
    CollinearSpec,
    SpectrumReport,
    add_noise,
    collinearity_angles,
    gen_collinear,
    medsae,
    spectrum,
)
from .cptn import read_tensor, write_tensor
from .bench import RunRecord, run_grid, run_single
from .verify import run_suite

__version__ = "0.1.0"

__all__ = [
    "COMPLEX",
    "CollinearSpec",
    "DenseTensor",
    "FitConfig",
    "FitResult",
    "GramCache",
    "KruskalModel",
    "OracleSizeError",
    "REAL",
    "RunRecord",
    "ScalarKindError",
    "SingularKernelError",
    "SpectrumReport",
    "StructuredInverse",
    "add_noise",
    "as_complex",
    "build_gram_cache",
    "collinearity_angles",
    "complex_model",
    "fast_damped_inverse",
    "fit",
    "fit_complex",
    "fold",
    "gen_collinear",
    "gradient",
    "hadamard",
    "khatri_rao",
    "khatri_rao_excl",
    "kronecker",
    "medsae",
    "mttkrp",
    "phi_density",
    "read_tensor",
    "reconstruct",
    "relative_error",
    "run_grid",
    "run_single",
    "run_suite",
    "spectrum",
    "unfold",
    "vectorize",
    "write_tensor",
]

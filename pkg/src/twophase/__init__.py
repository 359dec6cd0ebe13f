"""Two-phase salt-and-pepper noise removal.

Phase one flags impulse pixels with an adaptive median filter; phase two
restores only those pixels by minimizing a smooth edge-preserving functional
with relaxation sweeps, Newton-MINRES or nonlinear CG under continuation on
the smoothing parameter.
"""

from .amf_detector import AmfConfig, NoiseMask, adaptive_median, mask_index_of
from .functional import (
    PotentialParams,
    RestorationState,
    SparseSymSystem,
    cost,
    gradient,
    newton_system,
    phi,
    phi_d1,
    phi_d2,
    scalar_derivs,
)
from .image_core import GrayImage, load_pgm, neighborhood, save_pgm
from .linear_solver import MinresConfig, matvec, minres_solve
from .metrics import QualityReport, mse, psnr
from .noise_model import NoiseSpec, corrupt, noise_ratio
from .restoration import (
    METHODS,
    ContinuationSchedule,
    SolverReport,
    StopCriteria,
    newton_minres_step,
    nonlinear_cg,
    relax_sweep,
    restore,
)

__version__ = "0.1.0"

"""Propagation-based X-ray phase-contrast imaging and tomography.

Simulation of Fresnel diffraction from sphere phantoms, linear and
maximum-likelihood phase retrieval, filtered back projection, and image
quality metrics.
"""

from .analysis import (
    MtfCurve,
    RegionMask,
    background_subtract,
    mtf_from_disc,
    nrmse,
    ssim,
    unwrap_phase,
)
from .core import (
    HC_EV_M,
    DomainError,
    MaterialModel,
    NumericalFailure,
    ScanGeometry,
    StackFormatError,
    ValidationError,
    XpctError,
    energy_from_wavelength,
    fresnel_number,
    wavelength_from_energy,
)
from .fresnel import (
    PaddingSpec,
    TransferFunction,
    build_transfer,
    constrained_field,
    default_padding,
    forward_constrained,
    forward_unconstrained,
    propagate,
    transfers_for_geometry,
)
from .lbfgs import IterationRecord, SolverSettings, SolveTrace, lbfgs_minimize
from .linpr import CtfRegularization, ctf_retrieve, normalize, paganin_retrieve
from .nlpr import (
    CONSTRAINT_MODES,
    ConstraintParams,
    choose_constraint,
    cnlpr_retrieve,
    gradient_constrained,
    gradient_unconstrained,
    objective_constrained,
    objective_unconstrained,
    unlpr_retrieve,
)
from .stackio import KINDS, ImageStack, load_stack, save_stack
from .tomo import (
    Phantom,
    Sphere,
    block_average,
    evenly_spaced_angles,
    fbp_reconstruct,
    load_phantom,
    project_phantom,
    save_phantom,
    simulate_scan,
    voxelize_phantom,
)

__version__ = "0.1.0"

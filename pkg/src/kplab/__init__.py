"""Numerical laboratory for the random Kronig-Penney operator.

The operator is ``-d^2/dx^2 + sum_n v_n delta(x - n)`` on the line with
i.i.d. couplings ``v_n``.  The package builds its transfer-matrix
cocycle and everything the cocycle controls: Lyapunov exponents and
their critical scaling near the band-touching energies ``(pi l)^2``,
node counts and the integrated density of states, half-line
Weyl-Titchmarsh data and Green kernels, time-averaged transport
moments, and the deviation estimates behind the norm bounds.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .ensemble import DisorderModel, Moments, Realization, sample
from .transfer import (
    Band,
    ScaledProduct,
    band_edges,
    critical_energy,
    discriminant,
    free_propagator,
    interval_product,
    jump_matrix,
    site_matrix,
    transfer_between,
)
from .prufer import (
    CriticalEnergy,
    ELLIPTIC,
    HYPERBOLIC,
    PruferTrajectory,
    act_on_circle,
    birkhoff_sum,
    trajectory,
)
from .lyapunov import (
    ConvergenceError,
    LyapunovEstimate,
    RotationEstimate,
    ScalingFit,
    estimate_lyapunov,
    estimate_lyapunov_critical,
    fit_scaling,
    idos_from_rotation,
    rotation_number,
)
from .spectral import (
    FiniteBox,
    IdosEstimate,
    box_green,
    count_nodes,
    eigen_solve,
    idos_direct,
    vanhove_fit,
)
from .weyl import (
    GreenEvaluation,
    MFunctionPair,
    TruncationError,
    free_m,
    green_kernel,
    m_function,
    m_pair,
    solution_eval,
)
from .transport import (
    DeviationReport,
    MomentCurve,
    MomentEstimate,
    NormControlReport,
    bound_exponent,
    growth_exponent,
    kernel_mass_ratio,
    martingale_deviation,
    moment_curve,
    moment_estimate,
    norm_control_check,
    schedule,
    two_vector_check,
)

__all__ = [
    "__version__",
    "DisorderModel", "Moments", "Realization", "sample",
    "Band", "ScaledProduct", "band_edges", "critical_energy",
    "discriminant", "free_propagator", "interval_product", "jump_matrix",
    "site_matrix", "transfer_between",
    "CriticalEnergy", "ELLIPTIC", "HYPERBOLIC", "PruferTrajectory",
    "act_on_circle", "birkhoff_sum", "trajectory",
    "ConvergenceError", "LyapunovEstimate", "RotationEstimate", "ScalingFit",
    "estimate_lyapunov", "estimate_lyapunov_critical", "fit_scaling",
    "idos_from_rotation", "rotation_number",
    "FiniteBox", "IdosEstimate", "box_green", "count_nodes", "eigen_solve",
    "idos_direct", "vanhove_fit",
    "GreenEvaluation", "MFunctionPair", "TruncationError", "free_m",
    "green_kernel", "m_function", "m_pair", "solution_eval",
    "DeviationReport", "MomentCurve", "MomentEstimate", "NormControlReport",
    "bound_exponent", "growth_exponent", "kernel_mass_ratio",
    "martingale_deviation", "moment_curve", "moment_estimate",
    "norm_control_check", "schedule", "two_vector_check",
]
